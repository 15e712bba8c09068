#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "aoi/error.hpp"
#include "aoi/random.hpp"

namespace aoi {

// One fading state. `index` is the 1-based label used in files and reports;
// code addresses states by their 0-based position.
struct ChannelState {
  int index = 1;
  double success_prob = 0.0;
};

namespace detail {

inline void check_success_probs(const std::vector<double>& p) {
  if (p.empty()) throw InvalidConfig("channel needs at least one state");
  for (double x : p)
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidConfig("success probability outside [0,1]");
}

inline void check_distribution(std::span<const double> q, double tol, const char* what) {
  double sum = 0.0;
  for (double x : q) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw InvalidConfig(std::string(what) + " has a negative or non-finite entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tol)
    throw InvalidConfig(std::string(what) + " does not sum to 1");
}

// Positions sorted by descending success probability; ties keep input order.
inline std::vector<std::size_t> descending_order(const std::vector<double>& p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return order;
}

}  // namespace detail

// Dense row-major square matrix, just enough for channel transition powers.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * n_, n_}; }

  friend SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b) {
    SquareMatrix out(a.n_);
    for (std::size_t i = 0; i < a.n_; ++i)
      for (std::size_t k = 0; k < a.n_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < a.n_; ++j) out(i, j) += aik * b(k, j);
      }
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Channel whose state is redrawn independently every slot.
class IidChannel {
 public:
  IidChannel(std::vector<double> success_probs, std::vector<double> occurrence_probs)
      : p_(std::move(success_probs)), q_(std::move(occurrence_probs)) {
    detail::check_success_probs(p_);
    if (q_.size() != p_.size()) throw InvalidConfig("occurrence vector length differs from state count");
    detail::check_distribution(q_, 1e-12, "occurrence_probs");
    order_ = detail::descending_order(p_);
  }

  std::size_t num_states() const { return p_.size(); }
  double success(std::size_t c) const { return p_[c]; }
  double occurrence(std::size_t c) const { return q_[c]; }
  const std::vector<double>& success_probs() const { return p_; }
  const std::vector<double>& occurrence_probs() const { return q_; }
  ChannelState state(std::size_t c) const { return {static_cast<int>(c) + 1, p_[c]}; }
  // Positions ordered best channel first.
  const std::vector<std::size_t>& by_descending_success() const { return order_; }

  double mean_success() const {
    return std::inner_product(p_.begin(), p_.end(), q_.begin(), 0.0);
  }

 private:
  std::vector<double> p_;
  std::vector<double> q_;
  std::vector<std::size_t> order_;
};

// Finite-state Markov fading channel with row-stochastic transition matrix.
class MarkovChannel {
 public:
  MarkovChannel(std::vector<double> success_probs, SquareMatrix transition)
      : p_(std::move(success_probs)), q_(std::move(transition)) {
    detail::check_success_probs(p_);
    if (q_.size() != p_.size()) throw InvalidConfig("transition matrix size differs from state count");
    for (std::size_t i = 0; i < q_.size(); ++i)
      detail::check_distribution(q_.row(i), 1e-12, "transition matrix row");
    order_ = detail::descending_order(p_);
  }

  MarkovChannel(std::vector<double> success_probs, const std::vector<std::vector<double>>& rows)
      : MarkovChannel(std::move(success_probs), from_rows(rows)) {}

  std::size_t num_states() const { return p_.size(); }
  double success(std::size_t c) const { return p_[c]; }
  const std::vector<double>& success_probs() const { return p_; }
  const SquareMatrix& transition() const { return q_; }
  ChannelState state(std::size_t c) const { return {static_cast<int>(c) + 1, p_[c]}; }
  const std::vector<std::size_t>& by_descending_success() const { return order_; }

  // Q^tau by repeated squaring.
  SquareMatrix power(int tau) const {
    SquareMatrix result = SquareMatrix::identity(q_.size());
    SquareMatrix base = q_;
    for (unsigned e = static_cast<unsigned>(tau); e != 0; e >>= 1) {
      if (e & 1u) result = result * base;
      if (e > 1) base = base * base;
    }
    return result;
  }

 private:
  static SquareMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    SquareMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw InvalidConfig("transition matrix is not square");
      for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  std::vector<double> p_;
  SquareMatrix q_;
  std::vector<std::size_t> order_;
};

// Row c_prev of Q^tau: distribution of the channel tau slots after it was
// observed in state c_prev.
inline std::vector<double> tau_step_distribution(const MarkovChannel& ch, std::size_t c_prev, int tau) {
  if (tau < 1) throw std::invalid_argument("tau_step_distribution: tau must be >= 1");
  const SquareMatrix qt = ch.power(tau);
  auto row = qt.row(c_prev);
  return {row.begin(), row.end()};
}

// Precomputed rows of Q^tau for tau = 1..max_tau. Powers are assembled from
// memoized Q^(2^k) factors; the table is immutable once built.
class TauStepTable {
 public:
  TauStepTable(const MarkovChannel& ch, int max_tau) : m_(ch.num_states()), max_tau_(max_tau) {
    if (max_tau < 1) throw std::invalid_argument("TauStepTable: max_tau must be >= 1");
    std::vector<SquareMatrix> dyadic{ch.transition()};
    while ((1 << dyadic.size()) <= max_tau) dyadic.push_back(dyadic.back() * dyadic.back());
    rows_.resize(static_cast<std::size_t>(max_tau) * m_ * m_);
    for (int tau = 1; tau <= max_tau; ++tau) {
      SquareMatrix acc = SquareMatrix::identity(m_);
      for (std::size_t k = 0; k < dyadic.size(); ++k)
        if (tau & (1 << k)) acc = acc * dyadic[k];
      for (std::size_t i = 0; i < m_; ++i)
        for (std::size_t j = 0; j < m_; ++j) rows_[index(tau, i) + j] = acc(i, j);
    }
  }

  int max_tau() const { return max_tau_; }
  std::span<const double> row(int tau, std::size_t c_prev) const {
    return {rows_.data() + index(tau, c_prev), m_};
  }

 private:
  std::size_t index(int tau, std::size_t c) const {
    return (static_cast<std::size_t>(tau - 1) * m_ + c) * m_;
  }
  std::size_t m_;
  int max_tau_;
  std::vector<double> rows_;
};

inline ChannelState draw_state(const IidChannel& ch, Rng& rng) {
  return ch.state(categorical(rng, ch.occurrence_probs()));
}

inline ChannelState draw_state(const MarkovChannel& ch, std::size_t current, Rng& rng) {
  return ch.state(categorical(rng, ch.transition().row(current)));
}

// Packet delivery indicator r for a transmission in the given state.
inline bool sample_success(const ChannelState& s, Rng& rng) { return bernoulli(rng, s.success_prob); }

}  // namespace aoi
