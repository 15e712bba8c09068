#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "aoi/channel.hpp"
#include "aoi/error.hpp"
#include "aoi/random.hpp"

namespace aoi {

// Finite-support distribution of energy packets arriving in one slot.
class ArrivalDistribution {
 public:
  ArrivalDistribution(std::vector<int> support, std::vector<double> probs)
      : support_(std::move(support)), probs_(std::move(probs)) {
    if (support_.empty() || support_.size() != probs_.size())
      throw InvalidConfig("arrival support and probabilities must be non-empty and equal length");
    for (int a : support_)
      if (a < 0) throw InvalidConfig("arrival support must be nonnegative");
    detail::check_distribution(probs_, 1e-12, "arrival probs");
    mean_ = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) mean_ += support_[i] * probs_[i];
    if (!(mean_ > 0.0)) throw InvalidConfig("arrival mean lambda must be > 0");
  }

  static ArrivalDistribution bernoulli(double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidConfig("Bernoulli rate must be in (0,1]");
    return ArrivalDistribution({0, 1}, {1.0 - lambda, lambda});
  }

  const std::vector<int>& support() const { return support_; }
  const std::vector<double>& probs() const { return probs_; }
  double mean() const { return mean_; }

 private:
  std::vector<int> support_;
  std::vector<double> probs_;
  double mean_ = 0.0;
};

enum class Harvest : int { kHarvesting = 0, kIdle = 1 };  // H_1, H_2

// Two-state harvesting / non-harvesting chain gating the arrivals.
struct HarvestChain {
  double h12 = 0.0;  // H_1 -> H_2
  double h21 = 0.0;  // H_2 -> H_1

  HarvestChain() = default;
  HarvestChain(double to_idle, double to_harvesting) : h12(to_idle), h21(to_harvesting) {
    if (!(h12 >= 0.0 && h12 <= 1.0) || !(h21 >= 0.0 && h21 <= 1.0))
      throw InvalidConfig("harvest transition probabilities must be in [0,1]");
  }

  double transition(Harvest from, Harvest to) const {
    if (from == Harvest::kHarvesting) return to == Harvest::kIdle ? h12 : 1.0 - h12;
    return to == Harvest::kHarvesting ? h21 : 1.0 - h21;
  }
};

// Arrivals in one slot; zero whenever the source is in the non-harvesting state.
inline int draw_arrival(const ArrivalDistribution& dist, std::optional<Harvest> h, Rng& rng) {
  if (h == Harvest::kIdle) return 0;
  return dist.support()[categorical(rng, dist.probs())];
}

inline Harvest step_harvest(const HarvestChain& chain, Harvest h, Rng& rng) {
  if (h == Harvest::kHarvesting) return bernoulli(rng, chain.h12) ? Harvest::kIdle : Harvest::kHarvesting;
  return bernoulli(rng, chain.h21) ? Harvest::kHarvesting : Harvest::kIdle;
}

inline int buffer_add(int energy, int arrivals, int capacity) {
  return std::min(energy + arrivals, capacity);
}

}  // namespace aoi
