#pragma once

#include <cmath>
#include <string>

#include "aoi/error.hpp"
#include "json.hpp"

namespace aoi {

// Scalar parameters shared by every solver and the simulator.
//
// Energy quantities are integer counts of energy packets. Ages are slots and
// are truncated at age_cap: the successor of age T is min(T + 1, age_cap).
struct SystemConfig {
  int buffer_capacity = 12;  // B
  int probe_cost = 1;        // E_p
  int sample_cost = 1;       // E_s
  int num_processes = 1;     // N
  double discount = 0.95;    // alpha
  int age_cap = 50;          // T_max

  // Smallest energy level at which probing followed by sampling is possible.
  int min_active_energy() const { return probe_cost + sample_cost; }
  int next_age(int age) const { return age < age_cap ? age + 1 : age_cap; }

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

// Returns cfg unchanged when every invariant holds, throws InvalidConfig
// naming the first violated invariant otherwise.
inline const SystemConfig& validate(const SystemConfig& cfg) {
  if (cfg.buffer_capacity < 0) throw InvalidConfig("buffer_capacity B must be >= 0");
  if (cfg.probe_cost < 0) throw InvalidConfig("probe_cost E_p must be >= 0");
  if (cfg.sample_cost < 1) throw InvalidConfig("sample_cost E_s must be >= 1");
  if (cfg.probe_cost + cfg.sample_cost > cfg.buffer_capacity)
    throw InvalidConfig("E_p+E_s>B: probing and sampling never jointly feasible");
  if (cfg.num_processes < 1) throw InvalidConfig("num_processes N must be >= 1");
  if (!(cfg.discount > 0.0 && cfg.discount < 1.0) || !std::isfinite(cfg.discount))
    throw InvalidConfig("discount alpha out of range (0,1)");
  if (cfg.age_cap < 2) throw InvalidConfig("age_cap T_max must be >= 2");
  return cfg;
}

inline void to_json(nlohmann::json& j, const SystemConfig& c) {
  j = nlohmann::json{{"buffer_capacity", c.buffer_capacity},
                     {"probe_cost", c.probe_cost},
                     {"sample_cost", c.sample_cost},
                     {"num_processes", c.num_processes},
                     {"discount", c.discount},
                     {"age_cap", c.age_cap}};
}

// Missing keys keep their defaults; the result is validated.
inline void from_json(const nlohmann::json& j, SystemConfig& c) {
  SystemConfig out;
  out.buffer_capacity = j.value("buffer_capacity", out.buffer_capacity);
  out.probe_cost = j.value("probe_cost", out.probe_cost);
  out.sample_cost = j.value("sample_cost", out.sample_cost);
  out.num_processes = j.value("num_processes", out.num_processes);
  out.discount = j.value("discount", out.discount);
  out.age_cap = j.value("age_cap", out.age_cap);
  c = validate(out);
}

}  // namespace aoi
