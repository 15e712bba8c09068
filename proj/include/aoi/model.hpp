#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/energy.hpp"
#include "aoi/error.hpp"
#include "aoi/solver_markov.hpp"
#include "json.hpp"

namespace aoi {

// Everything needed to instantiate one model variant, as read from a config
// file. The channel is i.i.d. when occurrence_probs is set and Markovian when
// transition_matrix is set; exactly one must be present.
//
//   {
//     "system":  {"buffer_capacity": 12, "probe_cost": 1, ...},
//     "channel": {"success_probs": [0.9, 0.4],
//                 "occurrence_probs": [0.5, 0.5]            | "transition_matrix": [[0.9, 0.1], [0.1, 0.9]]},
//     "energy":  {"bernoulli_rate": 0.4                      | "support": [0, 1, 2], "probs": [...],
//                 "harvest": {"h12": 0.3, "h21": 0.3}}       (harvest: Markovian channel only)
//   }
struct ModelConfig {
  SystemConfig system;
  std::vector<double> success_probs;
  std::optional<std::vector<double>> occurrence_probs;
  std::optional<std::vector<std::vector<double>>> transition_matrix;
  std::vector<int> arrival_support{0, 1};
  std::vector<double> arrival_probs{0.5, 0.5};
  std::optional<HarvestChain> harvest;

  bool is_markov() const { return transition_matrix.has_value(); }

  IidChannel iid_channel() const {
    if (!occurrence_probs) throw InvalidConfig("model has no i.i.d. channel (occurrence_probs missing)");
    return IidChannel(success_probs, *occurrence_probs);
  }
  MarkovChannel markov_channel() const {
    if (!transition_matrix) throw InvalidConfig("model has no Markov channel (transition_matrix missing)");
    return MarkovChannel(success_probs, *transition_matrix);
  }
  ArrivalDistribution arrivals() const { return ArrivalDistribution(arrival_support, arrival_probs); }
  MarkovEnergy markov_energy() const { return {arrivals(), harvest.value_or(HarvestChain(0.0, 1.0))}; }

  void set_bernoulli_rate(double lambda) {
    const auto d = ArrivalDistribution::bernoulli(lambda);
    arrival_support = d.support();
    arrival_probs = d.probs();
  }
  // Rate of a Bernoulli arrival model, nullopt for any other support.
  std::optional<double> bernoulli_rate() const {
    if (arrival_support == std::vector<int>{0, 1}) return arrival_probs[1];
    return std::nullopt;
  }

  // Builds every component once so that invalid parameters surface here.
  void validate() const {
    aoi::validate(system);
    if (occurrence_probs.has_value() == transition_matrix.has_value())
      throw InvalidConfig("channel needs exactly one of occurrence_probs or transition_matrix");
    if (is_markov()) {
      markov_channel();
      if (system.num_processes != 1) throw InvalidConfig("Markov model supports a single process");
    } else {
      iid_channel();
      if (harvest) throw InvalidConfig("harvest chain is only supported with a Markov channel");
    }
    arrivals();
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  nlohmann::json channel{{"success_probs", m.success_probs}};
  if (m.occurrence_probs) channel["occurrence_probs"] = *m.occurrence_probs;
  if (m.transition_matrix) channel["transition_matrix"] = *m.transition_matrix;
  nlohmann::json energy;
  if (auto r = m.bernoulli_rate()) {
    energy["bernoulli_rate"] = *r;
  } else {
    energy["support"] = m.arrival_support;
    energy["probs"] = m.arrival_probs;
  }
  if (m.harvest) energy["harvest"] = {{"h12", m.harvest->h12}, {"h21", m.harvest->h21}};
  j = nlohmann::json{{"system", m.system}, {"channel", channel}, {"energy", energy}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  ModelConfig out;
  if (j.contains("system")) out.system = j.at("system").get<SystemConfig>();
  const auto& ch = j.at("channel");
  ch.at("success_probs").get_to(out.success_probs);
  if (ch.contains("occurrence_probs")) out.occurrence_probs = ch.at("occurrence_probs").get<std::vector<double>>();
  if (ch.contains("transition_matrix"))
    out.transition_matrix = ch.at("transition_matrix").get<std::vector<std::vector<double>>>();
  if (j.contains("energy")) {
    const auto& en = j.at("energy");
    if (en.contains("bernoulli_rate")) {
      if (en.contains("support")) throw InvalidConfig("energy: give bernoulli_rate or support/probs, not both");
      out.set_bernoulli_rate(en.at("bernoulli_rate").get<double>());
    } else if (en.contains("support")) {
      en.at("support").get_to(out.arrival_support);
      en.at("probs").get_to(out.arrival_probs);
    }
    if (en.contains("harvest")) {
      const auto& h = en.at("harvest");
      out.harvest = HarvestChain(h.at("h12").get<double>(), h.at("h21").get<double>());
    }
  }
  out.validate();
  m = std::move(out);
}

// Parse errors and missing keys are reported as InvalidConfig; a missing
// or unreadable file as std::ios_base::failure.
inline ModelConfig load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(path + ": " + e.what());
  }
}

}  // namespace aoi
