// Command-line front end: solve, learn, simulate and compare, writing CSV
// tables plus a JSON metadata sidecar per command.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aoi/aoi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "aoi-cli 1.0.0";

enum ExitCode { kOk = 0, kOther = 1, kConfigError = 2, kIoError = 3, kTooLarge = 4 };

struct Common {
  std::string preset;
  std::string config;
  std::string out_dir;
  std::optional<double> alpha, lambda, epsilon;
  std::optional<int> seeds, tmax;
  std::optional<long> horizon;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_preset) {
  c.preset = default_preset;
  sub->add_option("--preset", c.preset, "experiment preset")
      ->check(CLI::IsMember(aoi::preset_names()))
      ->capture_default_str();
  sub->add_option("--config", c.config, "model config JSON; replaces the preset's model")->check(CLI::ExistingFile);
  sub->add_option("-o,--output-dir", c.out_dir, "output directory (default $AOI_OUTPUT_DIR or ./out)");
  sub->add_option("--alpha", c.alpha, "discount factor");
  sub->add_option("--lambda", c.lambda, "Bernoulli arrival rate; replaces the preset's sweep");
  sub->add_option("--epsilon", c.epsilon, "exploration probability");
  sub->add_option("--seeds", c.seeds, "number of seeds / replicates")->check(CLI::PositiveNumber);
  sub->add_option("--horizon", c.horizon, "slots per run")->check(CLI::PositiveNumber);
  sub->add_option("--tmax", c.tmax, "age cap T_max");
  sub->add_option("--seed", c.seed, "base seed")->capture_default_str();
}

struct Run {
  std::string command;
  aoi::Preset preset;
  json overrides = json::object();
  fs::path out;
};

void apply_model_overrides(aoi::ModelConfig& m, const Common& c) {
  if (c.alpha) m.system.discount = *c.alpha;
  if (c.tmax) m.system.age_cap = *c.tmax;
  if (c.lambda) m.set_bernoulli_rate(*c.lambda);
  m.validate();
}

Run resolve(const std::string& command, const Common& c) {
  Run run;
  run.command = command;
  run.preset = aoi::make_preset(c.preset);
  auto& p = run.preset;
  if (!c.config.empty()) {
    p.model = aoi::load_model(c.config);
    p.markov_model.reset();
    p.name += "+config";
    if (auto r = p.model.bernoulli_rate()) p.lambda_sweep = {*r};
    run.overrides["config"] = c.config;
  }
  apply_model_overrides(p.model, c);
  if (p.markov_model) apply_model_overrides(*p.markov_model, c);
  if (c.lambda) {
    p.lambda_sweep = {*c.lambda};
    for (auto& pt : p.probing_points) pt.lambda = *c.lambda;
    run.overrides["lambda"] = *c.lambda;
  }
  if (c.alpha) run.overrides["alpha"] = *c.alpha;
  if (c.tmax) run.overrides["tmax"] = *c.tmax;
  if (c.epsilon) {
    p.learning.explore.epsilon = *c.epsilon;
    p.learning.explore.floor = std::min(p.learning.explore.floor, *c.epsilon);
    p.learning.explore.validate();
    run.overrides["epsilon"] = *c.epsilon;
  }
  if (c.seeds) {
    p.eval.replicates = *c.seeds;
    run.overrides["seeds"] = *c.seeds;
  }
  if (c.horizon) {
    if (command == "learn") p.learning_run.horizon = *c.horizon;
    else p.eval.horizon = *c.horizon;
    run.overrides["horizon"] = *c.horizon;
  }
  p.eval.seed = c.seed;
  run.overrides["seed"] = c.seed;

  std::string dir = c.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("AOI_OUTPUT_DIR");
    dir = env && *env ? env : "out";
  }
  run.out = dir;
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec) throw std::ios_base::failure("cannot create output directory " + dir + ": " + ec.message());
  return run;
}

json learning_json(const aoi::Preset& p) {
  return {{"d0", p.learning.step.d0},
          {"omega", p.learning.step.omega},
          {"epsilon", p.learning.explore.epsilon},
          {"epsilon_floor", p.learning.explore.floor},
          {"epsilon_decay", p.learning.explore.decay},
          {"known_success_probs", p.learning.known_success_probs},
          {"initial_q", p.learning.initial_q},
          {"horizon", p.learning_run.horizon},
          {"window", p.learning_run.window},
          {"report_every", p.learning_run.report_every}};
}

// Resolved parameters, echoed into every CSV and into the metadata file.
json resolved_params(const Run& run) {
  const auto& p = run.preset;
  json j{{"command", run.command},
         {"preset", p.name},
         {"model", p.model},
         {"lambda_sweep", p.lambda_sweep},
         {"eval", {{"horizon", p.eval.horizon}, {"replicates", p.eval.replicates}, {"seed", p.eval.seed}}},
         {"overrides", run.overrides}};
  if (p.markov_model) j["markov_model"] = *p.markov_model;
  if (!p.probing_points.empty()) {
    json pts = json::array();
    for (const auto& pt : p.probing_points)
      pts.push_back({{"lambda", pt.lambda}, {"probe_cost", pt.probe_cost}, {"sample_cost", pt.sample_cost}});
    j["probing_points"] = pts;
  }
  if (run.command == "learn") j["learning"] = learning_json(p);
  return j;
}

std::string header_lines(const Run& run) {
  return "# preset=" + run.preset.name + " command=" + run.command + "\n# params=" + resolved_params(run).dump() + "\n";
}

std::string csv_with_header(const Run& run, const aoi::CsvTable& t) { return header_lines(run) + t.str(); }

void write_csv(const Run& run, const std::string& name, const aoi::CsvTable& t) {
  aoi::write_file_atomic(run.out / name, csv_with_header(run, t));
  std::cout << "wrote " << (run.out / name).string() << " (" << t.size() << " rows)\n";
}

void write_metadata(const Run& run, const json& seeds, const std::vector<std::string>& files) {
  json meta = resolved_params(run);
  meta["tool_version"] = kToolVersion;
  meta["seeds"] = seeds;
  meta["files"] = files;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  meta["generated_at"] = ts.str();
  aoi::write_file_atomic(run.out / (run.command + "_metadata.json"), meta.dump(2) + "\n");
}

// Replicate r draws from make_rng(base_seed, r).
json replicate_seeds(const aoi::EvalOptions& e) {
  json streams = json::array();
  for (int r = 0; r < e.replicates; ++r) streams.push_back(r);
  return {{"base_seed", e.seed}, {"streams", streams}};
}

std::string lambda_tag(double l) { return "lambda" + aoi::format_number(l); }

aoi::ModelConfig with_lambda(aoi::ModelConfig m, double l) {
  m.set_bernoulli_rate(l);
  return m;
}

// ---------------------------------------------------------------------------

int cmd_solve(const Run& run, bool values) {
  const auto& p = run.preset;
  if (p.model.is_markov() || p.model.system.num_processes != 1)
    throw aoi::InvalidConfig("solve needs an i.i.d. single-process model; see solve-markov / solve-multi");
  aoi::CsvTable tth({"lambda", "E", "T_th", "upward_closed"});
  aoi::CsvTable pth({"lambda", "E", "T", "p_th", "truncation_affected"});
  aoi::CsvTable summary({"lambda", "iterations", "final_change", "conjecture_violations"});
  aoi::CsvTable vals({"lambda", "E", "T", "J", "V"});
  std::vector<std::string> files;
  for (double l : p.lambda_sweep) {
    const auto m = with_lambda(p.model, l);
    const auto cfg = m.system;
    const auto ch = m.iid_channel();
    const auto sol = aoi::value_iteration(cfg, ch, m.arrivals());
    const auto rep = aoi::extract_thresholds(sol, cfg, ch);
    std::string dat = "# E T_th  (" + p.name + ", lambda=" + aoi::format_number(l) + ")\n";
    for (int e = rep.min_active_energy; e <= cfg.buffer_capacity; ++e) {
      tth.add(l, e, rep.t_th(e), rep.t_upward_closed[e] != 0);
      if (rep.t_th(e)) dat += std::to_string(e) + " " + std::to_string(*rep.t_th(e)) + "\n";
      for (int t = 1; t <= cfg.age_cap; ++t) pth.add(l, e, t, rep.p_th(e, t), rep.truncation_affected(t));
    }
    if (values)
      for (int e = 0; e <= cfg.buffer_capacity; ++e)
        for (int t = 1; t <= cfg.age_cap; ++t) vals.add(l, e, t, sol.tables.j(e, t), sol.tables.v(e, t));
    summary.add(l, static_cast<long>(sol.error_trace.size()), sol.error_trace.back(),
                static_cast<long>(rep.conjecture_violations.size()));
    for (const auto& f : rep.conjecture_violations)
      std::cerr << "conjecture: " << f.property << " fails at " << f.cell << " (lambda=" << l << ")\n";
    const std::string dname = "solve_t_th_" + lambda_tag(l) + ".dat";
    aoi::write_file_atomic(run.out / dname, dat);
    files.push_back(dname);
  }
  write_csv(run, "solve_t_th.csv", tth);
  write_csv(run, "solve_p_th.csv", pth);
  write_csv(run, "solve_summary.csv", summary);
  files.insert(files.end(), {"solve_t_th.csv", "solve_p_th.csv", "solve_summary.csv"});
  if (values) {
    write_csv(run, "solve_values.csv", vals);
    files.push_back("solve_values.csv");
  }
  write_metadata(run, json::array(), files);
  return kOk;
}

// "k=v" pairs fixing process ages in the multi-process slices.
std::map<int, int> parse_fixes(const std::vector<std::string>& fixes, int n) {
  std::map<int, int> out;
  for (const auto& f : fixes) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw aoi::InvalidConfig("--fix expects k=v, got '" + f + "'");
    std::string key = f.substr(0, eq);
    if (!key.empty() && (key[0] == 'T' || key[0] == 't')) key.erase(0, 1);
    int k = 0, v = 0;
    try {
      k = std::stoi(key);
      v = std::stoi(f.substr(eq + 1));
    } catch (const std::exception&) {
      throw aoi::InvalidConfig("--fix expects k=v, got '" + f + "'");
    }
    if (k < 1 || k > n) throw aoi::InvalidConfig("--fix process index out of range: " + f);
    out[k] = v;
  }
  return out;
}

int cmd_solve_multi(const Run& run, const std::string& layout, const std::vector<std::string>& fix_args) {
  const auto& p = run.preset;
  if (p.model.is_markov()) throw aoi::InvalidConfig("solve-multi needs an i.i.d. model");
  const int n = p.model.system.num_processes;
  const auto fixes = parse_fixes(fix_args, n);
  aoi::MultiOptions opts;
  opts.layout = layout == "symmetric" ? aoi::AgeLayout::kSymmetric : aoi::AgeLayout::kFull;

  std::vector<std::string> th_head{"lambda", "E"};
  for (int k = 2; k <= n; ++k) th_head.push_back("T" + std::to_string(k));
  th_head.push_back("T_th");
  std::vector<std::string> p_head{"lambda", "E"};
  for (int k = 1; k <= n; ++k) p_head.push_back("T" + std::to_string(k));
  p_head.push_back("p_th");
  aoi::CsvTable tth(th_head), pth(p_head);
  aoi::CsvTable summary({"lambda", "iterations", "final_change", "states", "conjecture_violations"});

  auto row_of = [](std::vector<std::string> lead, std::span<const int> ages, const std::string& last) {
    for (int t : ages) lead.push_back(std::to_string(t));
    lead.push_back(last);
    return lead;
  };
  std::vector<std::vector<std::string>> th_rows, p_rows;
  for (double l : p.lambda_sweep) {
    const auto m = with_lambda(p.model, l);
    const auto ch = m.iid_channel();
    const auto sol = aoi::value_iteration_multi(m.system, ch, m.arrivals(), opts);
    const auto rep = aoi::extract_thresholds_multi(sol, ch);
    const auto& cfg = m.system;
    if (n >= 2) {
      aoi::AgeSpace rest(n - 1, cfg.age_cap, aoi::AgeLayout::kFull);
      for (int e = rep.min_active_energy; e <= cfg.buffer_capacity; ++e)
        for (std::size_t ri = 0; ri < rest.size(); ++ri) {
          auto others = rest.ages(ri);
          bool keep = true;
          for (auto [k, v] : fixes)
            if (k >= 2 && others[k - 2] != v) keep = false;
          if (!keep) continue;
          th_rows.push_back(row_of({aoi::format_number(l), std::to_string(e)}, others,
                                   aoi::format_number(rep.t_threshold[static_cast<std::size_t>(e) * rep.rest_count + ri])));
        }
    }
    aoi::AgeSpace full(n, cfg.age_cap, aoi::AgeLayout::kFull);
    for (int e = rep.min_active_energy; e <= cfg.buffer_capacity; ++e)
      for (std::size_t ai = 0; ai < full.size(); ++ai) {
        auto ages = full.ages(ai);
        bool keep = true;
        for (auto [k, v] : fixes)
          if (ages[k - 1] != v) keep = false;
        if (!keep) continue;
        const auto idx = sol.ages().index(ages);
        p_rows.push_back(row_of({aoi::format_number(l), std::to_string(e)}, ages,
                                aoi::format_number(rep.p_threshold[sol.state(e, idx)])));
      }
    summary.add(l, static_cast<long>(sol.error_trace.size()), sol.error_trace.back(),
                static_cast<unsigned long>(sol.num_states()), static_cast<long>(rep.conjecture_violations.size()));
  }
  auto dump = [&](const std::string& name, const std::vector<std::string>& head,
                  const std::vector<std::vector<std::string>>& rows) {
    std::string body;
    for (std::size_t i = 0; i < head.size(); ++i) body += (i ? "," : "") + head[i];
    body += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) body += (i ? "," : "") + r[i];
      body += "\n";
    }
    aoi::write_file_atomic(run.out / name, header_lines(run) + body);
    std::cout << "wrote " << (run.out / name).string() << " (" << rows.size() << " rows)\n";
  };
  std::vector<std::string> files{"multi_p_th.csv", "multi_summary.csv"};
  if (n >= 2) {
    dump("multi_t_th.csv", th_head, th_rows);
    files.push_back("multi_t_th.csv");
  }
  dump("multi_p_th.csv", p_head, p_rows);
  write_csv(run, "multi_summary.csv", summary);
  write_metadata(run, json::array(), files);
  return kOk;
}

int cmd_solve_markov(const Run& run, std::optional<int> tau_filter) {
  const auto& p = run.preset;
  if (!p.model.is_markov()) throw aoi::InvalidConfig("solve-markov needs a Markov channel model");
  const auto& cfg = p.model.system;
  const auto ch = p.model.markov_channel();
  const auto sol = aoi::value_iteration_markov(cfg, ch, p.model.markov_energy());
  const auto rep = aoi::extract_thresholds_markov(sol, cfg, ch);
  const auto& g = sol.grid;
  aoi::CsvTable probe({"E", "tau", "C_prev", "H", "T_th"});
  aoi::CsvTable pth({"E", "T", "H", "p_th"});
  aoi::CsvTable post({"E", "C", "H", "T_th"});
  aoi::CsvTable conj({"property", "cell"});
  for (int e = rep.min_active_energy; e <= g.capacity; ++e)
    for (aoi::Harvest h : aoi::kHarvestStates) {
      const auto hn = aoi::harvest_name(h);
      for (int tau = 1; tau <= g.max_tau(); ++tau) {
        if (tau_filter && tau != *tau_filter) continue;
        for (std::size_t cp = 0; cp < g.channels; ++cp)
          probe.add(e, tau, "C" + std::to_string(cp + 1), hn, rep.t_th(e, tau, cp, h));
      }
      for (int t = 1; t <= g.age_cap; ++t) pth.add(e, t, hn, rep.p_th(e, t, h));
      for (std::size_t c = 0; c < g.channels; ++c) post.add(e, "C" + std::to_string(c + 1), hn, rep.t_th_post(e, c, h));
    }
  for (const auto& f : rep.conjecture_violations) conj.add(f.property, "\"" + f.cell + "\"");
  write_csv(run, "markov_t_th.csv", probe);
  write_csv(run, "markov_p_th.csv", pth);
  write_csv(run, "markov_t_th_post.csv", post);
  write_csv(run, "markov_conjectures.csv", conj);
  std::cout << "iterations " << sol.error_trace.size() << ", conjecture violations " << rep.conjecture_violations.size()
            << ", q^(T_max) row spread " << sol.tau_cap_row_spread << "\n";
  write_metadata(run, json::array(), {"markov_t_th.csv", "markov_p_th.csv", "markov_t_th_post.csv", "markov_conjectures.csv"});
  return kOk;
}

template <class Learner, class Env, class MakeEnv, class MakeGreedyEval>
void learn_variant(const Run& run, const std::string& variant, int seeds, MakeEnv&& make_env, Learner proto,
                   const std::optional<aoi::QTables>& resume, MakeGreedyEval&& eval_greedy, aoi::CsvTable& reference,
                   std::vector<std::string>& files) {
  const auto& p = run.preset;
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t seed = p.eval.seed + static_cast<std::uint64_t>(k);
    Learner learner = proto;
    if (resume) {
      if (resume->num_states() != learner.tables().num_states() ||
          resume->num_intermediate() != learner.tables().num_intermediate())
        throw aoi::InvalidConfig("--resume tables do not match the model grid");
      learner.tables() = *resume;
    }
    Env env = make_env(aoi::make_rng(seed, 0));
    aoi::Rng explore = aoi::make_rng(seed, 1);
    const auto curve = aoi::run_learning(learner, env, p.learning_run, explore);
    aoi::CsvTable t({"step", "windowed_aoi", "epsilon", "mean_step_size"});
    for (const auto& pt : curve) t.add(pt.step, pt.windowed_aoi, pt.epsilon, pt.mean_step_size);
    const std::string base = "learn_" + variant + "_seed" + std::to_string(seed);
    write_csv(run, base + ".csv", t);
    aoi::write_file_atomic(run.out / (base + "_qtables.json"), json(learner.tables()).dump() + "\n");
    files.insert(files.end(), {base + ".csv", base + "_qtables.json"});
    const auto rep = eval_greedy(learner);
    reference.add(variant, "greedy_q_seed" + std::to_string(seed), rep.mean, rep.ci_half_width);
  }
}

int cmd_learn(const Run& run, const std::string& which, bool unknown_p, const std::string& resume_path,
              long eval_horizon) {
  auto p = run.preset;
  p.learning.known_success_probs = !unknown_p;
  const int seeds = run.overrides.contains("seeds") ? p.eval.replicates : 2;
  std::optional<aoi::QTables> resume;
  if (!resume_path.empty()) {
    std::ifstream in(resume_path);
    if (!in) throw std::ios_base::failure("cannot open " + resume_path);
    try {
      resume = json::parse(in).get<aoi::QTables>();
    } catch (const json::exception& e) {
      throw aoi::InvalidConfig(resume_path + ": " + e.what());
    }
  }
  aoi::EvalOptions eo = p.eval;
  eo.horizon = eval_horizon;
  aoi::CsvTable reference({"variant", "policy", "aoi_mean", "ci95_half_width"});
  std::vector<std::string> files;

  std::vector<const aoi::ModelConfig*> models;
  if (which != "markov" && !p.model.is_markov()) models.push_back(&p.model);
  if (which != "iid") {
    if (p.model.is_markov()) models.push_back(&p.model);
    else if (p.markov_model) models.push_back(&*p.markov_model);
  }
  if (models.empty()) throw aoi::InvalidConfig("no model matches --variant " + which);
  if (resume && models.size() != 1) throw aoi::InvalidConfig("--resume needs a single --variant");

  for (const auto* m : models) {
    const auto& cfg = m->system;
    if (!m->is_markov()) {
      const auto ch = m->iid_channel();
      const auto arr = m->arrivals();
      const auto sol = aoi::value_iteration(cfg, ch, arr);
      const auto vi = aoi::evaluate_policy([&](int) { return aoi::GreedySinglePolicy{&sol.policy}; }, cfg, ch, arr,
                                           aoi::ProbeMode::kProbing, eo);
      const auto rnd = aoi::evaluate_policy(
          [&](int r) { return aoi::UniformRandomPolicy{cfg, aoi::make_rng(eo.seed + 7919, r)}; }, cfg, ch, arr,
          aoi::ProbeMode::kProbing, eo);
      reference.add("iid", "value_iteration", vi.mean, vi.ci_half_width);
      reference.add("iid", "uniform_random", rnd.mean, rnd.ci_half_width);
      learn_variant<aoi::IidQLearner, aoi::IidEnv>(
          run, "iid", seeds, [&](aoi::Rng rng) { return aoi::IidEnv(cfg, ch, arr, aoi::ProbeMode::kProbing, std::move(rng)); },
          aoi::IidQLearner(cfg, ch, p.learning), resume,
          [&](const aoi::IidQLearner& l) {
            const auto g = l.greedy();
            return aoi::evaluate_policy([&](int) { return g; }, cfg, ch, arr, aoi::ProbeMode::kProbing, eo);
          },
          reference, files);
    } else {
      const auto ch = m->markov_channel();
      const auto en = m->markov_energy();
      const auto sol = aoi::value_iteration_markov(cfg, ch, en);
      const auto vi = aoi::evaluate_policy([&](int) { return aoi::GreedyMarkovPolicy{&sol}; }, cfg, ch, en,
                                           aoi::ProbeMode::kProbing, eo);
      const auto rnd = aoi::evaluate_policy(
          [&](int r) { return aoi::UniformRandomPolicy{cfg, aoi::make_rng(eo.seed + 7919, r)}; }, cfg, ch, en,
          aoi::ProbeMode::kProbing, eo);
      reference.add("markov", "value_iteration", vi.mean, vi.ci_half_width);
      reference.add("markov", "uniform_random", rnd.mean, rnd.ci_half_width);
      learn_variant<aoi::MarkovQLearner, aoi::MarkovEnv>(
          run, "markov", seeds,
          [&](aoi::Rng rng) { return aoi::MarkovEnv(cfg, ch, en, aoi::ProbeMode::kProbing, std::move(rng)); },
          aoi::MarkovQLearner(cfg, ch, p.learning), resume,
          [&](const aoi::MarkovQLearner& l) {
            const auto g = l.greedy();
            return aoi::evaluate_policy([&](int) { return g; }, cfg, ch, en, aoi::ProbeMode::kProbing, eo);
          },
          reference, files);
    }
  }
  write_csv(run, "learn_reference.csv", reference);
  files.push_back("learn_reference.csv");
  std::vector<std::uint64_t> seed_list;
  for (int k = 0; k < seeds; ++k) seed_list.push_back(p.eval.seed + static_cast<std::uint64_t>(k));
  Run echoed = run;
  echoed.preset = p;
  write_metadata(echoed, json(seed_list), files);
  return kOk;
}

void add_eval_rows(aoi::CsvTable& t, const std::string& label, const aoi::EvalReport& r) {
  for (std::size_t i = 0; i < r.per_seed.size(); ++i) t.add(label, static_cast<long>(i), r.per_seed[i]);
}

int cmd_simulate(const Run& run, const std::string& policy, long trace_every) {
  const auto& p = run.preset;
  const auto& m = p.model;
  const auto& cfg = m.system;
  aoi::EvalOptions eo = p.eval;
  eo.trace_every = trace_every;
  aoi::EvalReport rep;
  const bool blind = policy == "noprobe";
  const aoi::ProbeMode mode = blind ? aoi::ProbeMode::kBlind : aoi::ProbeMode::kProbing;
  auto baseline = [&](auto&& eval) -> bool {
    if (policy == "random") {
      rep = eval([&](int r) { return aoi::UniformRandomPolicy{cfg, aoi::make_rng(eo.seed + 7919, r)}; });
    } else if (policy == "always") {
      rep = eval([&](int) { return aoi::ProbeAndSampleAlwaysPolicy{cfg}; });
    } else if (policy == "idle") {
      rep = eval([&](int) { return aoi::AlwaysIdlePolicy{}; });
    } else {
      return false;
    }
    return true;
  };
  if (m.is_markov()) {
    if (blind) throw aoi::InvalidConfig("no blind-sampling solver for the Markov model");
    const auto ch = m.markov_channel();
    const auto en = m.markov_energy();
    auto eval = [&](auto&& make) { return aoi::evaluate_policy(make, cfg, ch, en, mode, eo); };
    if (!baseline(eval)) {
      const auto sol = aoi::value_iteration_markov(cfg, ch, en);
      rep = eval([&](int) { return aoi::GreedyMarkovPolicy{&sol}; });
    }
  } else {
    const auto ch = m.iid_channel();
    const auto arr = m.arrivals();
    auto eval = [&](auto&& make) { return aoi::evaluate_policy(make, cfg, ch, arr, mode, eo); };
    if (!baseline(eval)) {
      if (blind) {
        if (cfg.num_processes != 1) throw aoi::InvalidConfig("blind sampling is solved for N=1 only");
        const auto sol = aoi::value_iteration_no_probe(cfg, ch, arr);
        rep = eval([&](int) { return aoi::NoProbePolicy{&sol}; });
      } else if (cfg.num_processes == 1) {
        const auto sol = aoi::value_iteration(cfg, ch, arr);
        rep = eval([&](int) { return aoi::GreedySinglePolicy{&sol.policy}; });
      } else {
        const auto sol = aoi::value_iteration_multi(cfg, ch, arr);
        rep = eval([&](int) { return aoi::GreedyMultiPolicy{&sol}; });
      }
    }
  }
  aoi::CsvTable per({"policy", "replicate", "aoi"});
  add_eval_rows(per, policy, rep);
  aoi::CsvTable sum({"policy", "aoi_mean", "ci95_half_width", "horizon", "replicates", "outage_fraction"});
  sum.add(policy, rep.mean, rep.ci_half_width, rep.horizon, static_cast<long>(rep.per_seed.size()), rep.outage_fraction);
  write_csv(run, "simulate_replicates.csv", per);
  write_csv(run, "simulate_summary.csv", sum);
  std::vector<std::string> files{"simulate_replicates.csv", "simulate_summary.csv"};
  if (trace_every > 0) {
    std::vector<std::string> head{"slot", "E"};
    for (int k = 1; k <= cfg.num_processes; ++k) head.push_back("T" + std::to_string(k));
    for (const char* h : {"probed", "sampled", "channel", "success", "cost"}) head.emplace_back(h);
    std::string body;
    for (std::size_t i = 0; i < head.size(); ++i) body += (i ? "," : "") + head[i];
    body += "\n";
    for (const auto& r : rep.trace) {
      body += std::to_string(r.slot) + "," + std::to_string(r.energy);
      for (int a : r.ages) body += "," + std::to_string(a);
      body += "," + std::to_string(r.probed) + "," + std::to_string(r.sampled) + "," + std::to_string(r.channel) + "," +
              std::to_string(r.success) + "," + aoi::format_number(r.cost) + "\n";
    }
    aoi::write_file_atomic(run.out / "simulate_trace.csv", header_lines(run) + body);
    files.push_back("simulate_trace.csv");
  }
  std::cout << policy << ": AoI " << rep.mean << " +- " << rep.ci_half_width << "\n";
  write_metadata(run, replicate_seeds(eo), files);
  return kOk;
}

// One row per lambda: solve, then simulate the optimal policy. Points run
// concurrently and each is written to its own file as soon as it finishes.
int cmd_sweep(const Run& run) {
  const auto& p = run.preset;
  const auto& base = p.model;
  if (!base.is_markov() && base.system.num_processes != 1)
    throw aoi::InvalidConfig("sweep supports single-process models");
  const std::vector<std::string> head{"lambda", "iterations", "J_full_buffer_age1", "T_th_full_buffer", "aoi_mean",
                                      "ci95_half_width", "outage_fraction"};
  aoi::EvalOptions eo = p.eval;
  eo.threads = 1;
  auto point = [&](double l) {
    const auto m = with_lambda(base, l);
    const auto& cfg = m.system;
    aoi::CsvTable t(head);
    if (m.is_markov()) {
      const auto ch = m.markov_channel();
      const auto en = m.markov_energy();
      const auto sol = aoi::value_iteration_markov(cfg, ch, en);
      const auto rep = aoi::extract_thresholds_markov(sol, cfg, ch);
      const auto ev = aoi::evaluate_policy([&](int) { return aoi::GreedyMarkovPolicy{&sol}; }, cfg, ch, en,
                                           aoi::ProbeMode::kProbing, eo);
      t.add(l, static_cast<long>(sol.error_trace.size()),
            sol.j(cfg.buffer_capacity, 1, 1, 0, aoi::Harvest::kHarvesting),
            rep.t_th(cfg.buffer_capacity, 1, 0, aoi::Harvest::kHarvesting), ev.mean, ev.ci_half_width,
            ev.outage_fraction);
    } else {
      const auto ch = m.iid_channel();
      const auto arr = m.arrivals();
      const auto sol = aoi::value_iteration(cfg, ch, arr);
      const auto rep = aoi::extract_thresholds(sol, cfg, ch);
      const auto ev = aoi::evaluate_policy([&](int) { return aoi::GreedySinglePolicy{&sol.policy}; }, cfg, ch, arr,
                                           aoi::ProbeMode::kProbing, eo);
      t.add(l, static_cast<long>(sol.error_trace.size()), sol.tables.j(cfg.buffer_capacity, 1),
            rep.t_th(cfg.buffer_capacity), ev.mean, ev.ci_half_width, ev.outage_fraction);
    }
    write_csv(run, "sweep_" + lambda_tag(l) + ".csv", t);
    return t.rows().front();
  };
  std::vector<std::future<std::vector<std::string>>> jobs;
  for (double l : p.lambda_sweep) jobs.push_back(std::async(std::launch::async, point, l));
  aoi::CsvTable all(head);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto row = jobs[i].get();
    all.add(row[0], row[1], row[2], row[3], row[4], row[5], row[6]);
    files.push_back("sweep_" + lambda_tag(p.lambda_sweep[i]) + ".csv");
  }
  write_csv(run, "sweep.csv", all);
  files.push_back("sweep.csv");
  write_metadata(run, replicate_seeds(eo), files);
  return kOk;
}

int cmd_compare(const Run& run) {
  const auto& p = run.preset;
  if (p.model.is_markov() || p.model.system.num_processes != 1)
    throw aoi::InvalidConfig("compare-probing supports the i.i.d. single-process model");
  auto points = p.probing_points;
  if (points.empty())
    for (double l : p.lambda_sweep) points.push_back({l, p.model.system.probe_cost, p.model.system.sample_cost});
  const auto rows = aoi::compare_probing(p.model.system, p.model.iid_channel(), points, p.eval);
  aoi::CsvTable t({"lambda", "E_p", "E_s", "aoi_probing", "ci_probing", "aoi_blind", "ci_blind", "diff", "ci_diff"});
  for (const auto& r : rows) {
    t.add(r.point.lambda, r.point.probe_cost, r.point.sample_cost, r.probing.mean, r.probing.ci_half_width,
          r.blind.mean, r.blind.ci_half_width, r.diff_mean, r.diff_ci_half_width);
    std::cout << "lambda=" << r.point.lambda << " E_p=" << r.point.probe_cost << " E_s=" << r.point.sample_cost
              << ": probing " << r.probing.mean << " blind " << r.blind.mean << " diff " << r.diff_mean << " +- "
              << r.diff_ci_half_width << "\n";
  }
  write_csv(run, "compare_probing.csv", t);
  write_metadata(run, replicate_seeds(p.eval), {"compare_probing.csv"});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-of-information scheduling for an energy-harvesting source with channel probing"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common solve_c, multi_c, markov_c, learn_c, sim_c, sweep_c, cmp_c;
  bool values = false;
  auto* solve = app.add_subcommand("solve", "value iteration, i.i.d. channel, N=1; threshold tables per lambda");
  add_common(solve, solve_c, "fig2");
  solve->add_flag("--values", values, "also write J and V tables");

  std::string layout = "full";
  std::vector<std::string> fixes;
  auto* multi = app.add_subcommand("solve-multi", "value iteration, i.i.d. channel, N>1");
  add_common(multi, multi_c, "multi3");
  multi->add_option("--layout", layout, "age table layout")->check(CLI::IsMember({"full", "symmetric"}));
  multi->add_option("--fix", fixes, "fix an age coordinate in the slices, e.g. --fix T2=3");

  std::optional<int> tau;
  auto* markov = app.add_subcommand("solve-markov", "value iteration, Markov channel and harvesting");
  add_common(markov, markov_c, "fig3");
  markov->add_option("--tau", tau, "only write probing thresholds for this tau");

  std::string variant = "both", resume;
  bool unknown_p = false;
  long eval_horizon = 1'000'000;
  auto* learn = app.add_subcommand("learn", "two-stage Q-learning with value-iteration and random references");
  add_common(learn, learn_c, "fig6");
  learn->add_option("--variant", variant, "model variant")->check(CLI::IsMember({"iid", "markov", "both"}));
  learn->add_flag("--unknown-p", unknown_p, "replace p(C) by the observed ACK in the sample update");
  learn->add_option("--resume", resume, "start from saved Q tables")->check(CLI::ExistingFile);
  learn->add_option("--eval-horizon", eval_horizon, "slots per evaluation replicate")->capture_default_str();

  std::string policy = "optimal";
  long trace_every = 0;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo evaluation of a policy");
  add_common(sim, sim_c, "fig2");
  sim->add_option("--policy", policy, "policy to evaluate")
      ->check(CLI::IsMember({"optimal", "noprobe", "random", "always", "idle"}))
      ->capture_default_str();
  sim->add_option("--trace-every", trace_every, "record every k-th slot of replicate 0");

  auto* sweep = app.add_subcommand("sweep", "solve and simulate across the lambda sweep");
  add_common(sweep, sweep_c, "fig2");

  auto* cmp = app.add_subcommand("compare-probing", "probing versus blind sampling");
  add_common(cmp, cmp_c, "fig5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*solve) return cmd_solve(resolve("solve", solve_c), values);
    if (*multi) return cmd_solve_multi(resolve("solve-multi", multi_c), layout, fixes);
    if (*markov) return cmd_solve_markov(resolve("solve-markov", markov_c), tau);
    if (*learn) return cmd_learn(resolve("learn", learn_c), variant, unknown_p, resume, eval_horizon);
    if (*sim) return cmd_simulate(resolve("simulate", sim_c), policy, trace_every);
    if (*sweep) return cmd_sweep(resolve("sweep", sweep_c));
    if (*cmp) return cmd_compare(resolve("compare-probing", cmp_c));
  } catch (const aoi::InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const aoi::StateSpaceTooLarge& e) {
    std::cerr << "state space too large: " << e.what() << "\n";
    return kTooLarge;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
