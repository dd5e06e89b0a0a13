// Command-line front end: dataset generation, training, tuning,
// counterfactual simulation, analytic completion, parameter sweeps and
// report assembly. Every subcommand reads a JSON config, takes a seed, and
// writes its artifacts plus a run manifest under --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "csim/analytic.hpp"
#include "csim/dataset_io.hpp"
#include "csim/eval.hpp"
#include "csim/metrics.hpp"
#include "csim/outcome_tensor.hpp"
#include "csim/rct.hpp"
#include "csim/simulate.hpp"
#include "csim/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace csim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAssumption = 3;

struct CliError : std::runtime_error {
  int code;
  CliError(int code_, const std::string& what) : std::runtime_error(what), code(code_) {}
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitConfig, "cannot open config: " + path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw CliError(kExitConfig, "config parse error in " + path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw CliError(kExitConfig, "cannot write: " + path);
  out << j.dump(2) << "\n";
}

void write_manifest(const std::string& out_dir, const std::string& command, std::uint64_t seed,
                    const json& config, const json& outputs) {
  write_json(out_dir + "/run_manifest.json", json{{"command", command},
                                                  {"seed", seed},
                                                  {"config", config},
                                                  {"outputs", outputs}});
}

std::vector<PolicySpec> policies_from_config(const json& cfg, EnvKind kind) {
  if (cfg.contains("policies")) return cfg.at("policies").get<std::vector<PolicySpec>>();
  return kind == EnvKind::Abr ? default_abr_policies() : default_lb_policies();
}

RCTDataset load_dataset_checked(const json& cfg) {
  if (!cfg.contains("dataset")) throw CliError(kExitConfig, "config needs a \"dataset\" directory");
  return load_dataset(cfg.at("dataset").get<std::string>());
}

int cmd_gen(EnvKind kind, const std::string& config_path, std::uint64_t seed,
            const std::string& out_dir) {
  const json cfg = load_config(config_path);
  json env = cfg.value("env", json::object());
  if (kind == EnvKind::Lb) {
    LbConfig lb = lb_config_from_json(env);
    if (lb.rates.empty()) {
      lb.rates = gen_fleet(sub_seed(seed, 0, stream::kFleet), lb.n_servers).rates;
    }
    env = lb_config_to_json(lb);
  } else {
    env = abr_config_to_json(abr_config_from_json(env));
  }
  const int n = cfg.value("n_trajectories", 100);
  const auto registry = policies_from_config(cfg, kind);
  const RCTDataset ds = collect(kind, env, registry, n, seed);
  save_dataset(ds, out_dir);
  write_manifest(out_dir, kind == EnvKind::Abr ? "gen-abr" : "gen-lb", seed, cfg,
                 json{{"dataset", out_dir}, {"fingerprint", dataset_fingerprint(out_dir)}});
  std::cout << "wrote " << n << " trajectories to " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const RCTDataset ds = load_dataset_checked(cfg);
  Hyperparams hyper = ds.env_kind == EnvKind::Abr ? default_abr_hyperparams() : default_lb_hyperparams();
  if (cfg.contains("hyperparams")) hyper = hyperparams_from_json(cfg.at("hyperparams"));
  hyper.seed = seed;
  const int exclude = cfg.value("exclude_policy", -1);
  const std::string kind = cfg.value("model", "causalsim");
  const std::uint64_t fingerprint = dataset_fingerprint(cfg.at("dataset").get<std::string>());

  std::string model_path;
  if (kind == "causalsim") {
    CausalSimModel model = train_causalsim(ds, hyper, exclude);
    model.dataset_hash = fingerprint;
    model_path = out_dir + "/causalsim_model.json";
    write_json(model_path, causalsim_to_json(model));
  } else if (kind == "slsim") {
    SLSimModel model = train_slsim(ds, hyper, exclude);
    model.dataset_hash = fingerprint;
    model_path = out_dir + "/slsim_model.json";
    write_json(model_path, slsim_to_json(model));
  } else {
    throw CliError(kExitConfig, "model must be causalsim or slsim, got " + kind);
  }
  write_manifest(out_dir, "train", seed, cfg, json{{"model", model_path}});
  std::cout << "wrote " << model_path << "\n";
  return kExitOk;
}

int cmd_tune(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const RCTDataset ds = load_dataset_checked(cfg);
  Hyperparams hyper = ds.env_kind == EnvKind::Abr ? default_abr_hyperparams() : default_lb_hyperparams();
  if (cfg.contains("hyperparams")) hyper = hyperparams_from_json(cfg.at("hyperparams"));
  hyper.seed = seed;
  const auto grid = cfg.value("kappa_grid", hyper.kappa_grid);
  const int heldout = cfg.value("heldout_policy", -1);

  const TuneResult result = tune_hyperparams(ds, hyper, grid, heldout);
  json diag{{"kappa_grid", result.kappa_grid},
            {"validation_metric", result.validation_metric},
            {"test_metric", result.test_metric},
            {"best_kappa", result.best_kappa},
            {"best_index", result.best_index}};
  if (result.validation_test_pcc) diag["validation_test_pcc"] = *result.validation_test_pcc;
  write_json(out_dir + "/tune_result.json", diag);
  write_manifest(out_dir, "tune", seed, cfg, json{{"tune_result", out_dir + "/tune_result.json"}});
  std::cout << "best kappa " << result.best_kappa << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const RCTDataset ds = load_dataset_checked(cfg);
  const int target = cfg.at("target_policy").get<int>();
  const int source = cfg.value("source_policy", -1);
  const int cap = cfg.value("max_sources", -1);
  const std::string simulator = cfg.value("simulator", "causalsim");

  CausalSimModel causal;
  SLSimModel sl;
  json provenance{{"simulator", simulator},
                  {"target_policy", target},
                  {"dataset_fingerprint", dataset_fingerprint(cfg.at("dataset").get<std::string>())}};
  if (simulator == "causalsim") {
    causal = causalsim_from_json(load_config(cfg.at("model").get<std::string>()));
    provenance["model_fingerprint"] = fingerprint_bytes(causalsim_to_json(causal).dump());
  } else if (simulator == "slsim") {
    sl = slsim_from_json(load_config(cfg.at("model").get<std::string>()));
    provenance["model_fingerprint"] = fingerprint_bytes(slsim_to_json(sl).dump());
  } else if (simulator != "expertsim") {
    throw CliError(kExitConfig, "simulator must be causalsim, slsim or expertsim");
  }

  RCTDataset rollouts;
  rollouts.env_kind = ds.env_kind;
  rollouts.seed = ds.seed;
  rollouts.policy_registry = ds.policy_registry;
  rollouts.env_config = ds.env_config;
  rollouts.action_count = ds.action_count;
  rollouts.trace_dim = ds.trace_dim;
  rollouts.synthetic = false;
  int used = 0;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    if (source >= 0 && ds.trajectories[i].policy_id != source) continue;
    if (cap > 0 && used >= cap) break;
    ++used;
    RolloutResult r;
    if (simulator == "causalsim") {
      r = causalsim_rollout(causal, ds, static_cast<int>(i), ds.policy_registry[target], target);
    } else if (simulator == "slsim") {
      r = slsim_rollout(sl, ds, static_cast<int>(i), ds.policy_registry[target], target);
    } else {
      r = expertsim_rollout(ds, static_cast<int>(i), ds.policy_registry[target], target);
    }
    rollouts.trajectories.push_back(std::move(r.trajectory));
  }
  save_dataset(rollouts, out_dir);
  write_json(out_dir + "/provenance.json", provenance);
  write_manifest(out_dir, "simulate", seed, cfg, json{{"rollouts", out_dir}, {"count", used}});
  std::cout << "simulated " << used << " rollouts\n";
  return kExitOk;
}

int cmd_eval(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const RCTDataset ds = load_dataset_checked(cfg);
  const auto targets = cfg.at("targets").get<std::vector<int>>();

  std::map<int, CausalSimModel> causal_models;
  std::map<int, SLSimModel> sl_models;
  if (cfg.contains("causalsim_models")) {
    for (const auto& [key, path] : cfg.at("causalsim_models").items()) {
      causal_models[std::stoi(key)] = causalsim_from_json(load_config(path.get<std::string>()));
    }
  }
  if (cfg.contains("slsim_models")) {
    for (const auto& [key, path] : cfg.at("slsim_models").items()) {
      sl_models[std::stoi(key)] = slsim_from_json(load_config(path.get<std::string>()));
    }
  }
  std::vector<SimulatorKind> kinds;
  for (const auto& name : cfg.value("simulators", std::vector<std::string>{"causalsim"})) {
    if (name == "causalsim") kinds.push_back(SimulatorKind::CausalSim);
    if (name == "expertsim") kinds.push_back(SimulatorKind::ExpertSim);
    if (name == "slsim") kinds.push_back(SimulatorKind::SLSim);
  }
  EvalReport report = eval_grid(ds, targets, causal_models, sl_models, kinds,
                                cfg.value("source_cap", -1));
  report.dataset_hash = dataset_fingerprint(cfg.at("dataset").get<std::string>());
  write_eval_csv(report, out_dir + "/pair_metrics.csv");
  write_manifest(out_dir, "eval", seed, cfg,
                 json{{"pair_metrics", out_dir + "/pair_metrics.csv"},
                      {"dataset_fingerprint", report.dataset_hash}});
  std::cout << "evaluated " << report.entries.size() << " (source, target, simulator) cells\n";
  return kExitOk;
}

OutcomeTensor tensor_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitConfig, "cannot open tensor csv: " + path);
  struct Entry {
    int action;
    long column;
    int dim;
    double value;
  };
  std::vector<Entry> entries;
  int actions = 0, dims = 0;
  std::int64_t columns = 0;
  std::string line;
  std::getline(in, line);  // header: alpha,beta,gamma,value
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Entry e;
    if (std::sscanf(line.c_str(), "%d,%ld,%d,%lf", &e.action, &e.column, &e.dim, &e.value) != 4) {
      throw CliError(kExitConfig, "bad tensor csv row: " + line);
    }
    actions = std::max(actions, e.action + 1);
    columns = std::max<std::int64_t>(columns, e.column + 1);
    dims = std::max(dims, e.dim + 1);
    entries.push_back(e);
  }
  OutcomeTensor tensor;
  tensor.action_count = actions;
  tensor.columns = columns;
  tensor.trace_dim = dims;
  tensor.values.assign(static_cast<std::size_t>(actions) * columns * dims, 0.0);
  tensor.observed_action.assign(columns, -1);
  tensor.column_policy.assign(columns, 0);
  tensor.column_key.resize(columns);
  for (std::int64_t b = 0; b < columns; ++b) tensor.column_key[b] = {b, 1};
  for (const auto& e : entries) {
    if (tensor.observed_action[e.column] >= 0 && tensor.observed_action[e.column] != e.action) {
      throw CliError(kExitConfig, "column " + std::to_string(e.column) + " has two observed actions");
    }
    tensor.observed_action[e.column] = e.action;
    tensor.values[tensor.index(e.action, e.column, e.dim)] = e.value;
  }
  for (std::int64_t b = 0; b < columns; ++b) {
    if (tensor.observed_action[b] < 0) {
      throw CliError(kExitConfig, "column " + std::to_string(b) + " has no observation");
    }
  }
  return tensor;
}

int cmd_complete(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  OutcomeTensor tensor = tensor_from_csv(cfg.at("tensor_csv").get<std::string>());

  {
    std::ifstream in(cfg.at("partition_csv").get<std::string>());
    if (!in) throw CliError(kExitConfig, "cannot open partition csv");
    std::string line;
    std::getline(in, line);  // header: beta,policy
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      long beta;
      int policy;
      if (std::sscanf(line.c_str(), "%ld,%d", &beta, &policy) != 2) {
        throw CliError(kExitConfig, "bad partition row: " + line);
      }
      tensor.column_policy.at(beta) = policy;
    }
  }
  const PolicyPartition partition = partition_by_policy(tensor);
  const int rank = cfg.value("rank", 1);

  const AssumptionReport report = check_assumptions(tensor, partition, rank);
  write_json(out_dir + "/assumptions.json",
             json{{"rank", report.rank},
                  {"trace_dim", report.trace_dim},
                  {"action_count", report.action_count},
                  {"policy_count", report.policy_count},
                  {"measurements_ok", report.measurements_ok},
                  {"policy_count_ok", report.policy_count_ok},
                  {"actions_covered", report.actions_covered},
                  {"per_action_counts", report.per_action_counts},
                  {"s_rank", report.s_rank},
                  {"s_rank_required", report.s_rank_required},
                  {"diversity_ok", report.diversity_ok},
                  {"s_singular_values", report.s_singular_values},
                  {"all_ok", report.all_ok}});

  std::ofstream out(out_dir + "/completed.csv");
  out << "alpha,beta,gamma,value\n";
  if (rank == 1 && tensor.trace_dim == 1) {
    const Rank1Result result = complete_rank1(tensor, partition);
    for (int a = 0; a < tensor.action_count; ++a) {
      for (std::int64_t b = 0; b < tensor.columns; ++b) {
        out << a << "," << b << ",0," << format_double(result.completed(a, b)) << "\n";
      }
    }
  } else {
    const RankRResult result =
        complete_rank_r(tensor, partition, rank, cfg.value("null_gap_guard", 0.1));
    for (int a = 0; a < tensor.action_count; ++a) {
      for (std::int64_t b = 0; b < tensor.columns; ++b) {
        for (int g = 0; g < tensor.trace_dim; ++g) {
          out << a << "," << b << "," << g << ","
              << format_double(result.completed[result.index(a, b, g, tensor.columns, tensor.trace_dim)])
              << "\n";
        }
      }
    }
  }
  write_manifest(out_dir, "complete", seed, cfg,
                 json{{"completed", out_dir + "/completed.csv"},
                      {"assumptions", out_dir + "/assumptions.json"}});
  std::cout << "wrote " << out_dir << "/completed.csv\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const RCTDataset ds = load_dataset_checked(cfg);
  const CausalSimModel model = causalsim_from_json(load_config(cfg.at("model").get<std::string>()));

  std::vector<PolicySpec> grid;
  if (cfg.contains("grid")) {
    grid = cfg.at("grid").get<std::vector<PolicySpec>>();
  } else {
    const std::string family = cfg.value("family", "bba");
    if (family == "bba") {
      for (double reservoir : {1.0, 3.0, 5.0, 7.0, 9.0}) {
        for (double cushion : {2.0, 5.0, 8.0}) {
          grid.push_back(PolicySpec{"bba", {{"reservoir", reservoir}, {"cushion", cushion}}});
        }
      }
    } else if (family == "bola") {
      for (double v : {0.3, 0.5, 0.71, 1.0, 1.5}) {
        for (double gamma : {0.1, 0.22, 0.5}) {
          grid.push_back(PolicySpec{"bola", {{"v", v}, {"gamma", gamma}}});
        }
      }
    } else {
      throw CliError(kExitConfig, "family must be bba or bola");
    }
  }
  const auto points = pareto_sweep(model, ds, grid, cfg.value("source_cap", -1));
  std::ofstream out(out_dir + "/sweep.csv");
  out << "policy,stall_rate,stall_rate_lo,stall_rate_hi,mean_bitrate,mean_qoe,on_frontier\n";
  for (const auto& p : points) {
    out << p.spec.name() << "," << format_double(p.stall_rate) << ","
        << format_double(p.stall_rate_lo) << "," << format_double(p.stall_rate_hi) << ","
        << format_double(p.mean_bitrate) << "," << format_double(p.mean_qoe) << ","
        << (p.on_frontier ? 1 : 0) << "\n";
  }
  write_manifest(out_dir, "sweep", seed, cfg, json{{"sweep", out_dir + "/sweep.csv"}});
  std::cout << "swept " << points.size() << " parameterizations\n";
  return kExitOk;
}

int cmd_report(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  const auto inputs = cfg.at("eval_csvs").get<std::vector<std::string>>();
  std::ofstream out(out_dir + "/report.csv");
  out << "source_csv,simulator,source_policy,target_policy,metric,value\n";
  for (const auto& path : inputs) {
    const EvalReport report = read_eval_csv(path);
    for (const auto& e : report.entries) {
      auto row = [&](const std::string& metric, double value) {
        if (!std::isnan(value)) {
          out << path << "," << e.simulator << "," << e.source_policy << "," << e.target_policy << ","
              << metric << "," << format_double(value) << "\n";
        }
      };
      row("emd", e.emd);
      row("mape", e.mape);
      row("mse", e.mse);
      row("latency_mape", e.latency_mape);
    }
  }
  write_manifest(out_dir, "report", seed, cfg, json{{"report", out_dir + "/report.csv"}});
  std::cout << "wrote " << out_dir << "/report.csv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"counterfactual trace-driven simulation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->required();
    cmd->add_option("--seed", seed, "64-bit seed");
    cmd->add_option("--out", out_dir, "output directory");
  };
  for (const char* name : {"gen-abr", "gen-lb", "train", "tune", "simulate", "eval", "complete",
                           "sweep", "report"}) {
    add_common(app.add_subcommand(name));
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw CliError(kExitConfig, "cannot create output directory: " + out_dir);

    if (command == "gen-abr") return cmd_gen(EnvKind::Abr, config_path, seed, out_dir);
    if (command == "gen-lb") return cmd_gen(EnvKind::Lb, config_path, seed, out_dir);
    if (command == "train") return cmd_train(config_path, seed, out_dir);
    if (command == "tune") return cmd_tune(config_path, seed, out_dir);
    if (command == "simulate") return cmd_simulate(config_path, seed, out_dir);
    if (command == "eval") return cmd_eval(config_path, seed, out_dir);
    if (command == "complete") return cmd_complete(config_path, seed, out_dir);
    if (command == "sweep") return cmd_sweep(config_path, seed, out_dir);
    if (command == "report") return cmd_report(config_path, seed, out_dir);
    return kExitConfig;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const AssumptionError& e) {
    std::cerr << "assumption check failed (" << e.assumption() << "): " << e.what() << "\n";
    return kExitAssumption;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
