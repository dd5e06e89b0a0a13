#include "csim/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace csim {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

void write_or_throw(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_prefixed(const std::vector<std::string>& header, const std::string& prefix) {
  int n = 0;
  for (const auto& col : header) {
    if (col.rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void save_dataset(const RCTDataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory: " + dir + ": " + ec.message());

  int obs_dim = 0, latent_dim = 0;
  if (!dataset.trajectories.empty() && !dataset.trajectories.front().steps.empty()) {
    const Step& s = dataset.trajectories.front().steps.front();
    obs_dim = static_cast<int>(s.obs.size());
    latent_dim = static_cast<int>(s.latent_truth.size());
  }

  nlohmann::json manifest{
      {"env_kind", to_string(dataset.env_kind)},
      {"seed", dataset.seed},
      {"policies", dataset.policy_registry},
      {"env_config", dataset.env_config},
      {"n_trajectories", dataset.trajectories.size()},
      {"trace_dim", dataset.trace_dim},
      {"action_count", dataset.action_count},
  };
  write_or_throw(dir + "/manifest.json", manifest.dump(2) + "\n");

  std::ostringstream csv;
  csv << "traj_id,t,policy_id";
  for (int i = 0; i < obs_dim; ++i) csv << ",obs_" << i;
  csv << ",action";
  for (int i = 0; i < dataset.trace_dim; ++i) csv << ",trace_" << i;
  for (int i = 0; i < latent_dim; ++i) csv << ",latent_" << i;
  csv << "\n";
  for (const auto& traj : dataset.trajectories) {
    int t = 1;
    for (const auto& step : traj.steps) {
      csv << traj.id << "," << t << "," << traj.policy_id;
      for (double v : step.obs) csv << "," << format_double(v);
      csv << "," << step.action;
      for (double v : step.trace) csv << "," << format_double(v);
      for (double v : step.latent_truth) csv << "," << format_double(v);
      csv << "\n";
      ++t;
    }
  }
  write_or_throw(dir + "/steps.csv", csv.str());
}

RCTDataset load_dataset(const std::string& dir) {
  nlohmann::json manifest = nlohmann::json::parse(read_or_throw(dir + "/manifest.json"));

  RCTDataset ds;
  ds.env_kind = env_kind_from_string(manifest.at("env_kind").get<std::string>());
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.policy_registry = manifest.at("policies").get<std::vector<PolicySpec>>();
  ds.env_config = manifest.at("env_config");
  ds.trace_dim = manifest.at("trace_dim").get<int>();
  ds.action_count = manifest.at("action_count").get<int>();

  std::istringstream in(read_or_throw(dir + "/steps.csv"));
  std::string line;
  if (!std::getline(in, line)) return ds;
  auto header = split_csv_line(line);
  const int obs_dim = count_prefixed(header, "obs_");
  const int trace_dim = count_prefixed(header, "trace_");
  const int latent_dim = count_prefixed(header, "latent_");
  if (trace_dim != ds.trace_dim) throw std::runtime_error("steps.csv trace_dim disagrees with manifest in " + dir);
  ds.synthetic = latent_dim > 0;

  Trajectory* current = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    std::int64_t traj_id = std::stoll(fields[0]);
    int policy_id = std::stoi(fields[2]);
    if (current == nullptr || current->id != traj_id) {
      ds.trajectories.push_back(Trajectory{traj_id, policy_id, {}});
      current = &ds.trajectories.back();
    }
    Step step;
    int col = 3;
    step.obs.reserve(obs_dim);
    for (int i = 0; i < obs_dim; ++i) step.obs.push_back(std::stod(fields[col++]));
    step.action = std::stoi(fields[col++]);
    step.trace.reserve(trace_dim);
    for (int i = 0; i < trace_dim; ++i) step.trace.push_back(std::stod(fields[col++]));
    step.latent_truth.reserve(latent_dim);
    for (int i = 0; i < latent_dim; ++i) step.latent_truth.push_back(std::stod(fields[col++]));
    current->steps.push_back(std::move(step));
  }
  std::size_t expected = manifest.at("n_trajectories").get<std::size_t>();
  if (ds.trajectories.size() != expected) {
    throw std::runtime_error("steps.csv trajectory count disagrees with manifest in " + dir);
  }
  return ds;
}

std::uint64_t fingerprint_bytes(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t dataset_fingerprint(const std::string& dir) {
  std::uint64_t h = fingerprint_bytes(read_or_throw(dir + "/manifest.json"));
  return fingerprint_bytes(read_or_throw(dir + "/steps.csv"), h);
}

}  // namespace csim
