// Line-delimited JSON trial log. One record per evaluation:
//   {"stage":"S2","config":[1,2,1,4],"accuracy":93.2,"epochs":20,
//    "seed":0,"wall_time":12.5,"config_hash":"..."}
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsnn/error.hpp"
#include "sdsnn/search.hpp"

namespace sdsnn {

inline nlohmann::json trial_to_json(const Trial& t, const std::string& config_hash) {
  return {{"stage", to_string(t.stage)}, {"config", t.config},     {"accuracy", t.objective},
          {"epochs", t.epochs},          {"seed", t.seed},         {"wall_time", t.wall_time},
          {"config_hash", config_hash}};
}

inline Trial trial_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("record is not an object");
  for (const char* k : {"stage", "config", "accuracy", "epochs", "seed", "wall_time"})
    if (!j.contains(k)) throw FormatError(std::string("missing field '") + k + "'");
  Trial t;
  try {
    t.stage = parse_stage(j.at("stage").get<std::string>());
    t.config = j.at("config").get<TimestepVector>();
    t.objective = j.at("accuracy").get<double>();
    t.epochs = j.at("epochs").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.wall_time = j.at("wall_time").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field type: ") + e.what());
  }
  if (t.config.empty()) throw FormatError("empty config");
  for (int v : t.config)
    if (v < 1) throw FormatError("config entry " + std::to_string(v) + " is not a positive timestep");
  if (t.epochs < 1) throw FormatError("epochs must be >= 1");
  return t;
}

struct LoggedTrial {
  Trial trial;
  std::string config_hash;
  std::optional<double> energy_mj;  // present on records written by a training run
  std::optional<double> spike_rate;
};

/// Reads every record; any malformed line raises a FormatError naming its
/// line number. Blank lines are skipped.
inline std::vector<LoggedTrial> read_trial_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trial log " + path.string());
  std::vector<LoggedTrial> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LoggedTrial lt{trial_from_json(j), j.value("config_hash", std::string()), {}, {}};
      if (j.contains("energy_mj") && j["energy_mj"].is_number()) lt.energy_mj = j["energy_mj"].get<double>();
      if (j.contains("spike_rate") && j["spike_rate"].is_number()) lt.spike_rate = j["spike_rate"].get<double>();
      out.push_back(std::move(lt));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const FormatError& e) {
      std::string msg = e.what();
      const std::string prefix = "format error: ";
      if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    }
  }
  return out;
}

/// Appends records and flushes after each one so a crash loses at most the
/// trial in flight.
class TrialLogWriter {
 public:
  TrialLogWriter(const std::filesystem::path& path, std::string config_hash)
      : out_(path, std::ios::app), hash_(std::move(config_hash)) {
    if (!out_) throw FormatError("cannot open trial log for writing: " + path.string());
  }

  void append(const Trial& t, nlohmann::json extra = nlohmann::json::object()) {
    auto j = trial_to_json(t, hash_);
    j.update(extra);
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::string hash_;
};

}  // namespace sdsnn
