// sdsnn: train, search, evaluate and report on spiking networks with
// self-dropping neurons.
//
// Exit codes: 0 ok, 2 validation, 3 data/format, 4 numeric, 5 integrity.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdsnn/checkpoint.hpp"
#include "sdsnn/config.hpp"
#include "sdsnn/runner.hpp"
#include "sdsnn/search.hpp"
#include "sdsnn/trial_log.hpp"

namespace fs = std::filesystem;
using namespace sdsnn;

namespace {

TimestepVector parse_timesteps(std::string s) {
  for (char& ch : s)
    if (ch == '[' || ch == ']' || ch == ',') ch = ' ';
  std::istringstream is(s);
  TimestepVector T;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      T.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("timesteps: '" + tok + "' is not an integer");
    }
  }
  return T;
}

// Flag values that override the config file when given.
struct Overrides {
  std::string config_path;
  std::optional<std::string> arch, T, neuron, dataset, data_root, out;
  std::optional<std::string> train_images, train_labels, test_images, test_labels;
  std::optional<int> num_classes, t_max, epochs, epochs_s1, epochs_s2, epochs_s3, trials_s2, trials_s3;
  std::optional<std::size_t> batch_size, subset_train, subset_test;
  std::optional<double> lr, drop_tolerance, synthetic_noise, e_mac, e_ac;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> synthetic_optimum;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config_path, "JSON config file");
  app->add_option("--arch", o.arch, "architecture string, e.g. Input-8C-SD-Voting-2");
  app->add_option("--neuron", o.neuron, "neuron kind: IF, LIF or SD");
  app->add_option("--dataset", o.dataset, "fashion-mnist, cifar10, cifar100 or idx");
  app->add_option("--data-root", o.data_root, "dataset root (default $SDSNN_DATA_ROOT or ./data)");
  app->add_option("--train-images", o.train_images, "IDX training images (implies --dataset idx)");
  app->add_option("--train-labels", o.train_labels, "IDX training labels");
  app->add_option("--test-images", o.test_images, "IDX test images");
  app->add_option("--test-labels", o.test_labels, "IDX test labels");
  app->add_option("--num-classes", o.num_classes, "class count for IDX datasets");
  app->add_option("--subset-train", o.subset_train, "training subset size");
  app->add_option("--subset-test", o.subset_test, "test subset size");
  app->add_option("--t-max", o.t_max, "upper bound on per-layer timesteps");
  app->add_option("--batch-size", o.batch_size, "training batch size");
  app->add_option("--lr", o.lr, "base learning rate");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--threads", o.threads, "evaluation threads (1 = bitwise reproducible)");
  app->add_option("--e-mac", o.e_mac, "energy per MAC in pJ");
  app->add_option("--e-ac", o.e_ac, "energy per AC in pJ");
  app->add_option("-o,--out", o.out, "output directory");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.arch) c.arch = *o.arch;
  if (o.T) c.timesteps = parse_timesteps(*o.T);
  if (o.neuron) {
    try {
      c.neuron.kind = parse_neuron_kind(*o.neuron);
    } catch (const Error&) {
      throw ConfigError("--neuron: unknown neuron kind '" + *o.neuron + "'");
    }
  }
  if (o.dataset) c.dataset.name = *o.dataset;
  if (o.data_root) c.dataset.root = *o.data_root;
  if (o.train_images) {
    c.dataset.name = "idx";
    c.dataset.train_images = *o.train_images;
  }
  if (o.train_labels) c.dataset.train_labels = *o.train_labels;
  if (o.test_images) c.dataset.test_images = *o.test_images;
  if (o.test_labels) c.dataset.test_labels = *o.test_labels;
  if (o.num_classes) c.dataset.num_classes = *o.num_classes;
  if (o.subset_train) c.subset.train_count = *o.subset_train;
  if (o.subset_test) c.subset.test_count = *o.subset_test;
  if (o.t_max) c.t_max = *o.t_max;
  if (o.epochs) c.epochs.train = *o.epochs;
  if (o.epochs_s1) c.epochs.stage1 = *o.epochs_s1;
  if (o.epochs_s2) c.epochs.stage2 = *o.epochs_s2;
  if (o.epochs_s3) c.epochs.stage3 = *o.epochs_s3;
  if (o.trials_s2) c.search.trials_stage2 = *o.trials_s2;
  if (o.trials_s3) c.search.trials_stage3 = *o.trials_s3;
  if (o.drop_tolerance) c.search.drop_tolerance = *o.drop_tolerance;
  if (o.synthetic_optimum) {
    c.search.synthetic.enabled = true;
    c.search.synthetic.optimum = parse_timesteps(*o.synthetic_optimum);
  }
  if (o.synthetic_noise) c.search.synthetic.noise = *o.synthetic_noise;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.lr) c.lr = *o.lr;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.e_mac) c.e_mac_pj = *o.e_mac;
  if (o.e_ac) c.e_ac_pj = *o.e_ac;
  if (o.out) c.output_dir = *o.out;
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out << s;
}

void write_resolved_config(const RunConfig& c, const std::string& hash) {
  auto j = config_to_json(c);
  j["config_hash"] = hash;
  write_text(fs::path(c.output_dir) / "config.json", j.dump(2) + "\n");
}

ReportRow metrics_row(const std::string& model, const TimestepVector& T, const EvalMetrics& m, int epochs) {
  return {model, T, m.accuracy, m.energy.total_mj, m.spike_rate_percent, "", epochs};
}

nlohmann::json metrics_json(const EvalMetrics& m, const RunConfig& c) {
  return {{"accuracy", m.accuracy},
          {"energy_mj", m.energy.total_mj},
          {"energy_pj", m.energy.total_pj},
          {"per_layer_mj", m.energy.per_layer_mj},
          {"spike_rate", m.spike_rate_percent},
          {"mac_ops", m.ops.total_mac()},
          {"ac_ops", m.ops.total_ac()},
          {"images", m.images},
          {"e_mac_pj", c.e_mac_pj},
          {"e_ac_pj", c.e_ac_pj}};
}

int cmd_train(const Overrides& o) {
  RunConfig c = resolve(o);
  validate_config(c, Command::train);
  const std::string hash = config_hash(c);
  const auto data = load_data(c);
  fs::create_directories(c.output_dir);
  write_resolved_config(c, hash);

  const fs::path out = c.output_dir;
  std::ofstream log(out / "metrics.jsonl", std::ios::trunc);
  const CosineSchedule sched{c.lr, c.min_lr, c.epochs.train};
  auto run = train_network(c, data.train, c.timesteps, c.epochs.train, [&](int e, const EpochStats& s) {
    log << nlohmann::json{{"epoch", e + 1},
                          {"lr", cosine_lr(sched, e)},
                          {"loss", s.mean_loss},
                          {"train_accuracy", s.accuracy},
                          {"config_hash", hash}}
               .dump()
        << '\n';
    log.flush();
    std::cout << "epoch " << e + 1 << "/" << c.epochs.train << "  loss " << s.mean_loss << "  train acc "
              << s.accuracy << "%\n";
  });
  save_checkpoint(out / "model.ckpt", run.net, hash);

  const auto m = evaluate_with_metrics(run.net, data.test, c.timesteps, c.e_mac_pj, c.e_ac_pj, c.eval_batch_size,
                                       c.threads);
  auto final = metrics_json(m, c);
  final["T"] = c.timesteps;
  final["config_hash"] = hash;
  log << nlohmann::json{{"final", final}}.dump() << '\n';

  const std::string model = to_string(c.neuron.kind);
  const auto row = metrics_row(model, c.timesteps, m, c.epochs.train);
  nlohmann::json report = {{"rows", {row_to_json(row)}}, {"metrics", final}, {"config_hash", hash}};
  write_text(out / "report.json", report.dump(2) + "\n");
  TrialLogWriter trial_log(out / "trials.jsonl", hash);
  trial_log.append(Trial{c.timesteps, m.accuracy, Stage::S3, c.epochs.train, c.seed, 0.0},
                   {{"energy_mj", m.energy.total_mj}, {"spike_rate", m.spike_rate_percent}});
  std::cout << render_table({row});
  return 0;
}

int cmd_eval(const Overrides& o, const std::string& checkpoint) {
  RunConfig c = resolve(o);
  auto ck = load_checkpoint(checkpoint);
  c.arch = ck.net.arch.text;
  c.neuron = ck.net.neuron;
  validate_config(c, Command::eval);
  const auto data = load_data(c);
  if (data.test.sample_shape() != ck.net.input_shape)
    throw ConfigError("checkpoint expects input " + shape_str(ck.net.input_shape) + ", dataset provides " +
                      shape_str(data.test.sample_shape()));
  const auto m = evaluate_with_metrics(ck.net, data.test, c.timesteps, c.e_mac_pj, c.e_ac_pj, c.eval_batch_size,
                                       c.threads);
  const auto row = metrics_row(to_string(c.neuron.kind), c.timesteps, m, 0);
  std::cout << render_table({row});
  if (o.out) {
    fs::create_directories(*o.out);
    auto j = metrics_json(m, c);
    j["T"] = c.timesteps;
    j["checkpoint_config_hash"] = ck.config_hash;
    j["config_hash"] = config_hash(c);
    write_text(fs::path(*o.out) / "eval.json", j.dump(2) + "\n");
  }
  return 0;
}

nlohmann::json stage_json(const StageResult& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) trials.push_back({{"config", t.config}, {"accuracy", t.objective}});
  return {{"best_config", r.best.config}, {"best_accuracy", r.best.objective}, {"incumbent", r.incumbent},
          {"trials", trials.size()}};
}

int cmd_search(const Overrides& o) {
  RunConfig c = resolve(o);
  validate_config(c, Command::search);
  const std::string hash = config_hash(c);
  fs::create_directories(c.output_dir);
  const fs::path log_path = fs::path(c.output_dir) / "trials.jsonl";

  std::vector<Trial> replay;
  if (fs::exists(log_path)) {
    std::vector<LoggedTrial> logged;
    try {
      logged = read_trial_log(log_path);
    } catch (const FormatError& e) {
      throw FormatError(std::string("cannot resume search: ") + e.what());
    }
    for (const auto& l : logged) {
      if (l.config_hash != hash)
        throw IntegrityError("cannot resume search: " + log_path.string() + " was written by config " +
                             l.config_hash + ", current config is " + hash);
      replay.push_back(l.trial);
    }
    std::cout << "resuming from " << replay.size() << " logged trials\n";
  }
  write_resolved_config(c, hash);

  std::optional<DataSplits> data;
  Evaluator eval;
  if (c.search.synthetic.enabled) {
    eval = synthetic_evaluator(c.search.synthetic.optimum, c.search.synthetic.noise, *c.epochs.stage3, c.seed);
  } else {
    data = load_data(c);
    eval = training_evaluator(c, *data);
  }
  TrialLogWriter writer(log_path, hash);
  TrialRecorder rec(eval, c.seed, replay, [&](const Trial& t) {
    writer.append(t);
    std::cout << to_string(t.stage) << " " << to_string(t.config) << " epochs " << t.epochs << " -> " << t.objective
              << "\n";
  });
  const auto r = three_stage_search(search_plan(c), rec);

  std::cout << "stage 1 retained timesteps:";
  for (int t : r.stage1.retained) std::cout << ' ' << t;
  std::cout << "\nstage 2 best " << to_string(r.stage2.best.config) << " at " << r.stage2.best.objective
            << "\nstage 3 best " << to_string(r.stage3.best.config) << " at " << r.stage3.best.objective
            << "\nfinal T " << to_string(r.best) << "\n";

  nlohmann::json s1 = nlohmann::json::array();
  for (const auto& t : r.stage1.trials) s1.push_back({{"config", t.config}, {"accuracy", t.objective}});
  nlohmann::json summary = {{"config_hash", hash},
                            {"stage1", {{"trials", s1}, {"retained", r.stage1.retained}}},
                            {"stage2", stage_json(r.stage2)},
                            {"stage3", stage_json(r.stage3)},
                            {"best_T", r.best},
                            {"evaluated", rec.evaluated()},
                            {"replayed", rec.replayed()}};
  write_text(fs::path(c.output_dir) / "search.json", summary.dump(2) + "\n");
  return 0;
}

std::string log_label(const fs::path& p) {
  const auto parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent + "/" + p.stem().string();
}

int cmd_report(const std::vector<std::string>& logs, const std::optional<std::string>& out) {
  std::vector<ReportRow> rows;
  nlohmann::json machine = {{"rows", nlohmann::json::array()}, {"logs", nlohmann::json::array()}};
  for (const auto& p : logs) {
    const auto records = read_trial_log(p);
    const auto row = summarize_log(log_label(p), records);
    rows.push_back(row);
    machine["rows"].push_back(row_to_json(row));
    nlohmann::json per_stage = nlohmann::json::object();
    for (const auto& [stage, t] : best_per_stage(records))
      per_stage[to_string(stage)] = {{"config", t.trial.config}, {"accuracy", t.trial.objective},
                                     {"epochs", t.trial.epochs}};
    machine["logs"].push_back({{"path", p}, {"records", records.size()}, {"best_per_stage", per_stage}});
  }
  const std::string table = render_table(rows);
  std::cout << table;
  if (out) {
    write_text(*out, machine.dump(2) + "\n");
    write_text(fs::path(*out).replace_extension(".txt"), table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking networks with self-dropping neurons and per-layer timestep search"};
  app.require_subcommand(1);

  Overrides o;
  auto* train = app.add_subcommand("train", "train a network at a fixed timestep vector");
  add_common(train, o);
  train->add_option("--T", o.T, "per-layer timesteps, e.g. 1,3,1,1");
  train->add_option("--epochs", o.epochs, "training epochs");

  auto* search = app.add_subcommand("search", "three-stage timestep search");
  add_common(search, o);
  search->add_option("--epochs-s1", o.epochs_s1, "stage-1 epochs");
  search->add_option("--epochs-s2", o.epochs_s2, "stage-2 epochs");
  search->add_option("--epochs-s3", o.epochs_s3, "stage-3 (final) epochs");
  search->add_option("--trials-s2", o.trials_s2, "stage-2 evaluation budget");
  search->add_option("--trials-s3", o.trials_s3, "stage-3 evaluation budget");
  search->add_option("--drop-tolerance", o.drop_tolerance, "stage-1 pruning margin in accuracy points");
  search->add_option("--synthetic-optimum", o.synthetic_optimum,
                     "replace training by the objective 100 - sum (t_l - c_l)^2 with this c");
  search->add_option("--synthetic-noise", o.synthetic_noise, "noise std for short-budget synthetic evaluations");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint: accuracy, energy, spike rate");
  add_common(eval, o);
  eval->add_option("--T", o.T, "per-layer timesteps");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  std::vector<std::string> logs;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "compare trial logs");
  report->add_option("logs", logs, "trial log files")->required();
  report->add_option("-o,--out", report_out, "machine-readable report path (.json); a .txt table is written beside it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::validation);
  }

  try {
    if (*train) return cmd_train(o);
    if (*search) return cmd_search(o);
    if (*eval) return cmd_eval(o, checkpoint);
    if (*report) return cmd_report(logs, report_out);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
