// Command-line front end: synth, preprocess, train, detect, eval-only.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lan/checkpoint.hpp"
#include "lan/config.hpp"
#include "lan/evaluation.hpp"
#include "lan/ingest.hpp"
#include "lan/persist.hpp"
#include "lan/synthgen.hpp"
#include "lan/training.hpp"

namespace fs = std::filesystem;
using namespace lan;

namespace {

struct Workspace {
  std::string root = ".";
  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(root) / path;
  }
};

std::int64_t parse_date(const std::string& key, const std::string& value) {
  try {
    return parse_timestamp(value.size() == 10 ? value + " 00:00:00" : value);
  } catch (const InputError&) {
    throw InvalidConfig(key + ": expected a date, got '" + value + "'");
  }
}

SplitConfig load_split(const fs::path& path) {
  SplitConfig s = SplitConfig::cert_default();
  for (const auto& [k, v] : read_key_value_file(path)) {
    if (k == "train_start") s.train_start = parse_date(k, v);
    else if (k == "test_start") s.test_start = parse_date(k, v);
    else if (k == "test_end") s.test_end = parse_date(k, v);
    else if (k == "validation_fraction") s.validation_fraction = std::stod(v);
    else throw InvalidConfig("unknown split key '" + k + "'");
  }
  return s;
}

void write_split(const fs::path& path, const SplitConfig& s) {
  std::ofstream out(path);
  out << "train_start = " << format_timestamp(s.train_start) << '\n'
      << "test_start = " << format_timestamp(s.test_start) << '\n'
      << "test_end = " << format_timestamp(s.test_end) << '\n'
      << "validation_fraction = " << s.validation_fraction << '\n';
}

std::vector<Instance> instances_for(const ModelConfig& cfg, const std::vector<Session>& sessions) {
  return detection_instances(cfg, sessions);
}

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidConfig("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

int run_synth(const Workspace& ws, const std::string& config_path, const std::string& out,
              const std::vector<std::string>& sets) {
  synth::SynthConfig cfg;
  if (!config_path.empty())
    for (const auto& [k, v] : read_key_value_file(ws.resolve(config_path))) cfg.set(k, v);
  for (const auto& [k, v] : parse_overrides(sets)) cfg.set(k, v);
  cfg.validate();
  const fs::path dir = ws.resolve(out);
  const auto stats = synth::generate(cfg, dir);
  write_split(dir / "split.conf", synth::default_split(cfg));
  std::cout << "events=" << stats.events << " abnormal=" << stats.abnormal
            << " sessions=" << stats.sessions << " episodes=" << stats.episodes
            << " imbalance_ratio=" << stats.imbalance_ratio() << '\n';
  return 0;
}

int run_preprocess(const Workspace& ws, const std::string& logs, const std::string& types,
                   const std::string& truth, const std::string& split, const std::string& out,
                   bool no_dedup, int tz) {
  const fs::path log_dir = ws.resolve(logs);
  const auto table = ActivityTypeTable::load(ws.resolve(types));
  const GroundTruth gt = truth.empty() ? GroundTruth{} : GroundTruth::load(ws.resolve(truth));
  IngestOptions opts;
  opts.dedup_http = !no_dedup;
  opts.tz_offset_hours = tz;
  auto ingested = ingest_directory(log_dir, table, gt, opts);
  if (ingested.events == 0) throw EmptySplit("no events found under " + log_dir.string());
  const SplitConfig sc = split.empty() ? SplitConfig::cert_default() : load_split(ws.resolve(split));
  std::size_t normal = 0, abnormal = 0;
  for (const auto& s : ingested.sessions)
    for (auto l : s.labels) (l ? abnormal : normal)++;
  const DatasetSplit ds = split_by_time(std::move(ingested.sessions), sc);
  const fs::path dir = ws.resolve(out);
  fs::create_directories(dir);
  write_session_file(dir / "train.csv", ds.train);
  write_session_file(dir / "validation.csv", ds.validation, ds.train.size());
  write_session_file(dir / "test.csv", ds.test, ds.train.size() + ds.validation.size());
  table.save(dir / "types.txt");
  std::ofstream stats(dir / "stats.txt");
  const auto ir = ds.imbalance_ratio();
  stats << "events = " << ingested.events << '\n'
        << "normal_after_preprocessing = " << normal << '\n'
        << "abnormal_after_preprocessing = " << abnormal << '\n'
        << "imbalance_ratio = " << (abnormal ? static_cast<double>(normal) / abnormal : 0.0) << '\n'
        << "degenerate_sessions = " << ingested.degenerate_sessions << '\n'
        << "train_sessions = " << ds.train.size() << '\n'
        << "validation_sessions = " << ds.validation.size() << '\n'
        << "test_sessions = " << ds.test.size() << '\n'
        << "dropped_sessions = " << ds.dropped_sessions << '\n'
        << "train_imbalance_ratio = " << (ir ? *ir : 0.0) << '\n';
  std::cout << "normal=" << normal << " abnormal=" << abnormal << " train=" << ds.train.size()
            << " validation=" << ds.validation.size() << " test=" << ds.test.size() << '\n';
  return 0;
}

int run_train(const Workspace& ws, const std::string& config_path,
              const std::vector<std::string>& sets, const std::string& data,
              const std::string& output) {
  auto overrides = parse_overrides(sets);
  if (!data.empty()) overrides.emplace_back("data", data);
  if (!output.empty()) overrides.emplace_back("output", output);
  const fs::path cfg_file = config_path.empty() ? fs::path() : ws.resolve(config_path);
  RunConfig cfg = RunConfig::load(config_path.empty() ? nullptr : &cfg_file, overrides);
  const fs::path data_dir = ws.resolve(cfg.data);
  const fs::path out_dir = ws.resolve(cfg.output);
  const auto table = ActivityTypeTable::load(data_dir / "types.txt");
  cfg.model.vocab_size = table.vocab_size(cfg.model.mode == DetectMode::post_hoc);
  const auto train_sessions = read_session_file(data_dir / "train.csv");
  const auto val_sessions = read_session_file(data_dir / "validation.csv");
  const auto train_set = instances_for(cfg.model, train_sessions);
  const auto val_set = instances_for(cfg.model, val_sessions);
  std::cerr << "train instances=" << train_set.size() << " validation instances=" << val_set.size()
            << '\n';
  const auto result = train(cfg.model, train_set, val_set, cfg.train, [](const EpochRecord& r) {
    std::cerr << "lr=" << r.lr << " epoch=" << r.epoch << " loss=" << r.train_loss
              << " val=" << r.val_auc << " (" << r.seconds << "s)\n";
  });
  save_model(out_dir, result.model, cfg, table);
  {
    std::ofstream log(out_dir / "train_log.csv");
    write_training_log(log, result.log);
  }
  {
    std::ofstream echo(out_dir / "config.txt");
    echo << cfg.to_text();
  }
  std::cout << "best_lr=" << result.best_lr << " best_epoch=" << result.best_epoch
            << " best_val=" << result.best_val_auc << " r=" << result.r << '\n';
  if (result.diverged) {
    std::cerr << "training diverged; kept the last finite checkpoint\n";
    return 2;
  }
  return 0;
}

int run_detect(const Workspace& ws, const std::string& model_dir, const std::string& data,
               const std::string& split, const std::string& mode, const std::string& out,
               bool export_vectors, std::size_t dump_graphs) {
  const fs::path data_dir = ws.resolve(data);
  const auto table = ActivityTypeTable::load(data_dir / "types.txt");
  const LoadedModel loaded = load_model(ws.resolve(model_dir), &table);
  const DetectMode requested = parse_detect_mode(mode);
  const auto sessions = read_session_file(data_dir / (split + ".csv"));
  const DetectResult result = detect(loaded.model, sessions, requested);
  const fs::path out_dir = ws.resolve(out);
  fs::create_directories(out_dir);
  {
    std::ofstream s(out_dir / "scores.csv");
    write_scores(s, result.scores);
  }
  const EvalReport report = evaluate(result.scores, result.mean_latency_ms);
  {
    std::ofstream r(out_dir / "report.txt");
    write_report(r, report);
  }
  {
    std::vector<double> probs;
    std::vector<std::uint8_t> labels;
    for (const auto& s : result.scores) {
      probs.push_back(s.probability);
      labels.push_back(s.label);
    }
    std::ofstream roc(out_dir / "roc.csv");
    write_roc(roc, roc_and_auc(probs, labels));
  }
  if (export_vectors || dump_graphs > 0) {
    const auto instances = detection_instances(loaded.model.config(), sessions);
    std::ofstream vec;
    std::ofstream graphs;
    if (export_vectors) vec.open(out_dir / "vectors.csv");
    if (dump_graphs > 0) graphs.open(out_dir / "graphs.txt");
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const ForwardState st = loaded.model.forward(instances[i]);
      if (export_vectors) {
        vec << sessions[instances[i].session].user_id << ',' << instances[i].position << ','
            << int{instances[i].label};
        for (Eigen::Index j = 0; j < st.enhanced.size(); ++j) vec << ',' << st.enhanced(j);
        vec << '\n';
      }
      if (i < dump_graphs && st.adj.size() > 0) {
        graphs << "# instance " << i << " user " << sessions[instances[i].session].user_id
               << " position " << instances[i].position << '\n';
        graph::write_edge_list(graphs, st.adj);
      }
    }
  }
  std::cout << "auc=" << report.auc << " dr=" << report.dr << " fpr=" << report.fpr
            << " activities=" << report.activities << " latency_ms=" << report.latency_ms << '\n';
  return 0;
}

int run_eval_only(const Workspace& ws, const std::string& scores_path, const std::string& out) {
  const auto scores = read_scores(ws.resolve(scores_path));
  const EvalReport report = evaluate(scores);
  const fs::path out_dir = ws.resolve(out);
  fs::create_directories(out_dir);
  std::ofstream r(out_dir / "report.txt");
  write_report(r, report);
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
  for (const auto& s : scores) {
    probs.push_back(s.probability);
    labels.push_back(s.label);
  }
  std::ofstream roc(out_dir / "roc.csv");
  write_roc(roc, roc_and_auc(probs, labels));
  std::cout << "auc=" << report.auc << " dr=" << report.dr << " fpr=" << report.fpr << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Insider-threat activity scoring: synth, preprocess, train, detect, eval-only"};
  app.require_subcommand(1);
  Workspace ws;
  app.add_option("--workspace", ws.root, "Root for every relative path")->capture_default_str();

  std::string synth_config, synth_out;
  std::vector<std::string> synth_sets;
  auto* synth = app.add_subcommand("synth", "Generate synthetic raw logs");
  synth->add_option("--config", synth_config, "Synth key-value config");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--set", synth_sets, "Override key=value (repeatable)");

  std::string pp_logs, pp_types, pp_truth, pp_split, pp_out;
  bool pp_no_dedup = false;
  int pp_tz = 0;
  auto* pre = app.add_subcommand("preprocess", "Sessionize, label and split raw logs");
  pre->add_option("--logs", pp_logs, "Directory holding <source>.csv files")->required();
  pre->add_option("--types", pp_types, "Activity type table")->required();
  pre->add_option("--truth", pp_truth, "Ground-truth id list");
  pre->add_option("--split", pp_split, "Split boundaries (key-value)");
  pre->add_option("--out", pp_out, "Output directory")->required();
  pre->add_flag("--no-http-dedup", pp_no_dedup, "Keep repeated http activity");
  pre->add_option("--tz-offset", pp_tz, "Hours added before taking the hour of day");

  std::string tr_config, tr_data, tr_output;
  std::vector<std::string> tr_sets;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", tr_config, "Run config (key-value)");
  tr->add_option("--set", tr_sets, "Override key=value (repeatable)");
  tr->add_option("--data", tr_data, "Preprocessed data directory");
  tr->add_option("--output", tr_output, "Model output directory");

  std::string dt_model, dt_data, dt_split = "test", dt_mode = "rt", dt_out;
  bool dt_vectors = false;
  std::size_t dt_graphs = 0;
  auto* det = app.add_subcommand("detect", "Score a split and report metrics");
  det->add_option("--model", dt_model, "Model directory")->required();
  det->add_option("--data", dt_data, "Preprocessed data directory")->required();
  det->add_option("--split", dt_split, "train, validation or test")->capture_default_str();
  det->add_option("--mode", dt_mode, "rt or ph")->capture_default_str();
  det->add_option("--out", dt_out, "Output directory")->required();
  det->add_flag("--export-vectors", dt_vectors, "Write enhanced node-0 vectors");
  det->add_option("--dump-graphs", dt_graphs, "Write edge lists for the first N instances");

  std::string ev_scores, ev_out;
  auto* ev = app.add_subcommand("eval-only", "Recompute metrics from a scored file");
  ev->add_option("--scores", ev_scores, "scores.csv from detect")->required();
  ev->add_option("--out", ev_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return run_synth(ws, synth_config, synth_out, synth_sets);
    if (*pre)
      return run_preprocess(ws, pp_logs, pp_types, pp_truth, pp_split, pp_out, pp_no_dedup, pp_tz);
    if (*tr) return run_train(ws, tr_config, tr_sets, tr_data, tr_output);
    if (*det)
      return run_detect(ws, dt_model, dt_data, dt_split, dt_mode, dt_out, dt_vectors, dt_graphs);
    if (*ev) return run_eval_only(ws, ev_scores, ev_out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
