#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "desk/cli/pipeline.hpp"
#include "desk/cli/run_config.hpp"
#include "desk/eval/ablation.hpp"
#include "desk/eval/evaluate.hpp"
#include "desk/model/checkpoint.hpp"
#include "desk/train/trainer.hpp"

namespace desk {

inline constexpr const char* kOutputDirEnv = "DESK_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "desk-output";
inline constexpr std::size_t kPredictChunk = 256;

/// Flag value, else $DESK_OUTPUT_DIR, else ./desk-output.
inline std::filesystem::path output_dir_from(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return kDefaultOutputDir;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of no values");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) out.push_back(parse_field<std::uint64_t>("--seeds", s));
  if (out.empty()) throw ConfigError("--seeds lists no seeds");
  return out;
}

inline std::vector<TaskRatio> parse_ratios(const std::string& text) {
  std::vector<TaskRatio> out;
  for (const auto& s : split_list(text)) out.push_back(parse_ratio(s));
  if (out.empty()) throw ConfigError("--ratios lists no ratios");
  return out;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
  if (!f) throw Error("cannot write '" + path.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

/// Prefixes every line of a key=value record.
inline std::string prefixed(const std::string& prefix, const std::string& record) {
  std::string out;
  std::size_t start = 0;
  while (start < record.size()) {
    const auto end = record.find('\n', start);
    out += prefix + record.substr(start, end - start) + '\n';
    start = end == std::string::npos ? record.size() : end + 1;
  }
  return out;
}

struct SeedScores {
  std::vector<double> accuracy;
  std::vector<double> macro_f1;
  std::string record;  // per-seed records, prefixed
};

inline ScoreRow median_row(const std::string& name, const SeedScores& s) {
  return {name, median(s.accuracy), median(s.macro_f1)};
}

inline std::string median_record(const std::string& name, const SeedScores& s) {
  return s.record + name + ".median_accuracy=" + format_exact(median(s.accuracy)) + '\n' + name +
         ".median_macro_f1=" + format_exact(median(s.macro_f1)) + '\n';
}

inline void add_score(SeedScores& s, const std::string& name, std::uint64_t seed, const MetricsReport& r) {
  s.accuracy.push_back(r.accuracy);
  s.macro_f1.push_back(r.macro_f1);
  s.record += prefixed(name + ".seed" + std::to_string(seed) + ".", render_record(r));
}

}  // namespace detail

/// Trains on the configured data and writes model.ckpt, training_log.tsv and
/// metrics.txt (depression test split) into `out_dir`.
inline int cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out) {
  auto prepared = prepare_experiment(cfg);
  detail::ensure_dir(out_dir);
  auto run = train_and_evaluate(cfg.resolved_model(), cfg.train, prepared.data);
  save_checkpoint((out_dir / "model.ckpt").string(), run.model, prepared.meta);
  std::ostringstream log;
  write_training_log(log, run.training);
  detail::write_text_file(out_dir / "training_log.tsv", log.str());
  const std::string record = render_record(run.test);
  detail::write_text_file(out_dir / "metrics.txt", record);
  out << "epochs=" << run.training.epochs.size() << " best_epoch=" << run.training.best_epoch
      << " stop=" << to_string(run.training.stop_reason) << '\n'
      << record << "wrote " << (out_dir / "model.ckpt").string() << ", training_log.tsv, metrics.txt\n";
  return 0;
}

/// Scores a checkpoint on a labeled CSV file and prints a key=value record.
inline int cmd_eval(const std::string& checkpoint, const std::string& data_path, Task task, std::ostream& out) {
  const auto ckpt = load_checkpoint<float>(checkpoint);
  const auto& labels = ckpt.meta.labels[static_cast<std::size_t>(task)];
  if (labels.empty()) throw ConfigError("checkpoint '" + checkpoint + "' has no labels for task " + std::string(to_string(task)));
  const auto data = load_csv_dataset(data_path, task, ckpt.meta.schema, labels,
                                     ckpt.meta.markers_enabled ? ckpt.meta.lexicon : DepressionLexicon{},
                                     ckpt.meta.vocab, ckpt.meta.language, ckpt.meta.max_seq_len);
  out << render_record(evaluate(ckpt.model, data, task));
  return 0;
}

/// One `label<TAB>probability` line per input line.
inline int cmd_predict(const std::string& checkpoint, Task task, std::istream& in, std::ostream& out) {
  const auto ckpt = load_checkpoint<float>(checkpoint);
  std::vector<Example> chunk;
  auto flush = [&] {
    if (chunk.empty()) return;
    std::vector<const Example*> ptrs;
    for (const auto& e : chunk) ptrs.push_back(&e);
    const auto proba = predict_proba(ckpt.model, make_batch(ptrs), task);
    const auto best = argmax_rows(proba);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      out << ckpt.meta.label_name(task, best[r]) << '\t' << format_fixed(proba.at(r, best[r]), 6) << '\n';
    }
    chunk.clear();
  };
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!utf8::valid(line)) throw EncodingError("standard input: invalid UTF-8");
    chunk.push_back(ckpt.meta.encode(line));
    if (chunk.size() == kPredictChunk) flush();
  }
  flush();
  return 0;
}

/// FULL, -gate, -s and -ss over each seed; prints median scores.
inline int cmd_ablate(RunConfig cfg, const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                      std::ostream& out, std::ostream& progress) {
  detail::ensure_dir(out_dir);
  std::vector<detail::SeedScores> scores(std::size(kAllVariants));
  for (auto seed : seeds) {
    cfg.train.seed = seed;
    const auto prepared = prepare_experiment(cfg);
    for (std::size_t v = 0; v < std::size(kAllVariants); ++v) {
      const auto run = run_ablation(kAllVariants[v], prepared.data, cfg.resolved_model(), cfg.train);
      const std::string name(to_string(kAllVariants[v]));
      detail::add_score(scores[v], name, seed, run.test);
      progress << "seed " << seed << ' ' << name << ": accuracy " << format_fixed(run.test.accuracy, 4) << ", macro F1 "
               << format_fixed(run.test.macro_f1, 4) << '\n';
    }
  }
  std::vector<ScoreRow> rows;
  std::string record;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const std::string name(to_string(kAllVariants[v]));
    rows.push_back(detail::median_row(name, scores[v]));
    record += detail::median_record(name, scores[v]);
  }
  const auto table = render_table("variant", rows);
  detail::write_text_file(out_dir / "ablation.txt", table);
  detail::write_text_file(out_dir / "ablation_metrics.txt", record);
  out << table;
  return 0;
}

/// One model per (ratio, seed); prints median scores per ratio and writes a
/// two-column plot file (sentiment/depression ratio, median macro F1).
inline int cmd_ratio_sweep(RunConfig cfg, const std::vector<TaskRatio>& ratios, const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& out_dir, std::ostream& out, std::ostream& progress) {
  detail::ensure_dir(out_dir);
  std::vector<detail::SeedScores> scores(ratios.size());
  for (auto seed : seeds) {
    cfg.train.seed = seed;
    const auto prepared = prepare_experiment(cfg);
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      TrainConfig t = cfg.train;
      t.ratio = ratios[r];
      const auto run = train_and_evaluate(cfg.resolved_model(), t, prepared.data);
      detail::add_score(scores[r], to_string(ratios[r]), seed, run.test);
      progress << "seed " << seed << " ratio " << to_string(ratios[r]) << ": accuracy "
               << format_fixed(run.test.accuracy, 4) << ", macro F1 " << format_fixed(run.test.macro_f1, 4) << '\n';
    }
  }
  std::vector<ScoreRow> rows;
  std::string record;
  std::string plot = "# sentiment/depression\tmedian_macro_f1\n";
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    const std::string name = to_string(ratios[r]);
    rows.push_back(detail::median_row(name, scores[r]));
    record += detail::median_record(name, scores[r]);
    plot += format_exact(ratios[r].sentiment / ratios[r].depression) + '\t' + format_exact(rows.back().macro_f1) + '\n';
  }
  const auto table = render_table("ratio", rows);
  detail::write_text_file(out_dir / "ratio_sweep.txt", table);
  detail::write_text_file(out_dir / "ratio_sweep.dat", plot);
  detail::write_text_file(out_dir / "ratio_sweep_metrics.txt", record);
  out << table;
  return 0;
}

/// Writes a config file holding every key at its default value.
inline int cmd_init(const std::string& path, bool force, std::ostream& out) {
  if (!force && std::filesystem::exists(path)) throw ConfigError("'" + path + "' already exists (use --force to overwrite)");
  detail::write_text_file(path, "# desk run configuration\n" + render_run_config(RunConfig{}));
  out << "wrote " << path << '\n';
  return 0;
}

/// Parses arguments (without the program name) and runs one subcommand.
/// Input errors (config, parse, schema, data, encoding) exit with 2, any
/// other failure with 1.
inline int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depression detection with shared sentiment knowledge", "desk"};
  app.require_subcommand(1);
  std::string config_path, output_dir, checkpoint, data_path, task_name = "depression", seeds_text,
      ratios_text = "1:3,1:1,3:1,5:1", init_path;
  std::vector<std::string> overrides;
  bool force = false;

  auto run_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration file")->required();
    sub->add_option("--set", overrides, "override a config value, e.g. --set train.max_epochs=5");
    sub->add_option("-o,--output-dir", output_dir, std::string("output directory (default: $") + kOutputDirEnv +
                                                       " or " + kDefaultOutputDir + ")");
  };
  auto* train = app.add_subcommand("train", "train a model and score it on the depression test split");
  run_options(train);
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a labeled CSV file");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_path, "CSV file with text and label columns")->required();
  eval->add_option("--task", task_name, "sentiment or depression");
  auto* predict_cmd = app.add_subcommand("predict", "label text lines read from standard input");
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--task", task_name, "sentiment or depression");
  auto* ablate = app.add_subcommand("ablate", "compare FULL, -gate, -s and -ss");
  run_options(ablate);
  ablate->add_option("--seeds", seeds_text, "comma-separated seeds (default: train.seed)");
  auto* sweep = app.add_subcommand("ratio-sweep", "train one model per sentiment:depression batch ratio");
  run_options(sweep);
  sweep->add_option("--ratios", ratios_text, "comma-separated ratios")->capture_default_str();
  sweep->add_option("--seeds", seeds_text, "comma-separated seeds (default: train.seed)");
  auto* init = app.add_subcommand("init", "write a default configuration file");
  init->add_option("path", init_path, "file to create")->required();
  init->add_flag("--force", force, "overwrite an existing file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    auto load = [&] {
      RunConfig cfg = load_run_config(config_path);
      for (const auto& o : overrides) apply_override(cfg, o);
      return cfg;
    };
    auto seeds_for = [&](const RunConfig& cfg) {
      return seeds_text.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : parse_seeds(seeds_text);
    };
    if (train->parsed()) return cmd_train(load(), output_dir_from(output_dir), out);
    if (eval->parsed()) return cmd_eval(checkpoint, data_path, parse_task(task_name), out);
    if (predict_cmd->parsed()) return cmd_predict(checkpoint, parse_task(task_name), in, out);
    if (ablate->parsed()) {
      const auto cfg = load();
      return cmd_ablate(cfg, seeds_for(cfg), output_dir_from(output_dir), out, err);
    }
    if (sweep->parsed()) {
      const auto cfg = load();
      const auto ratios = parse_ratios(ratios_text);
      return cmd_ratio_sweep(cfg, ratios, seeds_for(cfg), output_dir_from(output_dir), out, err);
    }
    if (init->parsed()) return cmd_init(init_path, force, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const EncodingError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace desk
