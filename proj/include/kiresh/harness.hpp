#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kiresh/corpus.hpp"
#include "kiresh/encoding.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/model.hpp"
#include "kiresh/synth.hpp"
#include "kiresh/train.hpp"

namespace kiresh {

enum class AblationDirection : std::uint8_t { add_one, remove_one, both };

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset;  // generator used when unset
  GeneratorConfig generator = GeneratorConfig::defaults();
  SplitFractions split_fractions;
  std::uint64_t split_seed = 0;
  BackendSpec backend;
  TrainConfig train;
  SbdhProvider provider;
  std::vector<Mode> modes = {Mode::plain, Mode::kiresh, Mode::prompt, Mode::kiresh_prompt};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 1.0};
  std::size_t bins = 10;
  AblationDirection direction = AblationDirection::both;
  std::vector<Sbdh> categories;  // ablated categories; all when empty
  Mode condition_mode = Mode::kiresh_prompt;
  Mode pipeline_mode = Mode::kiresh_prompt;
  // Directory of `<mode>-seed<N>.ckpt` files; condition reuses them.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool save_checkpoints = true;
  // Flat key/value snapshot written to the manifest header.
  std::map<std::string, std::string> snapshot;

  // Throws ConfigError on unknown keys or invalid values.
  static ExperimentConfig from_keyvalue(const KeyValue& kv);
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
};

// Loads or generates the corpus and splits it when it carries no split.
Dataset experiment_dataset(const ExperimentConfig& config);

// Scores for one (split, task): mcc, macro_f1, paper_micro_f1, micro_f1, accuracy.
nlohmann::json score_records(const std::vector<ProbRecord>& records);

struct Cell {
  std::string key;  // unique, e.g. "mode=plain/fraction=1/seed=0"
  nlohmann::json labels;
  bool ok = false;
  std::string error;
  nlohmann::json metrics;
  double seconds = 0;
};

enum class Command : std::uint8_t { compare, sweep, ablate, condition, pipeline };
std::string_view command_name(Command c);

struct RunOptions {
  std::filesystem::path out;
  std::size_t jobs = 1;
  bool check = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunResult {
  std::vector<Cell> cells;  // deterministic order
  nlohmann::json report;
  std::vector<CheckResult> checks;
  bool any_failed() const;
  int exit_code(bool check) const;  // 0, 3 or 4
};

// Each command writes manifest.jsonl, report.json, timing.jsonl and
// tables/<command>*.{txt,csv} under options.out. Cells already recorded as
// ok in an existing manifest with the same header are not rerun.
RunResult compare_methods(const ExperimentConfig& config, const RunOptions& options);
RunResult size_sweep(const ExperimentConfig& config, const RunOptions& options);
RunResult sbdh_ablation(const ExperimentConfig& config, const RunOptions& options);
RunResult known_label_eval(const ExperimentConfig& config, const RunOptions& options);
RunResult full_pipeline(const ExperimentConfig& config, const RunOptions& options);
RunResult run_command(Command c, const ExperimentConfig& config, const RunOptions& options);

// Aligned text rendering: first row is the header.
std::string render_text_table(const std::vector<std::vector<std::string>>& rows);
std::string render_csv(const std::vector<std::vector<std::string>>& rows);

}  // namespace kiresh
