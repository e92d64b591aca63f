#include "kiresh/harness.hpp"

#include <algorithm>
#include <cctype>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "kiresh/calibration.hpp"
#include "kiresh/error.hpp"
#include "kiresh/metrics.hpp"

namespace kiresh {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kManifestFormat = 1;

std::vector<Mode> parse_modes(const std::vector<std::string>& names) {
  std::vector<Mode> out;
  for (const auto& n : names) {
    const auto m = parse_mode(n);
    if (!m) throw ConfigError("unknown mode '" + n + "'");
    if (std::find(out.begin(), out.end(), *m) != out.end())
      throw ConfigError("mode '" + n + "' listed twice");
    out.push_back(*m);
  }
  return out;
}

Mode parse_one_mode(const std::string& name) {
  const auto m = parse_mode(name);
  if (!m) throw ConfigError("unknown mode '" + name + "'");
  return *m;
}

KeyValue sub_config(const KeyValue& kv, const std::string& prefix) {
  KeyValue sub;
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind(prefix, 0) != 0) continue;
    kv.mark_used(k);
    sub.set(k.substr(prefix.size()), v);
  }
  return sub;
}

void reject_unused(const KeyValue& kv, const std::string& prefix) {
  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw ConfigError("unknown config key '" + prefix + unused.front() + "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_keyvalue(const KeyValue& kv) {
  ExperimentConfig c;
  c.snapshot = kv.entries();

  if (kv.has("dataset")) c.dataset = kv.get_string("dataset", "");
  KeyValue corpus = sub_config(kv, "corpus.");
  c.generator = GeneratorConfig::from_keyvalue(corpus);
  reject_unused(corpus, "corpus.");

  const auto fr = kv.get_double_list("split", {0.6, 0.2, 0.2});
  if (fr.size() != 3) throw ConfigError("split needs three fractions");
  c.split_fractions = {fr[0], fr[1], fr[2]};
  c.split_seed = kv.get_uint("split_seed", c.generator.seed);

  c.backend = backend_from_keyvalue(kv);
  c.train = train_config_from_keyvalue(kv);
  c.provider = provider_from_keyvalue(kv);

  c.modes = parse_modes(kv.get_list("modes", {"plain", "kiresh", "prompt", "kiresh_prompt"}));
  c.seeds.clear();
  for (const auto& s : kv.get_list("seeds", {"0", "1", "2", "3", "4"})) {
    try {
      std::size_t pos = 0;
      if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) throw std::invalid_argument(s);
      c.seeds.push_back(std::stoull(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("seeds: '" + s + "' is not an unsigned integer");
    }
  }
  c.fractions = kv.get_double_list("fractions", c.fractions);
  c.bins = static_cast<std::size_t>(kv.get_uint("bins", c.bins));

  const std::string dir = kv.get_string("ablation.direction", "both");
  if (dir == "add_one") c.direction = AblationDirection::add_one;
  else if (dir == "remove_one") c.direction = AblationDirection::remove_one;
  else if (dir == "both") c.direction = AblationDirection::both;
  else throw ConfigError("ablation.direction must be add_one, remove_one or both");
  for (const auto& name : kv.get_list("ablation.categories", {})) {
    const auto s = parse_sbdh(name);
    if (!s) throw ConfigError("unknown SBDH category '" + name + "'");
    c.categories.push_back(*s);
  }

  c.condition_mode = parse_one_mode(kv.get_string("condition.mode", "kiresh_prompt"));
  c.pipeline_mode = parse_one_mode(kv.get_string("pipeline.mode", "kiresh_prompt"));
  if (kv.has("checkpoint_dir")) c.checkpoint_dir = kv.get_string("checkpoint_dir", "");
  c.save_checkpoints = kv.get_bool("save_checkpoints", true);

  reject_unused(kv, "");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_keyvalue(KeyValue::load(path));
}

void ExperimentConfig::validate() const {
  if (modes.empty()) throw ConfigError("at least one mode is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (fractions.empty()) throw ConfigError("at least one fraction is required");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
  if (bins == 0) throw ConfigError("bins must be positive");
  std::vector<std::uint64_t> s = seeds;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ConfigError("duplicate seed");
  train.validate();
  if (!dataset) generator.validate();
}

Dataset experiment_dataset(const ExperimentConfig& config) {
  Dataset ds = config.dataset ? ingest(*config.dataset) : synthesize(config.generator);
  const auto sizes = ds.split_sizes();
  if (sizes.train == 0 && sizes.eval == 0 && sizes.test == 0)
    ds = split(ds, config.split_fractions, config.split_seed);
  return ds;
}

std::string_view command_name(Command c) {
  switch (c) {
    case Command::compare: return "compare";
    case Command::sweep: return "sweep";
    case Command::ablate: return "ablate";
    case Command::condition: return "condition";
    case Command::pipeline: return "pipeline";
  }
  return "?";
}

namespace {

json task_scores(const ConfusionMatrix& c) {
  const TaskMetrics m = task_metrics(c);
  return {{"mcc", m.mcc},
          {"macro_f1", m.macro.f1},
          {"paper_micro_f1", m.paper_micro.f1},
          {"micro_f1", m.standard_micro_f1},
          {"accuracy", m.accuracy}};
}

template <class Pred>
ConfusionMatrix task_confusion(std::size_t n, std::size_t k, Pred&& pred_gold) {
  ConfusionMatrix c(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [p, g] = pred_gold(i);
    c.add(g, p);
  }
  return c;
}

}  // namespace

json score_records(const std::vector<ProbRecord>& records) {
  json out;
  for (auto t : kTasks) {
    auto c = task_confusion(records.size(), num_classes(t), [&](std::size_t i) {
      return std::pair{argmax(records[i].logits(t)), records[i].gold.code(t)};
    });
    out[std::string(task_name(t))] = task_scores(c);
  }
  return out;
}

namespace {

json score_probabilities(const std::vector<ProbabilityRecord>& records) {
  json out;
  for (auto t : kTasks) {
    auto c = task_confusion(records.size(), num_classes(t), [&](std::size_t i) {
      const auto& p = t == Task::presence ? records[i].presence_probs : records[i].period_probs;
      return std::pair{argmax(p), records[i].gold.code(t)};
    });
    out[std::string(task_name(t))] = task_scores(c);
  }
  return out;
}

struct CellSpec {
  std::string key;
  json labels;
  std::function<json()> run;
};

// Cells in manifest order plus the reporting that turns them into tables.
struct Plan {
  Command command;
  std::vector<CellSpec> cells;
  bool halt_on_failure = false;
};

json manifest_header(Command command, const ExperimentConfig& config) {
  json cfg = json::object();
  for (const auto& [k, v] : config.snapshot) cfg[k] = v;
  return {{"type", "header"},
          {"format", kManifestFormat},
          {"command", std::string(command_name(command))},
          {"config", cfg},
          {"environment",
           {{"compiler", __VERSION__},
            {"cplusplus", static_cast<long>(__cplusplus)},
            {"checkpoint_version", kCheckpointVersion}}}};
}

json cell_json(const Cell& c) {
  json j = {{"type", "cell"}, {"key", c.key}, {"labels", c.labels},
            {"status", c.ok ? "ok" : "failed"}};
  if (c.ok) j["metrics"] = c.metrics;
  else j["error"] = c.error;
  return j;
}

std::map<std::string, Cell> read_previous(const fs::path& manifest, const json& header) {
  std::map<std::string, Cell> done;
  std::ifstream in(manifest);
  if (!in) return done;
  std::string line;
  if (!std::getline(in, line)) return done;
  json first = json::parse(line, nullptr, false);
  if (first.is_discarded() || first != header) return done;
  while (std::getline(in, line)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || j.value("type", "") != "cell") continue;  // torn trailing line
    Cell c;
    c.key = j.value("key", "");
    c.labels = j.value("labels", json::object());
    c.ok = j.value("status", "") == "ok";
    if (c.ok) c.metrics = j.value("metrics", json::object());
    else c.error = j.value("error", "");
    done[c.key] = c;
  }
  return done;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<Cell> execute(const Plan& plan, const ExperimentConfig& config,
                          const RunOptions& options) {
  fs::create_directories(options.out);
  const fs::path manifest = options.out / "manifest.jsonl";
  const json header = manifest_header(plan.command, config);
  auto previous = read_previous(manifest, header);

  std::vector<Cell> cells(plan.cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    auto it = previous.find(plan.cells[i].key);
    if (it != previous.end() && it->second.ok) {
      cells[i] = it->second;
      cells[i].labels = plan.cells[i].labels;
    } else {
      todo.push_back(i);
    }
  }

  // Append-only while running so an interrupted run can resume.
  {
    std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].ok) out << cell_json(cells[i]).dump() << '\n';
  }
  std::ofstream log(manifest, std::ios::binary | std::ios::app);
  std::ofstream timing(options.out / "timing.jsonl", std::ios::binary | std::ios::app);
  std::mutex io;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> halted{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t n = next.fetch_add(1);
      if (n >= todo.size()) return;
      const std::size_t i = todo[n];
      const auto& spec = plan.cells[i];
      Cell c;
      c.key = spec.key;
      c.labels = spec.labels;
      const auto t0 = std::chrono::steady_clock::now();
      if (halted) {
        c.error = "not run: an earlier stage failed";
      } else {
        try {
          c.metrics = spec.run();
          c.ok = true;
        } catch (const std::exception& e) {
          c.error = e.what();
          if (plan.halt_on_failure) halted = true;
        }
      }
      c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(io);
      log << cell_json(c).dump() << '\n';
      log.flush();
      timing << json{{"key", c.key}, {"seconds", c.seconds}}.dump() << '\n';
      timing.flush();
      cells[i] = std::move(c);
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, todo.size()));
  if (jobs == 1 || plan.halt_on_failure) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  log.close();

  // Canonical order for byte-identical reruns.
  std::string text = header.dump() + '\n';
  for (const auto& c : cells) text += cell_json(c).dump() + '\n';
  write_file(manifest, text);
  return cells;
}

// ---- aggregation ----

struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double min = mean, max = mean;
  std::vector<double> values;
  bool complete = false;
};

json stat_json(const Stat& s) {
  json j = {{"values", s.values}, {"complete", s.complete}};
  if (s.complete) {
    j["mean"] = s.mean;
    j["min"] = s.min;
    j["max"] = s.max;
  } else {
    j["mean"] = nullptr;
  }
  return j;
}

// Seed average of `path` over the cells selected by `match`, in seed order.
Stat seed_stat(const std::vector<Cell>& cells, const std::function<bool(const Cell&)>& match,
               const json::json_pointer& path) {
  Stat s;
  bool all = true;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (!match(c)) continue;
    ++n;
    if (!c.ok || !c.metrics.contains(path) || !c.metrics.at(path).is_number()) {
      all = false;
      continue;
    }
    s.values.push_back(c.metrics.at(path).get<double>());
  }
  s.complete = all && n > 0;
  if (s.complete) {
    double sum = 0;
    for (double v : s.values) sum += v;
    s.mean = sum / static_cast<double>(s.values.size());
    s.min = *std::min_element(s.values.begin(), s.values.end());
    s.max = *std::max_element(s.values.begin(), s.values.end());
  }
  return s;
}

const std::vector<std::pair<std::string, std::string>>& metric_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"mcc", "MCC"}, {"macro_f1", "Macro-F1"}, {"paper_micro_f1", "wMicro-F1"},
      {"micro_f1", "Micro-F1"}};
  return cols;
}

std::vector<std::string> metric_header(const std::string& first) {
  std::vector<std::string> h = {first};
  for (auto t : kTasks)
    for (const auto& [key, name] : metric_columns())
      h.push_back(std::string(task_name(t)) + " " + name);
  return h;
}

// Marks the largest value of each numeric column with '*'.
std::vector<std::vector<std::string>> highlight_best(std::vector<std::vector<std::string>> rows,
                                                     std::size_t first_numeric) {
  if (rows.size() < 3) return rows;
  for (std::size_t col = first_numeric; col < rows[0].size(); ++col) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const double v = std::strtod(rows[r][col].c_str(), nullptr);
      if (rows[r][col] != "nan" && rows[r][col] != "-") best = std::max(best, v);
    }
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r][col] != "nan" && rows[r][col] != "-" &&
          std::strtod(rows[r][col].c_str(), nullptr) == best)
        rows[r][col] += "*";
  }
  return rows;
}

void write_table(const RunOptions& options, const std::string& name,
                 const std::vector<std::vector<std::string>>& rows, std::size_t highlight_from = 0) {
  fs::create_directories(options.out / "tables");
  write_file(options.out / "tables" / (name + ".csv"), render_csv(rows));
  write_file(options.out / "tables" / (name + ".txt"),
             render_text_table(highlight_from ? highlight_best(rows, highlight_from) : rows));
}

void write_report(const RunOptions& options, const RunResult& r) {
  json j = r.report;
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = checks;
  json failed = json::array();
  for (const auto& c : r.cells)
    if (!c.ok) failed.push_back({{"key", c.key}, {"error", c.error}});
  j["failed_cells"] = failed;
  write_file(options.out / "report.json", j.dump(2) + '\n');
}

json::json_pointer ptr(const std::string& s) { return json::json_pointer(s); }

std::string metric_path(const std::string& split, Task t, const std::string& metric) {
  return "/" + split + "/" + std::string(task_name(t)) + "/" + metric;
}

auto label_is(const std::string& key, const json& value) {
  return [key, value](const Cell& c) { return c.labels.contains(key) && c.labels[key] == value; };
}

auto labels_are(json want) {
  return [want](const Cell& c) {
    for (const auto& [k, v] : want.items())
      if (!c.labels.contains(k) || c.labels[k] != v) return false;
    return true;
  };
}

CheckResult ge_check(const std::string& name, const Stat& a, const Stat& b, bool strict = false) {
  CheckResult r{name, false, ""};
  if (!a.complete || !b.complete) {
    r.detail = "incomplete cells";
    return r;
  }
  r.passed = strict ? a.mean > b.mean : a.mean >= b.mean;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f %s %.6f", a.mean, strict ? ">" : ">=", b.mean);
  r.detail = buf;
  return r;
}

// ---- shared cell work ----

TrainedModel train_cell(const Dataset& ds, const ExperimentConfig& config, Mode mode,
                        std::uint64_t seed, const SbdhProvider& provider) {
  BackendSpec b = config.backend;
  b.seed = seed;
  TrainConfig t = config.train;
  t.seed = seed;
  return train(ds, b, t, mode, provider);
}

json split_scores(const TrainedModel& model, const Dataset& ds, const SbdhProvider& provider) {
  return {{"eval", score_records(predict_all(model, ds.in_split(Split::eval), provider))},
          {"test", score_records(predict_all(model, ds.in_split(Split::test), provider))}};
}

std::string checkpoint_name(Mode mode, std::uint64_t seed) {
  return std::string(mode_name(mode)) + "-seed" + std::to_string(seed) + ".ckpt";
}

json metrics_rows_for(const std::vector<Cell>& cells,
                      const std::function<bool(const Cell&)>& match, const std::string& split) {
  json out;
  for (auto t : kTasks)
    for (const auto& [key, name] : metric_columns())
      out[std::string(task_name(t))][key] = stat_json(seed_stat(cells, match, ptr(metric_path(split, t, key))));
  return out;
}

std::vector<std::string> table_row(const std::string& first, const json& agg) {
  std::vector<std::string> row = {first};
  for (auto t : kTasks)
    for (const auto& [key, name] : metric_columns()) {
      const auto& m = agg[std::string(task_name(t))][key]["mean"];
      row.push_back(m.is_number() ? format_number(m.template get<double>()) : "nan");
    }
  return row;
}

json seeds_json(const ExperimentConfig& c) { return c.seeds; }

}  // namespace

bool RunResult::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return !c.ok; });
}

int RunResult::exit_code(bool check) const {
  if (any_failed()) return 3;
  if (check && std::any_of(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; }))
    return 4;
  return 0;
}

// ---- compare ----

RunResult compare_methods(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset ds = experiment_dataset(config);
  const fs::path ckpt_dir = options.out / "checkpoints";
  Plan plan{Command::compare, {}, false};
  for (auto mode : config.modes)
    for (auto seed : config.seeds) {
      CellSpec s;
      s.key = "mode=" + std::string(mode_name(mode)) + "/seed=" + std::to_string(seed);
      s.labels = {{"mode", mode_name(mode)}, {"seed", seed}};
      s.run = [&, mode, seed] {
        auto model = train_cell(ds, config, mode, seed, config.provider);
        if (config.save_checkpoints) {
          fs::create_directories(ckpt_dir);
          save_checkpoint(model, ckpt_dir / checkpoint_name(mode, seed));
        }
        json m = split_scores(model, ds, config.provider);
        m["best_epoch"] = model.best_epoch;
        return m;
      };
      plan.cells.push_back(std::move(s));
    }

  RunResult r;
  r.cells = execute(plan, config, options);
  json agg;
  for (const std::string split : {"eval", "test"}) {
    std::vector<std::vector<std::string>> rows = {metric_header("Mode")};
    for (auto mode : config.modes) {
      const auto a = metrics_rows_for(r.cells, label_is("mode", mode_name(mode)), split);
      agg[split][std::string(mode_name(mode))] = a;
      rows.push_back(table_row(std::string(mode_name(mode)), a));
    }
    write_table(options, "compare_" + split, rows, 1);
  }
  r.report = {{"command", "compare"}, {"seeds", seeds_json(config)}, {"aggregates", agg}};

  auto mcc = [&](Mode m, Task t) {
    return seed_stat(r.cells, label_is("mode", mode_name(m)), ptr(metric_path("test", t, "mcc")));
  };
  auto has = [&](Mode m) {
    return std::find(config.modes.begin(), config.modes.end(), m) != config.modes.end();
  };
  if (has(Mode::kiresh_prompt) && has(Mode::plain))
    for (auto t : kTasks)
      r.checks.push_back(ge_check("kiresh_prompt >= plain test MCC (" + std::string(task_name(t)) + ")",
                                  mcc(Mode::kiresh_prompt, t), mcc(Mode::plain, t)));
  for (auto single : {Mode::kiresh, Mode::prompt}) {
    if (!has(Mode::kiresh_prompt) || !has(single)) continue;
    CheckResult c{"kiresh_prompt >= " + std::string(mode_name(single)) + " test MCC on some task",
                  false, ""};
    for (auto t : kTasks) {
      auto g = ge_check("", mcc(Mode::kiresh_prompt, t), mcc(single, t));
      c.passed = c.passed || g.passed;
      c.detail += std::string(c.detail.empty() ? "" : "; ") + std::string(task_name(t)) + " " + g.detail;
    }
    r.checks.push_back(c);
  }
  write_report(options, r);
  return r;
}

// ---- sweep ----

RunResult size_sweep(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset ds = experiment_dataset(config);
  Plan plan{Command::sweep, {}, false};
  for (auto mode : config.modes)
    for (double f : config.fractions)
      for (auto seed : config.seeds) {
        CellSpec s;
        s.key = "mode=" + std::string(mode_name(mode)) + "/fraction=" + fraction_label(f) +
                "/seed=" + std::to_string(seed);
        s.labels = {{"mode", mode_name(mode)}, {"fraction", f}, {"seed", seed}};
        s.run = [&, mode, f, seed] {
          const Dataset sub = subsample_train(ds, f, derive_seed(seed, fnv1a("subsample")));
          auto model = train_cell(sub, config, mode, seed, config.provider);
          json m = split_scores(model, sub, config.provider);
          m["train_size"] = sub.split_sizes().train;
          m["best_epoch"] = model.best_epoch;
          return m;
        };
        plan.cells.push_back(std::move(s));
      }

  RunResult r;
  r.cells = execute(plan, config, options);
  json agg;
  for (const std::string split : {"eval", "test"}) {
    auto header = metric_header("Mode");
    header.insert(header.begin() + 1, "Fraction");
    std::vector<std::vector<std::string>> rows = {header};
    for (auto mode : config.modes)
      for (double f : config.fractions) {
        const auto a = metrics_rows_for(
            r.cells, labels_are({{"mode", mode_name(mode)}, {"fraction", f}}), split);
        agg[split][std::string(mode_name(mode))][fraction_label(f)] = a;
        auto row = table_row(std::string(mode_name(mode)), a);
        row.insert(row.begin() + 1, fraction_label(f));
        rows.push_back(row);
      }
    write_table(options, "sweep_" + split, rows);
  }
  r.report = {{"command", "sweep"}, {"seeds", seeds_json(config)}, {"aggregates", agg}};

  const double lo = *std::min_element(config.fractions.begin(), config.fractions.end());
  const double hi = *std::max_element(config.fractions.begin(), config.fractions.end());
  if (lo < hi && std::find(config.modes.begin(), config.modes.end(), Mode::plain) != config.modes.end())
    for (auto t : kTasks) {
      auto at = [&](double f) {
        return seed_stat(r.cells, labels_are({{"mode", "plain"}, {"fraction", f}}),
                         ptr(metric_path("eval", t, "mcc")));
      };
      r.checks.push_back(ge_check("plain eval MCC at fraction " + fraction_label(hi) + " >= at " +
                                      fraction_label(lo) + " (" + std::string(task_name(t)) + ")",
                                  at(hi), at(lo)));
    }
  write_report(options, r);
  return r;
}

// ---- ablation ----

RunResult sbdh_ablation(const ExperimentConfig& config, const RunOptions& options) {
  const Dataset ds = experiment_dataset(config);
  std::vector<Sbdh> cats = config.categories;
  if (cats.empty()) cats.assign(all_sbdh().begin(), all_sbdh().end());
  const bool add = config.direction != AblationDirection::remove_one;
  const bool remove = config.direction != AblationDirection::add_one;

  Plan plan{Command::ablate, {}, false};
  auto push = [&](const std::string& variant, Mode mode, std::bitset<kNumSbdh> allowed) {
    for (auto seed : config.seeds) {
      CellSpec s;
      s.key = "variant=" + variant + "/seed=" + std::to_string(seed);
      s.labels = {{"variant", variant}, {"seed", seed}};
      s.run = [&, mode, allowed, seed] {
        SbdhProvider p = config.provider;
        p.allowed = allowed;
        auto model = train_cell(ds, config, mode, seed, p);
        json m = split_scores(model, ds, p);
        m["best_epoch"] = model.best_epoch;
        return m;
      };
      plan.cells.push_back(std::move(s));
    }
  };
  const auto all = std::bitset<kNumSbdh>().set();
  if (add) {
    push("baseline_plain", Mode::plain, all);
    for (auto c : cats) {
      std::bitset<kNumSbdh> only;
      only.set(static_cast<std::size_t>(c));
      push("add_one:" + std::string(sbdh_name(c)), Mode::kiresh, only);
    }
  }
  if (remove) {
    push("baseline_kiresh", Mode::kiresh, all);
    for (auto c : cats) {
      auto minus = all;
      minus.reset(static_cast<std::size_t>(c));
      push("remove_one:" + std::string(sbdh_name(c)), Mode::kiresh, minus);
    }
  }

  RunResult r;
  r.cells = execute(plan, config, options);

  // Delta per seed, then the seed mean.
  auto delta = [&](const std::string& variant, const std::string& baseline, Task t) {
    const auto path = ptr(metric_path("test", t, "mcc"));
    const Stat a = seed_stat(r.cells, label_is("variant", variant), path);
    const Stat b = seed_stat(r.cells, label_is("variant", baseline), path);
    Stat d;
    d.complete = a.complete && b.complete;
    if (d.complete) {
      for (std::size_t i = 0; i < a.values.size(); ++i) d.values.push_back(a.values[i] - b.values[i]);
      double sum = 0;
      for (double v : d.values) sum += v;
      d.mean = sum / static_cast<double>(d.values.size());
      d.min = *std::min_element(d.values.begin(), d.values.end());
      d.max = *std::max_element(d.values.begin(), d.values.end());
    }
    return d;
  };

  json agg;
  std::map<std::string, std::map<Sbdh, std::array<Stat, 2>>> deltas;
  for (const std::string dir : {"add_one", "remove_one"}) {
    if ((dir == "add_one" && !add) || (dir == "remove_one" && !remove)) continue;
    const std::string baseline = dir == "add_one" ? "baseline_plain" : "baseline_kiresh";
    std::vector<std::vector<std::string>> rows = {
        {"Category", "presence dMCC", "period dMCC", "presence min", "presence max", "period min",
         "period max"}};
    for (auto c : cats) {
      const std::string variant = dir + ":" + std::string(sbdh_name(c));
      auto& d = deltas[dir][c];
      std::vector<std::string> row = {std::string(sbdh_name(c))};
      for (auto t : kTasks) {
        d[static_cast<std::size_t>(t)] = delta(variant, baseline, t);
        agg[dir][std::string(sbdh_name(c))][std::string(task_name(t))] = stat_json(d[static_cast<std::size_t>(t)]);
      }
      for (auto t : kTasks) row.push_back(format_number(d[static_cast<std::size_t>(t)].mean));
      for (auto t : kTasks) {
        row.push_back(format_number(d[static_cast<std::size_t>(t)].min));
        row.push_back(format_number(d[static_cast<std::size_t>(t)].max));
      }
      rows.push_back(row);
    }
    write_table(options, "ablate_" + dir, rows);
  }
  r.report = {{"command", "ablate"}, {"seeds", seeds_json(config)}, {"aggregates", agg}};

  // Planted-signal oracle: only meaningful for generated corpora.
  if (!config.dataset && add) {
    std::array<double, kNumSbdh> top{};
    for (const auto& [k, lift] : config.generator.lift)
      top[static_cast<std::size_t>(k.first)] = std::max(top[static_cast<std::size_t>(k.first)], lift);
    std::optional<Sbdh> high;
    std::vector<Sbdh> flat;
    for (auto c : cats) {
      const double l = top[static_cast<std::size_t>(c)];
      if (l == 0.0) flat.push_back(c);
      else if (!high || l > top[static_cast<std::size_t>(*high)]) high = c;
    }
    if (high && !flat.empty()) {
      // The planted lifts tie tags to presence classes.
      const auto& hd = deltas["add_one"][*high][0];
      for (auto z : flat) {
        r.checks.push_back(ge_check("add_one presence dMCC " + std::string(sbdh_name(*high)) + " > " +
                                        std::string(sbdh_name(z)),
                                    hd, deltas["add_one"][z][0], true));
        if (remove) {
          const auto& rd = deltas["remove_one"][z][0];
          CheckResult c{"|remove_one presence dMCC " + std::string(sbdh_name(z)) +
                            "| < add_one dMCC " + std::string(sbdh_name(*high)),
                        false, "incomplete cells"};
          if (rd.complete && hd.complete) {
            c.passed = std::abs(rd.mean) < hd.mean;
            char buf[96];
            std::snprintf(buf, sizeof buf, "%.6f < %.6f", std::abs(rd.mean), hd.mean);
            c.detail = buf;
          }
          r.checks.push_back(c);
        }
      }
    }
  }
  write_report(options, r);
  return r;
}

// ---- known-label conditioning ----

RunResult known_label_eval(const ExperimentConfig& config, const RunOptions& options) {
  if (!mode_has_prompt(config.condition_mode))
    throw ContractError("condition needs a prompt-mode checkpoint; got mode " +
                        std::string(mode_name(config.condition_mode)));
  const Dataset ds = experiment_dataset(config);
  const Mode mode = config.condition_mode;

  Plan plan{Command::condition, {}, false};
  for (auto seed : config.seeds) {
    CellSpec s;
    s.key = "mode=" + std::string(mode_name(mode)) + "/seed=" + std::to_string(seed);
    s.labels = {{"mode", mode_name(mode)}, {"seed", seed}};
    s.run = [&, seed] {
      std::optional<TrainedModel> model;
      json source = "trained";
      if (config.checkpoint_dir) {
        const fs::path p = *config.checkpoint_dir / checkpoint_name(mode, seed);
        if (fs::exists(p)) {
          model = load_checkpoint(p);
          source = "checkpoint";
        }
      }
      if (!model) model = train_cell(ds, config, mode, seed, config.provider);
      if (!mode_has_prompt(model->mode))
        throw ContractError("checkpoint mode " + std::string(mode_name(model->mode)) +
                            " has no prompt");
      json m;
      m["source"] = source;
      for (auto split : {Split::eval, Split::test}) {
        const auto examples = ds.in_split(split);
        json& at = m[std::string(split_name(split))];
        at["none"] = score_records(predict_all(*model, examples, config.provider));
        // One reveal per example: the gold label of the other task.
        for (auto revealed : kTasks) {
          std::vector<ProbRecord> recs;
          recs.reserve(examples.size());
          for (const auto* ex : examples)
            recs.push_back(predict(*model, *ex, config.provider,
                                   Reveal{revealed, ex->gold.code(revealed)}));
          at[std::string(task_name(revealed)) + "_revealed"] = score_records(recs);
        }
      }
      return m;
    };
    plan.cells.push_back(std::move(s));
  }

  RunResult r;
  r.cells = execute(plan, config, options);
  json agg;
  for (const std::string split : {"eval", "test"}) {
    std::vector<std::vector<std::string>> rows = {metric_header("Condition")};
    for (const std::string cond : {"none", "presence_revealed", "period_revealed"}) {
      const auto a = metrics_rows_for(r.cells, [](const Cell&) { return true; }, split + "/" + cond);
      agg[split][cond] = a;
      rows.push_back(table_row(cond, a));
    }
    write_table(options, "condition_" + split, rows);
  }
  r.report = {{"command", "condition"},
              {"mode", mode_name(mode)},
              {"seeds", seeds_json(config)},
              {"aggregates", agg}};

  auto any = [](const Cell&) { return true; };
  for (const std::string split : {"eval", "test"})
    for (auto t : kTasks) {
      const Task other = t == Task::presence ? Task::period : Task::presence;
      const std::string cond = std::string(task_name(other)) + "_revealed";
      r.checks.push_back(ge_check(split + " " + std::string(task_name(t)) + " MCC with " + cond +
                                      " > unconditioned",
                                  seed_stat(r.cells, any, ptr(metric_path(split + "/" + cond, t, "mcc"))),
                                  seed_stat(r.cells, any, ptr(metric_path(split + "/none", t, "mcc"))), true));
    }
  write_report(options, r);
  return r;
}

// ---- full pipeline ----

RunResult full_pipeline(const ExperimentConfig& config, const RunOptions& options) {
  Dataset ds;
  try {
    ds = experiment_dataset(config);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(std::string("stage corpus: ") + e.what());
  }
  const Mode mode = config.pipeline_mode;
  const fs::path art = options.out / "artifacts";

  Plan plan{Command::pipeline, {}, true};
  for (auto seed : config.seeds) {
    CellSpec s;
    s.key = "mode=" + std::string(mode_name(mode)) + "/seed=" + std::to_string(seed);
    s.labels = {{"mode", mode_name(mode)}, {"seed", seed}};
    s.run = [&, seed] {
      std::string stage = "train";
      try {
        auto model = train_cell(ds, config, mode, seed, config.provider);
        stage = "predict";
        const auto eval = predict_all(model, ds.in_split(Split::eval), config.provider);
        const auto test = predict_all(model, ds.in_split(Split::test), config.provider);
        stage = "calibrate";
        const Temperature temp = fit_temperatures(eval);
        const auto calibrated = apply_temperature(test, temp);
        const auto report = calibration_report(test, temp, config.bins);
        stage = "metrics";
        json m;
        m["temperature"] = kiresh::to_json(temp);
        m["no_ts"] = score_records(test);
        m["ts"] = score_probabilities(calibrated);
        for (auto t : kTasks) {
          const std::string tn(task_name(t));
          m["no_ts"][tn]["ece"] = report.of(t).ece_before;
          m["ts"][tn]["ece"] = report.of(t).ece_after;
          m["no_ts"][tn]["nll"] = report.of(t).nll_before;
          m["ts"][tn]["nll"] = report.of(t).nll_after;
        }
        stage = "write";
        const fs::path dir = art / ("seed" + std::to_string(seed));
        fs::create_directories(dir);
        save_checkpoint(model, dir / "model.ckpt");
        write_logits(test, dir / "test_logits.jsonl");
        write_probabilities(calibrated, dir / "test_calibrated.jsonl");
        write_file(dir / "temperature.json", kiresh::to_json(temp).dump(2) + '\n');
        return m;
      } catch (const std::exception& e) {
        throw Error("stage " + stage + ": " + e.what());
      }
    };
    plan.cells.push_back(std::move(s));
  }

  RunResult r;
  r.cells = execute(plan, config, options);
  auto any = [](const Cell&) { return true; };
  json agg;
  std::vector<std::vector<std::string>> rows = {
      {"Task", "Setting", "ECE", "NLL", "MCC", "Macro-F1", "wMicro-F1", "Micro-F1", "T"}};
  for (auto t : kTasks) {
    const std::string tn(task_name(t));
    const Stat temp = seed_stat(r.cells, any, ptr("/temperature/" + tn + "_T"));
    agg[tn]["temperature"] = stat_json(temp);
    for (const std::string setting : {"no_ts", "ts"}) {
      std::vector<std::string> row = {tn, setting == "ts" ? "TS" : "No TS"};
      for (const std::string key : {"ece", "nll", "mcc", "macro_f1", "paper_micro_f1", "micro_f1"}) {
        const Stat st = seed_stat(r.cells, any, ptr(metric_path(setting, t, key)));
        agg[tn][setting][key] = stat_json(st);
        row.push_back(format_number(st.mean));
      }
      row.push_back(setting == "ts" ? format_number(temp.mean) : "1.0000");
      rows.push_back(row);
    }
  }
  write_table(options, "pipeline", rows);
  r.report = {{"command", "pipeline"},
              {"mode", mode_name(mode)},
              {"seeds", seeds_json(config)},
              {"bins", config.bins},
              {"aggregates", agg}};

  for (auto t : kTasks) {
    const std::string tn(task_name(t));
    r.checks.push_back(ge_check("ECE(No TS) >= ECE(TS) (" + tn + ")",
                                seed_stat(r.cells, any, ptr(metric_path("no_ts", t, "ece"))),
                                seed_stat(r.cells, any, ptr(metric_path("ts", t, "ece")))));
    CheckResult same{"classification metrics unchanged by TS (" + tn + ")", true, "identical"};
    for (const auto& c : r.cells) {
      if (!c.ok) {
        same.passed = false;
        same.detail = "incomplete cells";
        break;
      }
      for (const std::string key : {"mcc", "macro_f1", "paper_micro_f1", "micro_f1", "accuracy"})
        if (c.metrics["no_ts"][tn][key] != c.metrics["ts"][tn][key]) {
          same.passed = false;
          same.detail = c.key + " differs in " + key;
        }
    }
    r.checks.push_back(same);
  }
  write_report(options, r);
  return r;
}

RunResult run_command(Command c, const ExperimentConfig& config, const RunOptions& options) {
  switch (c) {
    case Command::compare: return compare_methods(config, options);
    case Command::sweep: return size_sweep(config, options);
    case Command::ablate: return sbdh_ablation(config, options);
    case Command::condition: return known_label_eval(config, options);
    case Command::pipeline: return full_pipeline(config, options);
  }
  throw ContractError("unknown command");
}

std::string render_text_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], row[i].size());
    }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      const auto& cell = rows[r][i];
      const std::string pad(width[i] - cell.size(), ' ');
      if (i) line += "  ";
      line += i == 0 ? cell + pad : pad + cell;  // numbers right-aligned
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

std::string render_csv(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      const auto& cell = row[i];
      if (cell.find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char ch : cell) {
          if (ch == '"') out << '"';
          out << ch;
        }
        out << '"';
      } else {
        out << cell;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace kiresh
