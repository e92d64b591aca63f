#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kiresh/calibration.hpp"
#include "kiresh/corpus.hpp"
#include "kiresh/encoding.hpp"
#include "kiresh/error.hpp"
#include "kiresh/harness.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/metrics.hpp"
#include "kiresh/records.hpp"
#include "kiresh/synth.hpp"
#include "kiresh/train.hpp"

using namespace kiresh;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kGeneratorKeys = R"(Generator config keys (flat key = value):
  total_count = 5271
  seed = 0
  ambiguity = 0.35            chance the eviction phrase is label-neutral
  mention_rate = 0.3          chance an assigned tag is also mentioned
  keyword_rate = 0.2          chance of an extra filter-keyword sentence
  class.<period>.<presence> = weight     replaces the default joint
  default_lifts = true        false drops the built-in lifts
  lift.<sbdh>.<presence> = factor
  base_rate.<sbdh> = probability
  length.presence.<label> = tokens
  length.period.<label> = tokens)";

// Provider flags shared by several subcommands.
struct ProviderFlags {
  std::string kind = "gold";
  std::string lexicon;
  double flip = 0, drop = 0;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--provider", kind, "SBDH source: gold, lexicon, noisy or none");
    app->add_option("--lexicon", lexicon, "Lexicon file for the lexicon provider");
    app->add_option("--flip", flip, "noisy: chance an absent tag is added");
    app->add_option("--drop", drop, "noisy: chance a gold tag is dropped");
    app->add_option("--noise-seed", seed, "noisy: seed");
  }
  SbdhProvider build() const {
    const auto k = parse_provider(kind);
    if (!k) throw ConfigError("unknown provider '" + kind + "'");
    SbdhProvider p = SbdhProvider::of_kind(*k);
    p.flip_rate = flip;
    p.drop_rate = drop;
    p.seed = seed;
    if (!lexicon.empty()) p.lexicon = std::make_shared<const Lexicon>(Lexicon::load(lexicon));
    return p;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::optional<Reveal> parse_reveal(const std::string& spec, bool& from_gold) {
  from_gold = false;
  if (spec.empty()) return std::nullopt;
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--reveal expects task=label");
  const auto task = parse_task(spec.substr(0, eq));
  if (!task) throw ConfigError("unknown task in --reveal: " + spec.substr(0, eq));
  const std::string label = spec.substr(eq + 1);
  if (label == "gold") {
    from_gold = true;
    return Reveal{*task, 0};
  }
  const auto code = parse_label(*task, label);
  if (!code) throw ConfigError("unknown " + std::string(task_name(*task)) + " label '" + label + "'");
  return Reveal{*task, *code};
}

std::vector<std::vector<std::string>> metrics_rows(const TaskMetrics& p, const TaskMetrics& q,
                                                   const std::string& name) {
  return {{"", "presence MCC", "presence Macro-F1", "presence wMicro-F1", "presence Micro-F1",
           "period MCC", "period Macro-F1", "period wMicro-F1", "period Micro-F1"},
          {name, num(p.mcc), num(p.macro.f1), num(p.paper_micro.f1), num(p.standard_micro_f1),
           num(q.mcc), num(q.macro.f1), num(q.paper_micro.f1), num(q.standard_micro_f1)}};
}

ConfusionMatrix confusion_of(const std::vector<ProbabilityRecord>& recs, Task t) {
  ConfusionMatrix c(num_classes(t));
  for (const auto& r : recs) c.add(r.gold.code(t), argmax(r.probs(t)));
  return c;
}

std::vector<ConfidenceRecord> confidences(const std::vector<ProbabilityRecord>& recs, Task t) {
  std::vector<ConfidenceRecord> out;
  for (const auto& r : recs) out.push_back(confidence_record(r.probs(t), r.gold.code(t)));
  return out;
}

double mean_nll(const std::vector<ProbabilityRecord>& recs, Task t) {
  double s = 0;
  for (const auto& r : recs) s -= std::log(std::max(r.probs(t)[static_cast<std::size_t>(r.gold.code(t))], 1e-300));
  return recs.empty() ? 0.0 : s / static_cast<double>(recs.size());
}

// Ratings CSV: item id, then one category per annotator. A first row whose
// first field is "id", "item" or "item_id" is taken as a header.
std::vector<std::vector<std::string>> read_ratings(const fs::path& path) {
  std::vector<std::vector<std::string>> items;
  bool first = true;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    auto fields = split_list(line, ',');
    if (first) {
      first = false;
      const std::string head = lowercase(fields.empty() ? "" : fields[0]);
      if (head == "id" || head == "item" || head == "item_id") continue;
    }
    if (fields.size() < 2) throw InputError("ratings row needs an id and at least one rating");
    items.emplace_back(fields.begin() + 1, fields.end());
  }
  return items;
}

int run_harness(Command cmd, const std::string& config_path, const std::string& out,
                std::size_t jobs, bool check) {
  ExperimentConfig config = config_path.empty() ? ExperimentConfig::from_keyvalue(KeyValue{})
                                                : ExperimentConfig::load(config_path);
  RunOptions options{out, jobs, check};
  RunResult r = run_command(cmd, config, options);
  std::size_t failed = 0;
  for (const auto& c : r.cells) failed += c.ok ? 0 : 1;
  std::cout << "cells: " << r.cells.size() << ", failed: " << failed << '\n';
  for (const auto& c : r.cells)
    if (!c.ok) std::cerr << "failed cell " << c.key << ": " << c.error << '\n';
  for (const auto& c : r.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " [" << c.detail << "]\n";
  const fs::path tables = fs::path(out) / "tables";
  if (fs::exists(tables)) {
    std::vector<fs::path> txt;
    for (const auto& e : fs::directory_iterator(tables))
      if (e.path().extension() == ".txt") txt.push_back(e.path());
    std::sort(txt.begin(), txt.end());
    for (const auto& p : txt) {
      std::ifstream in(p);
      std::cout << "\n# " << p.filename().string() << '\n' << in.rdbuf();
    }
  }
  return r.exit_code(check);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eviction presence/period classification with SBDH knowledge injection"};
  app.require_subcommand(1);
  int code = 0;

  // ---- corpus ----
  auto* corpus = app.add_subcommand("corpus", "Synthesize, filter and split datasets");
  corpus->require_subcommand(1);

  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = corpus->add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--config", synth_config, "Generator config file");
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth->add_option("--seed", synth_seed, "Overrides the config seed");
  synth->footer(kGeneratorKeys);
  synth->callback([&] {
    auto kv = synth_config.empty() ? KeyValue{} : KeyValue::load(synth_config);
    auto cfg = GeneratorConfig::from_keyvalue(kv);
    if (!kv.unused_keys().empty()) throw ConfigError("unknown generator key '" + kv.unused_keys().front() + "'");
    if (synth_seed) cfg.seed = *synth_seed;
    write_dataset(synthesize(cfg), synth_out);
  });

  std::string filter_kw, filter_in, filter_out;
  auto* filter = corpus->add_subcommand("filter", "Keep texts containing an eviction keyword");
  filter->add_option("--keywords-file", filter_kw, "One keyword per line; default list when omitted");
  filter->add_option("--in", filter_in, "Plain text lines or dataset JSONL")->required();
  filter->add_option("--out", filter_out, "Output JSONL")->required();
  filter->callback([&] {
    std::vector<std::string> keywords = default_eviction_keywords();
    if (!filter_kw.empty()) {
      keywords.clear();
      for (const auto& l : read_lines(filter_kw)) {
        const auto t = trim(l);
        if (!t.empty() && t[0] != '#') keywords.push_back(t);
      }
    }
    std::ostringstream out;
    for (const auto& line : read_lines(filter_in)) {
      if (trim(line).empty()) continue;
      json obj = json::parse(line, nullptr, false);
      if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string())
        obj = json{{"text", line}};
      const auto hits = keyword_filter({obj["text"].get<std::string>()}, keywords);
      if (hits.empty()) continue;
      obj["keywords"] = hits.front().keywords;
      out << obj.dump() << '\n';
    }
    write_text(filter_out, out.str());
  });

  std::string split_in, split_out;
  double f_train = 0.6, f_eval = 0.2, f_test = 0.2;
  std::uint64_t split_seed = 0;
  auto* splitc = corpus->add_subcommand("split", "Assign train/eval/test splits");
  splitc->add_option("--in", split_in, "Dataset JSONL")->required();
  splitc->add_option("--out", split_out, "Output JSONL")->required();
  splitc->add_option("--train", f_train);
  splitc->add_option("--eval", f_eval);
  splitc->add_option("--test", f_test);
  splitc->add_option("--seed", split_seed);
  splitc->callback([&] {
    write_dataset(split(ingest(split_in), {f_train, f_eval, f_test}, split_seed), split_out);
  });

  // ---- encode ----
  auto* encode_cmd = app.add_subcommand("encode", "Inspect model inputs");
  encode_cmd->require_subcommand(1);
  std::string prev_in, prev_variant = "both_masked", prev_mode = "kiresh_prompt";
  ProviderFlags prev_provider;
  auto* preview = encode_cmd->add_subcommand("preview", "Print the constructed input strings");
  preview->add_option("--in", prev_in, "Dataset JSONL")->required();
  preview->add_option("--variant", prev_variant, "both_masked, presence_revealed or period_revealed");
  preview->add_option("--mode", prev_mode, "plain, kiresh, prompt or kiresh_prompt");
  prev_provider.add(preview);
  preview->callback([&] {
    const auto v = parse_variant(prev_variant);
    if (!v) throw ConfigError("unknown variant '" + prev_variant + "'");
    const auto m = parse_mode(prev_mode);
    if (!m) throw ConfigError("unknown mode '" + prev_mode + "'");
    const auto provider = prev_provider.build();
    for (const auto& ex : ingest(prev_in).examples)
      std::cout << build_model_text(ex, *m, provider, *v) << '\n';
  });

  // ---- model ----
  auto* model_cmd = app.add_subcommand("model", "Train and run classifiers");
  model_cmd->require_subcommand(1);
  std::string tr_mode = "kiresh_prompt", tr_backend, tr_config, tr_data, tr_out, tr_log;
  std::optional<std::uint64_t> tr_seed;
  ProviderFlags tr_provider;
  auto* train_cmd = model_cmd->add_subcommand("train", "Train a checkpoint");
  train_cmd->add_option("--mode", tr_mode);
  train_cmd->add_option("--backend", tr_backend, "tiny_encoder or linear_bof (overrides config)");
  train_cmd->add_option("--config", tr_config, "Keys: backend, dim, max_len, lr, batch_size, epochs, dropout, clip_norm, variant_probs, seed");
  train_cmd->add_option("--data", tr_data, "Dataset JSONL with train/eval splits")->required();
  train_cmd->add_option("--out", tr_out, "Checkpoint path")->required();
  train_cmd->add_option("--seed", tr_seed, "Initialization and ordering seed");
  train_cmd->add_option("--log", tr_log, "Per-epoch log (JSONL)");
  tr_provider.add(train_cmd);
  train_cmd->callback([&] {
    auto kv = tr_config.empty() ? KeyValue{} : KeyValue::load(tr_config);
    if (!tr_backend.empty()) kv.set("backend", tr_backend);
    BackendSpec b = backend_from_keyvalue(kv);
    TrainConfig tc = train_config_from_keyvalue(kv);
    if (!kv.unused_keys().empty()) throw ConfigError("unknown config key '" + kv.unused_keys().front() + "'");
    if (tr_seed) b.seed = tc.seed = *tr_seed;
    else b.seed = tc.seed;
    const auto m = parse_mode(tr_mode);
    if (!m) throw ConfigError("unknown mode '" + tr_mode + "'");
    const auto model = train(ingest(tr_data), b, tc, *m, tr_provider.build());
    save_checkpoint(model, tr_out);
    std::ostringstream log;
    for (const auto& e : model.log)
      log << json{{"epoch", e.epoch}, {"train_loss", e.train_loss},
                  {"eval_presence_macro_f1", e.eval_presence_macro_f1},
                  {"eval_period_macro_f1", e.eval_period_macro_f1},
                  {"eval_macro_f1", e.eval_macro_f1}}.dump()
          << '\n';
    if (!tr_log.empty()) write_text(tr_log, log.str());
    std::cout << "best epoch " << model.best_epoch << " of " << model.log.size() << '\n';
  });

  std::string pr_ckpt, pr_in, pr_out, pr_reveal, pr_split;
  ProviderFlags pr_provider;
  auto* predict_cmd = model_cmd->add_subcommand("predict", "Write per-example logits");
  predict_cmd->add_option("--ckpt", pr_ckpt)->required();
  predict_cmd->add_option("--in", pr_in, "Dataset JSONL")->required();
  predict_cmd->add_option("--out", pr_out, "Logit JSONL")->required();
  predict_cmd->add_option("--reveal", pr_reveal, "task=label, or task=gold to reveal each gold label");
  predict_cmd->add_option("--split", pr_split, "Only examples of this split");
  pr_provider.add(predict_cmd);
  predict_cmd->callback([&] {
    const auto model = load_checkpoint(pr_ckpt);
    const auto ds = ingest(pr_in);
    bool from_gold = false;
    const auto reveal = parse_reveal(pr_reveal, from_gold);
    std::optional<Split> only;
    if (!pr_split.empty()) {
      only = parse_split(pr_split);
      if (!only) throw ConfigError("unknown split '" + pr_split + "'");
    }
    const auto provider = pr_provider.build();
    std::vector<ProbRecord> recs;
    for (const auto& ex : ds.examples) {
      if (only && ex.split != *only) continue;
      auto r = reveal;
      if (r && from_gold) r->label = ex.gold.code(r->task);
      recs.push_back(predict(model, ex, provider, r));
    }
    write_logits(recs, pr_out);
  });

  // ---- calibrate ----
  auto* cal = app.add_subcommand("calibrate", "Temperature scaling");
  cal->require_subcommand(1);
  std::string fit_logits, fit_out;
  auto* fit = cal->add_subcommand("fit", "Fit per-task temperatures on held-out logits");
  fit->add_option("--logits", fit_logits)->required();
  fit->add_option("--out", fit_out)->required();
  fit->callback([&] {
    const auto t = fit_temperatures(read_logits(fit_logits));
    write_text(fit_out, to_json(t).dump(2) + '\n');
    std::cout << "presence_T " << t.presence << "\nperiod_T " << t.period << '\n';
  });

  std::string ap_logits, ap_temp, ap_out;
  auto* apply_cmd = cal->add_subcommand("apply", "Write temperature-scaled probabilities");
  apply_cmd->add_option("--logits", ap_logits)->required();
  apply_cmd->add_option("--temp", ap_temp)->required();
  apply_cmd->add_option("--out", ap_out)->required();
  apply_cmd->callback([&] {
    std::ifstream in(ap_temp);
    if (!in) throw InputError("cannot read " + ap_temp);
    const auto t = temperature_from_json(json::parse(in));
    write_probabilities(apply_temperature(read_logits(ap_logits), t), ap_out);
  });

  std::string rep_before, rep_after, rep_out;
  std::size_t rep_bins = 10;
  auto* report = cal->add_subcommand("report", "Compare calibration before and after scaling");
  report->add_option("--before", rep_before, "Logits or probabilities")->required();
  report->add_option("--after", rep_after, "Logits or probabilities")->required();
  report->add_option("--bins", rep_bins);
  report->add_option("--out", rep_out, "JSON report");
  report->callback([&] {
    const auto before = read_any_probabilities(rep_before);
    const auto after = read_any_probabilities(rep_after);
    if (before.size() != after.size()) throw InputError("before and after differ in length");
    json j = {{"bins", rep_bins}, {"size", before.size()}};
    std::vector<std::vector<std::string>> rows = {
        {"Task", "Setting", "ECE", "NLL", "MCC", "Macro-F1", "Micro-F1"}};
    for (auto t : kTasks) {
      const std::string tn(task_name(t));
      for (const auto& [name, recs] : {std::pair{"before", &before}, std::pair{"after", &after}}) {
        const auto c = confidences(*recs, t);
        const auto m = task_metrics(confusion_of(*recs, t));
        const double e = ece(c, rep_bins), n = mean_nll(*recs, t);
        j[tn][name] = {{"ece", e}, {"nll", n}, {"metrics", to_json(m)}};
        rows.push_back({tn, name, num(e), num(n), num(m.mcc), num(m.macro.f1), num(m.standard_micro_f1)});
      }
    }
    std::cout << render_text_table(rows);
    if (!rep_out.empty()) write_text(rep_out, j.dump(2) + '\n');
  });

  // ---- metrics ----
  auto* met = app.add_subcommand("metrics", "Classification and agreement metrics");
  met->require_subcommand(1);
  std::string m_preds, m_golds, m_out;
  std::size_t m_bins = 10;
  auto* mrep = met->add_subcommand("report", "Score predictions against gold labels");
  mrep->add_option("--preds", m_preds, "Logits or probabilities JSONL")->required();
  mrep->add_option("--golds", m_golds, "Dataset JSONL; labels joined by id");
  mrep->add_option("--bins", m_bins);
  mrep->add_option("--out", m_out, "JSON report");
  mrep->callback([&] {
    auto recs = read_any_probabilities(m_preds);
    if (!m_golds.empty()) {
      std::map<std::string, LabelPair> gold;
      for (const auto& ex : ingest(m_golds).examples) gold[ex.id] = ex.gold;
      for (auto& r : recs) {
        auto it = gold.find(r.id);
        if (it == gold.end()) throw InputError("no gold label for id '" + r.id + "'");
        r.gold = it->second;
      }
    }
    json j = {{"size", recs.size()}, {"bins", m_bins}};
    TaskMetrics tm[2];
    for (auto t : kTasks) {
      tm[static_cast<int>(t)] = task_metrics(confusion_of(recs, t));
      j[std::string(task_name(t))] = to_json(tm[static_cast<int>(t)]);
      j[std::string(task_name(t))]["ece"] = ece(confidences(recs, t), m_bins);
    }
    std::cout << render_text_table(metrics_rows(tm[0], tm[1], "scores"));
    if (!m_out.empty()) write_text(m_out, j.dump(2) + '\n');
  });

  std::string k_ratings;
  auto* kappa = met->add_subcommand("kappa", "Fleiss' kappa over annotator ratings");
  kappa->add_option("--ratings", k_ratings, "CSV: item id, then one category per annotator")->required();
  kappa->callback([&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", fleiss_kappa(read_ratings(k_ratings)));
    std::cout << "fleiss_kappa " << buf << '\n';
  });

  // ---- experiments ----
  struct HarnessFlags {
    std::string config, out;
    std::size_t jobs = 1;
    bool check = false;
  };
  static HarnessFlags hf;
  for (auto cmd : {Command::compare, Command::sweep, Command::ablate, Command::condition,
                   Command::pipeline}) {
    static const std::map<Command, std::string> help = {
        {Command::compare, "Train every mode per seed and compare test scores"},
        {Command::sweep, "Train on growing fractions of the training split"},
        {Command::ablate, "Add or remove one SBDH category at a time"},
        {Command::condition, "Score a prompt model with the other task's label revealed"},
        {Command::pipeline, "Generate, train, predict, calibrate and report"}};
    auto* sub = app.add_subcommand(std::string(command_name(cmd)), help.at(cmd));
    sub->add_option("--config", hf.config, "Experiment config (key = value)");
    sub->add_option("--out", hf.out, "Output directory")->required();
    sub->add_option("--jobs", hf.jobs, "Parallel cells")->check(CLI::PositiveNumber);
    sub->add_flag("--check", hf.check, "Exit 4 when an acceptance property fails");
    sub->callback([&code, cmd] { code = run_harness(cmd, hf.config, hf.out, hf.jobs, hf.check); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return code;
}
