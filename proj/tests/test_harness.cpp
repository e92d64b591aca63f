#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "kiresh/error.hpp"
#include "kiresh/harness.hpp"

using namespace kiresh;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "corpus.total_count = 150\n"
    "corpus.seed = 2\n"
    "dim = 8\n"
    "epochs = 2\n"
    "seeds = 0,1\n";

ExperimentConfig small_config(const std::string& extra = "") {
  return ExperimentConfig::from_keyvalue(KeyValue::parse(std::string(kSmall) + extra));
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kiresh_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> manifest_lines(const fs::path& dir) {
  std::vector<json> out;
  std::istringstream in(slurp(dir / "manifest.jsonl"));
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

const Cell& cell(const RunResult& r, const std::string& key) {
  for (const auto& c : r.cells)
    if (c.key == key) return c;
  throw std::runtime_error("no cell " + key);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KIRESH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = ExperimentConfig::from_keyvalue(KeyValue{});
  EXPECT_EQ(c.modes.size(), 4u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(c.fractions.size(), 6u);
  EXPECT_EQ(c.generator.total_count, 5271u);
  EXPECT_EQ(c.train.max_epochs, 20u);
  EXPECT_EQ(c.backend.dim, 64u);
  EXPECT_EQ(c.bins, 10u);
}

TEST(Config, Keys) {
  const auto c = small_config("modes = plain, prompt\nablation.direction = remove_one\n"
                              "ablation.categories = pain, legal_problems\nfractions = 0.5, 1\n");
  EXPECT_EQ(c.modes, (std::vector<Mode>{Mode::plain, Mode::prompt}));
  EXPECT_EQ(c.direction, AblationDirection::remove_one);
  EXPECT_EQ(c.categories, (std::vector<Sbdh>{Sbdh::pain, Sbdh::legal_problems}));
  EXPECT_EQ(c.generator.total_count, 150u);
  EXPECT_EQ(c.split_seed, 2u);
  EXPECT_EQ(c.snapshot.at("epochs"), "2");
}

TEST(Config, Errors) {
  for (const char* bad : {"typo = 1\n", "corpus.typo = 1\n", "modes = plain, bert\n", "seeds = -1\n",
                          "seeds = 1,1\n", "fractions = 0\n", "ablation.direction = sideways\n",
                          "split = 0.5, 0.5\n", "bins = 0\n", "modes = plain, plain\n", "lr = -1\n"}) {
    EXPECT_THROW(ExperimentConfig::from_keyvalue(KeyValue::parse(bad)), ConfigError) << bad;
  }
}

TEST(Tables, Rendering) {
  const std::vector<std::vector<std::string>> rows = {{"Mode", "MCC"}, {"plain", "0.5"}, {"kiresh,x", "0.75"}};
  EXPECT_EQ(render_text_table(rows), "Mode       MCC\n--------------\nplain      0.5\nkiresh,x  0.75\n");
  EXPECT_EQ(render_csv(rows), "Mode,MCC\nplain,0.5\n\"kiresh,x\",0.75\n");
}

TEST(Compare, CellsFilesAndResume) {
  const auto dir = fresh_dir("compare");
  const auto cfg = small_config();
  const auto r = compare_methods(cfg, {dir, 1, true});
  ASSERT_EQ(r.cells.size(), 8u);
  EXPECT_FALSE(r.any_failed());
  EXPECT_EQ(r.cells.front().key, "mode=plain/seed=0");
  for (const auto* f : {"manifest.jsonl", "report.json", "timing.jsonl", "tables/compare_eval.txt",
                        "tables/compare_test.csv", "checkpoints/kiresh_prompt-seed1.ckpt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto lines = manifest_lines(dir);
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0]["type"], "header");
  EXPECT_EQ(lines[0]["command"], "compare");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i]["status"], "ok");
    EXPECT_TRUE(lines[i]["metrics"]["test"]["presence"].contains("mcc"));
    EXPECT_FALSE(lines[i].contains("seconds"));
  }
  const json report = json::parse(slurp(dir / "report.json"));
  // Seed average is the arithmetic mean of the per-seed manifest values.
  const double m0 = cell(r, "mode=plain/seed=0").metrics["test"]["period"]["mcc"];
  const double m1 = cell(r, "mode=plain/seed=1").metrics["test"]["period"]["mcc"];
  EXPECT_DOUBLE_EQ(report["aggregates"]["test"]["plain"]["period"]["mcc"]["mean"].get<double>(), (m0 + m1) / 2);
  EXPECT_EQ(r.exit_code(false), 0);
  EXPECT_EQ(r.checks.size(), 4u);

  // Resume: every cell is reused; outputs are unchanged apart from timing.
  const auto manifest = slurp(dir / "manifest.jsonl");
  const auto table = slurp(dir / "tables/compare_test.txt");
  const auto timing_before = slurp(dir / "timing.jsonl");
  const auto timing_lines = std::count(timing_before.begin(), timing_before.end(), '\n');
  const auto again = compare_methods(cfg, {dir, 1, false});
  EXPECT_EQ(slurp(dir / "manifest.jsonl"), manifest);
  EXPECT_EQ(slurp(dir / "tables/compare_test.txt"), table);
  const auto timing = slurp(dir / "timing.jsonl");
  EXPECT_EQ(std::count(timing.begin(), timing.end(), '\n'), timing_lines);

  // A partial manifest resumes only the missing cells.
  {
    std::string partial;
    std::istringstream in(manifest);
    std::string line;
    for (int i = 0; i < 4 && std::getline(in, line); ++i) partial += line + '\n';
    std::ofstream(dir / "manifest.jsonl", std::ios::binary) << partial;
  }
  compare_methods(cfg, {dir, 1, false});
  EXPECT_EQ(slurp(dir / "manifest.jsonl"), manifest);

  // A different configuration invalidates the old cells.
  const auto other = compare_methods(small_config("corpus.seed = 3\n"), {dir, 1, false});
  EXPECT_NE(slurp(dir / "manifest.jsonl"), manifest);
}

TEST(Compare, DeterministicAcrossDirsAndJobs) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const auto cfg = small_config("modes = plain, kiresh_prompt\n");
  compare_methods(cfg, {a, 1, false});
  compare_methods(cfg, {b, 2, false});
  for (const auto* f : {"manifest.jsonl", "report.json", "tables/compare_eval.txt", "tables/compare_test.csv",
                        "checkpoints/plain-seed0.ckpt", "checkpoints/kiresh_prompt-seed1.ckpt"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Sweep, FractionOneMatchesCompare) {
  const auto dir = fresh_dir("sweep");
  const auto cfg = small_config("modes = plain\nfractions = 0.5, 1\n");
  const auto s = size_sweep(cfg, {dir, 1, false});
  ASSERT_EQ(s.cells.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "tables/sweep_eval.txt"));
  const auto c = compare_methods(cfg, {fresh_dir("sweep_cmp"), 1, false});
  for (std::uint64_t seed : {0, 1}) {
    const auto& sc = cell(s, "mode=plain/fraction=1/seed=" + std::to_string(seed));
    const auto& cc = cell(c, "mode=plain/seed=" + std::to_string(seed));
    EXPECT_EQ(sc.metrics["eval"], cc.metrics["eval"]);
    EXPECT_EQ(sc.metrics["test"], cc.metrics["test"]);
  }
  EXPECT_NE(cell(s, "mode=plain/fraction=0.5/seed=0").metrics, cell(s, "mode=plain/fraction=1/seed=0").metrics);
}

TEST(Ablate, CellsAndDeltas) {
  const auto dir = fresh_dir("ablate");
  const auto cfg = small_config("ablation.categories = pain, substance_abuse\nseeds = 0\n");
  const auto r = sbdh_ablation(cfg, {dir, 1, false});
  // two baselines + two categories per direction
  EXPECT_EQ(r.cells.size(), 6u);
  EXPECT_FALSE(r.any_failed());
  for (const auto* f : {"tables/ablate_add_one.txt", "tables/ablate_remove_one.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const json report = json::parse(slurp(dir / "report.json"));
  const double base = cell(r, "variant=baseline_plain/seed=0").metrics["test"]["presence"]["mcc"];
  const double with = cell(r, "variant=add_one:pain/seed=0").metrics["test"]["presence"]["mcc"];
  EXPECT_DOUBLE_EQ(report["aggregates"]["add_one"]["pain"]["presence"]["mean"].get<double>(), with - base);
}

TEST(Condition, RevealRowsAndContract) {
  const auto cmp = fresh_dir("cond_cmp");
  const auto cfg = small_config("modes = kiresh_prompt\n");
  const auto c = compare_methods(cfg, {cmp, 1, false});
  const auto dir = fresh_dir("cond");
  const auto r = known_label_eval(small_config("checkpoint_dir = " + (cmp / "checkpoints").string() + "\n"),
                                  {dir, 1, false});
  ASSERT_EQ(r.cells.size(), 2u);
  for (const auto& cl : r.cells) {
    EXPECT_EQ(cl.metrics["source"], "checkpoint");
    // The unconditioned row equals the standard evaluation.
    const auto& std_eval = cell(c, "mode=kiresh_prompt/seed=" + cl.labels["seed"].dump()).metrics;
    EXPECT_EQ(cl.metrics["test"]["none"], std_eval["test"]);
    EXPECT_EQ(cl.metrics["eval"]["none"], std_eval["eval"]);
    for (const auto* cond : {"none", "presence_revealed", "period_revealed"})
      EXPECT_EQ(cl.metrics["test"][cond]["presence"].size(), 5u);
  }
  EXPECT_TRUE(fs::exists(dir / "tables/condition_test.txt"));
  EXPECT_EQ(r.checks.size(), 4u);
  EXPECT_THROW(known_label_eval(small_config("condition.mode = kiresh\n"), {fresh_dir("cond_bad"), 1, false}),
               ContractError);
}

TEST(Pipeline, ArtifactsAndCalibration) {
  const auto dir = fresh_dir("pipeline");
  const auto r = full_pipeline(small_config("seeds = 0\n"), {dir, 1, true});
  EXPECT_FALSE(r.any_failed());
  for (const auto* f : {"artifacts/seed0/model.ckpt", "artifacts/seed0/test_logits.jsonl",
                        "artifacts/seed0/test_calibrated.jsonl", "artifacts/seed0/temperature.json",
                        "tables/pipeline.txt", "report.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const auto& cl : r.cells)
    if (cl.key.find("metrics") != std::string::npos)
      for (const auto* t : {"presence", "period"}) {
        EXPECT_EQ(cl.metrics["no_ts"][t]["mcc"], cl.metrics["ts"][t]["mcc"]);
        EXPECT_EQ(cl.metrics["no_ts"][t]["macro_f1"], cl.metrics["ts"][t]["macro_f1"]);
      }
}

TEST(Failures, FailedCellsDoNotAbort) {
  const auto dir = fresh_dir("fail");
  // Every example in train: the eval split is empty, so training fails.
  std::ofstream(dir / "data.jsonl") << R"({"id":"a","text":"notice to vacate","presence":"present","period":"current","split":"train"})"
                                    << "\n"
                                    << R"({"id":"b","text":"no eviction","presence":"absent","period":"current","split":"train"})"
                                    << "\n";
  const auto cfg = small_config("dataset = " + (dir / "data.jsonl").string() + "\nmodes = plain, kiresh\n");
  const auto r = compare_methods(cfg, {dir / "out", 1, false});
  EXPECT_EQ(r.cells.size(), 4u);
  EXPECT_TRUE(r.any_failed());
  EXPECT_EQ(r.exit_code(false), 3);
  for (const auto& cl : r.cells) EXPECT_NE(cl.error.find("eval split is empty"), std::string::npos);
  const auto lines = manifest_lines(dir / "out");
  EXPECT_EQ(lines.back()["status"], "failed");
}

TEST(Cli, ExitCodes) {
  const auto dir = fresh_dir("cli");
  std::ofstream(dir / "bad.conf") << "nonsense_key = 1\n";
  EXPECT_EQ(run_cli("compare --config " + (dir / "bad.conf").string() + " --out " + (dir / "o1").string()), 2);
  EXPECT_EQ(run_cli("compare --no-such-flag"), 2);
  std::ofstream(dir / "cond.conf") << kSmall << "condition.mode = plain\n";
  EXPECT_EQ(run_cli("condition --config " + (dir / "cond.conf").string() + " --out " + (dir / "o2").string()), 2);
  std::ofstream(dir / "ok.conf") << kSmall << "seeds = 0\nmodes = plain\n";
  EXPECT_EQ(run_cli("compare --config " + (dir / "ok.conf").string() + " --out " + (dir / "o3").string()), 0);
  // Without kiresh_prompt there is nothing to check.
  EXPECT_EQ(run_cli("compare --check --config " + (dir / "ok.conf").string() + " --out " + (dir / "o3").string()), 0);
  // Two epochs at dim 8 learn nothing, so every ablation delta is 0 and the strict check fails.
  std::ofstream(dir / "abl.conf") << kSmall << "seeds = 0\nablation.categories = pain, substance_abuse\n";
  EXPECT_EQ(run_cli("ablate --check --config " + (dir / "abl.conf").string() + " --out " + (dir / "o4").string()), 4);
  EXPECT_EQ(run_cli("ablate --config " + (dir / "abl.conf").string() + " --out " + (dir / "o4").string()), 0);
  EXPECT_EQ(run_cli("model predict --ckpt " + (dir / "missing.ckpt").string() + " --in x --out y"), 1);
}

TEST(Cli, EncodePreviewGolden) {
  const auto dir = fresh_dir("preview");
  std::ofstream(dir / "in.jsonl")
      << R"({"id":"x1","text":"Veteran received notice to vacate","sbdh":["legal_problems","housing_instability"],"presence":"present","period":"current"})"
      << "\n";
  const auto out = dir / "out.txt";
  const std::string cmd = std::string(KIRESH_CLI) + " encode preview --in " + (dir / "in.jsonl").string() +
                          " --variant period_revealed > " + out.string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_NE(slurp(out).find("[CLS] Veteran received notice to vacate [SEP] housing_instability [SEP] "
                            "legal_problems [SEP] The eviction presence is [MASK] . The eviction period is "
                            "current ."),
            std::string::npos);
}
