#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "pgf/metrics/inception.hpp"
#include "pgf/survey/survey.hpp"
#include "pgf/train/trainer.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using pgf::cli::run;

namespace {

struct Output {
  int code;
  std::string out, err;
};

// Runs the CLI in-process with captured streams.
Output forge(std::vector<std::string> args) {
  args.insert(args.begin(), "progan-forge");
  std::ostringstream out, err;
  auto* o = std::cout.rdbuf(out.rdbuf());
  auto* e = std::cerr.rdbuf(err.rdbuf());
  const int code = run(args);
  std::cout.rdbuf(o);
  std::cerr.rdbuf(e);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

std::size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0 and shows defaults") {
  CHECK(forge({}).code == 1);
  CHECK(forge({"frobnicate"}).code == 1);
  CHECK(forge({"synth", "--no-such-flag"}).code == 1);
  CHECK(forge({"train", "--preset", "huge"}).code == 1);
  CHECK(forge({"prepare"}).code == 1);  // --input is required
  CHECK(forge({"survey"}).code == 1);
  CHECK(forge({"iscore"}).code == 1);  // neither --probs nor --images
  CHECK(forge({"train", "--stages", "4:x"}).code == 1);

  const auto top = forge({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"prepare", "augment", "synth", "train", "sample", "swd", "iscore", "survey"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  // Every subcommand's help lists its flags with their defaults.
  const std::vector<std::vector<std::string>> subs = {{"prepare"}, {"augment"}, {"synth"}, {"train"},
                                                      {"sample"}, {"swd"}, {"iscore"}, {"survey", "serve"},
                                                      {"survey", "report"}};
  for (auto sub : subs) {
    sub.push_back("--help");
    const auto h = forge(sub);
    CAPTURE(sub[0]);
    CHECK(h.code == 0);
    CHECK(h.out.find("--") != std::string::npos);
  }
  CHECK(forge({"synth", "--help"}).out.find("[200]") != std::string::npos);
  CHECK(forge({"prepare", "--help"}).out.find("[1024]") != std::string::npos);
  CHECK(forge({"train", "--help"}).out.find("[desk]") != std::string::npos);
}

TEST_CASE("data errors exit 2") {
  pgf::testing::TempDir dir("cli_err");
  CHECK(forge({"prepare", "--input", (dir.path() / "absent").string()}).code == 2);
  CHECK(forge({"iscore", "--probs", (dir.path() / "absent.csv").string()}).code == 2);
  fs::create_directories(dir.path() / "empty");
  CHECK(forge({"swd", "--real", (dir.path() / "empty").string(), "--fake", (dir.path() / "empty").string()}).code ==
        2);
  CHECK(forge({"sample", "--checkpoint", (dir.path() / "nothing").string()}).code == 2);
}

TEST_CASE("synth is deterministic and PROGAN_FORGE_HOME sets the default root") {
  pgf::testing::TempDir dir("cli_synth");
  const auto a = dir.path() / "a", b = dir.path() / "b";
  REQUIRE(forge({"synth", "--count", "200", "--resolution", "32", "--seed", "7", "--out", a.string()}).code == 0);
  REQUIRE(forge({"synth", "--count", "200", "--resolution", "32", "--seed", "7", "--out", b.string(), "--threads",
                 "3"})
              .code == 0);
  const auto ta = tree_bytes(a), tb = tree_bytes(b);
  CHECK(ta.size() == 201);  // images + manifest
  CHECK(ta == tb);

  ::setenv("PROGAN_FORGE_HOME", (dir.path() / "home").string().c_str(), 1);
  CHECK(pgf::cli::home_dir() == dir.path() / "home");
  REQUIRE(forge({"synth", "--count", "3", "--resolution", "8"}).code == 0);
  CHECK(fs::exists(dir.path() / "home" / "synth" / "manifest.csv"));
  ::unsetenv("PROGAN_FORGE_HOME");
}

TEST_CASE("prepare at 1024 yields nine resolution folders") {
  pgf::testing::TempDir dir("cli_prep");
  REQUIRE(forge({"synth", "--count", "2", "--resolution", "1024", "--out", (dir.path() / "raw").string()}).code == 0);
  const auto store = dir.path() / "store";
  const auto r = forge({"prepare", "--input", (dir.path() / "raw").string(), "--out", store.string(),
                        "--max-resolution", "1024"});
  REQUIRE(r.code == 0);
  std::size_t folders = 0;
  for (const auto& e : fs::directory_iterator(store)) folders += e.is_directory();
  CHECK(folders == 9);
  for (std::size_t res = 4; res <= 1024; res *= 2) CHECK(fs::is_directory(store / std::to_string(res)));
}

TEST_CASE("augment writes ten images per input") {
  pgf::testing::TempDir dir("cli_aug");
  REQUIRE(forge({"synth", "--count", "3", "--resolution", "32", "--out", (dir.path() / "raw").string()}).code == 0);
  const auto r = forge({"augment", "--input", (dir.path() / "raw").string(), "--out", (dir.path() / "aug").string()});
  REQUIRE(r.code == 0);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "aug")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 30);
  CHECK(forge({"augment", "--input", (dir.path() / "raw").string(), "--crop-min", "0.99"}).code == 1);
}

TEST_CASE("train, resume, sample, then swd gives one row per trained resolution") {
  pgf::testing::TempDir dir("cli_train");
  const auto run_dir = dir.path() / "run";
  const std::vector<std::string> common = {"--stages", "4:6,8:6", "--channels", "8", "--batch", "4",
                                           "--fade-images", "8", "--checkpoint-interval", "6", "--metrics-interval", "1", "--synth-count",
                                           "24", "--quiet"};
  auto args = std::vector<std::string>{"train", "--out", run_dir.string()};
  args.insert(args.end(), common.begin(), common.end());
  const auto t = forge(args);
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(t.out.find("iterations 12 of 12") != std::string::npos);
  std::ifstream metrics(run_dir / "metrics.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(metrics, line)) ++n;
  CHECK(n == 12);

  // Resume from the midpoint into a second directory: identical loss trace.
  const auto resumed = dir.path() / "resumed";
  args = {"train", "--out", resumed.string(), "--from-checkpoint", (run_dir / "checkpoints" / "ckpt_00000006").string(),
          "--synth-count", "24", "--quiet"};
  REQUIRE(forge(args).code == 0);
  std::ifstream a(run_dir / "metrics.jsonl"), b(resumed / "metrics.jsonl");
  std::vector<std::string> la, lb;
  while (std::getline(a, line)) la.push_back(line);
  while (std::getline(b, line)) lb.push_back(line);
  REQUIRE(lb.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto ra = pgf::train::MetricsRecord::from_json(la[6 + i]), rb = pgf::train::MetricsRecord::from_json(lb[i]);
    CHECK(ra.iteration == rb.iteration);
    CHECK(ra.d_loss == rb.d_loss);
    CHECK(ra.g_loss == rb.g_loss);
  }

  const auto fake = dir.path() / "fake";
  const auto s = forge({"sample", "--checkpoint", (run_dir / "checkpoints" / "ckpt_00000012").string(), "--count", "30",
                        "--out", fake.string(), "--grid", (dir.path() / "grid.png").string()});
  REQUIRE_MESSAGE(s.code == 0, s.err);
  CHECK(fs::exists(dir.path() / "grid.png"));
  const auto real = dir.path() / "real";
  REQUIRE(forge({"synth", "--count", "30", "--resolution", "8", "--seed", "3", "--out", real.string()}).code == 0);
  const auto w = forge({"swd", "--real", real.string(), "--fake", fake.string(), "--projections", "32",
                        "--descriptors", "16"});
  REQUIRE_MESSAGE(w.code == 0, w.err);
  CHECK(count_lines(w.out) == 3);  // header + 4 + 8
  CHECK(w.out.rfind("resolution,score", 0) == 0);
  CHECK(w.out.find("\n4,") != std::string::npos);
  CHECK(w.out.find("\n8,") != std::string::npos);
}

TEST_CASE("iscore on a probability CSV and survey report on a log") {
  pgf::testing::TempDir dir("cli_score");
  pgf::metrics::ProbMatrix m;
  m.rows = 4;
  m.cols = 4;
  m.p.assign(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    m.p[i * 4 + i] = 1.0;
    m.ids.push_back("img" + std::to_string(i));
  }
  pgf::metrics::write_prob_csv(dir.path() / "p.csv", m);
  const auto r = forge({"iscore", "--probs", (dir.path() / "p.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("inception_score 4.000000") != std::string::npos);

  {
    std::ofstream log(dir.path() / "answers.jsonl");
    using pgf::survey::Label;
    for (int i = 0; i < 3; ++i) log << pgf::survey::AnswerEvent{1.0, "s", "a", Label::real, Label::real}.to_json() << "\n";
    log << pgf::survey::AnswerEvent{1.0, "s", "b", Label::fake, Label::real}.to_json() << "\n";
  }
  const auto rep = forge({"survey", "report", "--log", (dir.path() / "answers.jsonl").string(), "--json"});
  REQUIRE(rep.code == 0);
  const auto j = nlohmann::json::parse(rep.out);
  CHECK(j.at("tp") == 3);
  CHECK(j.at("fp") == 1);
  CHECK(j.at("total") == 4);
  CHECK(std::abs(j.at("accuracy").get<double>() - 0.75) < 1e-12);
}
