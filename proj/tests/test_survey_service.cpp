#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <thread>

#include "pgf/image/image.hpp"
#include "pgf/survey/http.hpp"
#include "pgf/survey/survey.hpp"
#include "support/survey_script.hpp"
#include "support/temp_dir.hpp"

using namespace pgf;
using namespace pgf::survey;
namespace fs = std::filesystem;

namespace {

ImagePool synthetic_pool(std::size_t real, std::size_t fake) {
  ImagePool pool;
  for (std::size_t i = 0; i < real; ++i) pool.add("r" + std::to_string(i), "r.png", Label::real);
  for (std::size_t i = 0; i < fake; ++i) pool.add("f" + std::to_string(i), "f.png", Label::fake);
  return pool;
}

void write_pool_dirs(const fs::path& root, std::size_t per_label) {
  for (const char* sub : {"real", "fake"}) {
    fs::create_directories(root / sub);
    for (std::size_t i = 0; i < per_label; ++i) {
      image::Image img(8, 8, 3, (i % 7) / 7.0f);
      image::write_png(root / sub / ("img_" + std::to_string(i) + ".png"), img);
    }
  }
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("sampler: bounds, no repeats, fair coin per slot, reproducible") {
  const auto pool = synthetic_pool(500, 500);
  Rng rng(1);
  CHECK_THROWS_AS(create_session(pool, 10, rng), SurveyError);
  CHECK_THROWS_AS(create_session(pool, 31, rng), SurveyError);
  CHECK_THROWS_AS(create_session(synthetic_pool(12, 40), 25, rng), SurveyError);

  std::size_t reals = 0, slots = 0;
  for (int s = 0; s < 10000; ++s) {
    const auto sess = create_session(pool, 26, rng);
    REQUIRE(sess.size() == 26);
    REQUIRE(std::set<std::string>(sess.images.begin(), sess.images.end()).size() == 26);
    for (const auto& id : sess.images) reals += pool.get(id).label == Label::real;
    slots += sess.size();
  }
  const double rate = double(reals) / slots;
  MESSAGE("real rate ", rate);
  CHECK(std::abs(rate - 0.5) <= 0.02);

  // Per-slot coin, not a fixed split: the count of reals varies across sessions.
  std::set<std::size_t> counts;
  Rng r2(2);
  for (int s = 0; s < 200; ++s) {
    const auto sess = create_session(pool, 26, r2);
    counts.insert(std::count_if(sess.images.begin(), sess.images.end(),
                                [&](const std::string& id) { return pool.get(id).label == Label::real; }));
  }
  CHECK(counts.size() > 3);

  Rng a(9), b(9);
  CHECK(create_session(pool, 27, a).images == create_session(pool, 27, b).images);
}

TEST_CASE("pool ids are opaque and directories are balanced") {
  testing::TempDir dir("pool");
  write_pool_dirs(dir.path(), 30);
  const auto pool = ImagePool::from_directories(dir.path() / "real", dir.path() / "fake", 4, 20);
  CHECK(pool.count(Label::real) == 20);
  CHECK(pool.count(Label::fake) == 20);
  for (const auto& e : pool.entries()) {
    CHECK(e.id.size() == 16);
    CHECK(e.id.find_first_not_of("0123456789abcdef") == std::string::npos);
  }
  // Labels are interleaved, not grouped by id order.
  std::vector<PoolEntry> sorted = pool.entries();
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  int runs = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) runs += sorted[i].label != sorted[i - 1].label;
  CHECK(runs > 5);
}

TEST_CASE("service flow: idempotent next, strict answering, totals-only finish") {
  testing::TempDir dir("flow");
  SurveyService svc(synthetic_pool(40, 40), dir.path() / "answers.jsonl", 3);
  const auto s = svc.create(26);
  CHECK(s.size() == 26);
  CHECK_THROWS_AS(svc.create(24), SurveyError);
  CHECK_THROWS_AS(svc.next("missing"), SurveyError);

  const auto first = svc.next(s.id);
  CHECK(first.position == 1);
  CHECK(svc.next(s.id).image_id == first.image_id);
  CHECK(first.image_id == s.images[0]);

  CHECK_THROWS_AS(svc.answer(s.id, s.images[1], Label::real), SurveyError);
  const auto ack = svc.answer(s.id, first.image_id, Label::real);
  CHECK(ack.position == 1);
  CHECK(ack.total == 26);
  try {
    svc.answer(s.id, first.image_id, Label::fake);
    FAIL("duplicate answer accepted");
  } catch (const SurveyError& e) {
    CHECK(e.kind == SurveyError::Kind::conflict);
    CHECK(std::string(e.what()).find("already") != std::string::npos);
  }
  try {
    svc.finish(s.id);
    FAIL("early finish accepted");
  } catch (const SurveyError& e) {
    CHECK(std::string(e.what()).find("25 images remain") != std::string::npos);
  }

  // Answer the rest correctly.
  for (std::size_t k = 1; k < s.size(); ++k) {
    const auto served = svc.next(s.id);
    svc.answer(s.id, served.image_id, svc.pool().get(served.image_id).label);
  }
  try {
    svc.next(s.id);
    FAIL("next after all answers");
  } catch (const SurveyError& e) {
    CHECK(std::string(e.what()) == "session complete");
  }
  const bool first_right = svc.pool().get(first.image_id).label == Label::real;
  const auto rep = svc.finish(s.id);
  CHECK(rep.correct + rep.incorrect == 26);
  CHECK(rep.correct == 25 + (first_right ? 1 : 0));
  CHECK_THROWS_AS(svc.finish(s.id), SurveyError);
  CHECK_THROWS_AS(svc.answer(s.id, s.images[0], Label::real), SurveyError);

  const auto lines = read_lines(svc.log_path());
  CHECK(lines.size() == 26);
  const auto j = nlohmann::json::parse(lines[0]);
  for (const char* key : {"ts", "session", "image", "truth", "guess"}) CHECK(j.contains(key));
  CHECK(svc.confusion().total() == 26);
  CHECK(svc.live_stats().size() == 26);

  // All-correct session reports (n, 0); the log grows by exactly n.
  const auto s2 = svc.create(25);
  for (std::size_t k = 0; k < 25; ++k) {
    const auto served = svc.next(s2.id);
    svc.answer(s2.id, served.image_id, svc.pool().get(served.image_id).label);
  }
  const auto rep2 = svc.finish(s2.id);
  CHECK(rep2.correct == 25);
  CHECK(rep2.incorrect == 0);
  CHECK(read_lines(svc.log_path()).size() == 51);
}

TEST_CASE("aggregate: paired totals, replay, empty store, corrupt lines") {
  std::vector<std::string> lines;
  auto push = [&](Label t, Label g, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      lines.push_back(AnswerEvent{1.0 + lines.size(), "s", "img" + std::to_string(lines.size() % 40), t, g}.to_json());
    }
  };
  push(Label::real, Label::real, 108);
  push(Label::real, Label::fake, 47);
  push(Label::fake, Label::real, 49);
  push(Label::fake, Label::fake, 113);
  const auto agg = aggregate_lines(lines);
  CHECK(agg.matrix.tp == 108);
  CHECK(agg.matrix.fn == 47);
  CHECK(agg.matrix.fp == 49);
  CHECK(agg.matrix.tn == 113);
  CHECK(agg.matrix.total() == 317);
  CHECK(std::abs(agg.matrix.accuracy() - 221.0 / 317.0) <= 1e-9);
  CHECK(std::abs(agg.matrix.accuracy() - 0.6972) <= 5e-5);
  std::size_t shown = 0;
  for (const auto& [id, st] : agg.images) {
    shown += st.shown;
    CHECK(st.correct <= st.shown);
  }
  CHECK(shown == 317);

  testing::TempDir dir("agg");
  {
    std::ofstream out(dir.path() / "log.jsonl");
    for (const auto& l : lines) out << l << '\n';
    out << "{not json\n" << R"({"ts":1,"session":"s","image":"x","truth":"maybe","guess":"real"})" << '\n';
  }
  const auto replay = aggregate(dir.path() / "log.jsonl");
  CHECK(replay.matrix == agg.matrix);
  CHECK(replay.images == agg.images);
  CHECK(replay.skipped == 2);
  const auto empty = aggregate(dir.path() / "missing.jsonl");
  CHECK(empty.matrix == ConfusionMatrix{});
  CHECK(empty.skipped == 0);
}

TEST_CASE("HTTP API hides labels until finish and reports totals only") {
  testing::TempDir dir("http");
  write_pool_dirs(dir.path(), 20);
  SurveyService svc(ImagePool::from_directories(dir.path() / "real", dir.path() / "fake", 5),
                    dir.path() / "answers.jsonl", 6);
  SurveyServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { server.serve(); });
  while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  httplib::Client cli("127.0.0.1", port);
  const auto res = testing::run_scripted_session(
      cli, [](const std::string&, std::size_t k) { return k % 3 ? "real" : "fake"; }, 25);
  REQUIRE_MESSAGE(res.ok, res.error);
  CHECK(res.answered == 25);
  const auto leaks = testing::scan_for_leaks(res.before_finish);
  for (const auto& l : leaks) MESSAGE("leak: ", l);
  CHECK(leaks.empty());
  CHECK(res.before_finish.size() > 50);

  // Every image response carries an image type and an id header only.
  std::size_t images = 0;
  for (const auto& c : res.before_finish) images += c.content_type == "image/png";
  CHECK(images == 26);

  const auto fin = nlohmann::json::parse(res.finish.body);
  CHECK(fin.size() == 2);
  CHECK(fin.at("correct").get<std::size_t>() + fin.at("incorrect").get<std::size_t>() == 25);

  auto conf = cli.Get("/api/admin/confusion");
  REQUIRE(conf);
  const auto cj = nlohmann::json::parse(conf->body);
  CHECK(cj.at("total").get<std::size_t>() == 25);
  CHECK(cj.at("tp").get<std::size_t>() + cj.at("tn").get<std::size_t>() == fin.at("correct").get<std::size_t>());

  CHECK(cli.Post("/api/sessions", R"({"n": 3})", "application/json")->status == 400);
  CHECK(cli.Get("/api/sessions/unknown/next")->status == 404);
  CHECK(cli.Post("/api/sessions", "{oops", "application/json")->status == 400);
  const auto created = cli.Post("/api/sessions", "", "application/json");
  REQUIRE(created->status == 201);
  const auto total = nlohmann::json::parse(created->body).at("total").get<std::size_t>();
  CHECK(total >= 25);
  CHECK(total <= 30);

  server.stop();
  th.join();
}
