#include "pgf/survey/survey.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <json.hpp>
#include <random>
#include <set>

namespace pgf::survey {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Kind = SurveyError::Kind;

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string hex_token(std::uint64_t a, std::uint64_t b, int words) {
  char buf[40];
  if (words == 1) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(a));
  } else {
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a),
                  static_cast<unsigned long long>(b));
  }
  return buf;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SurveyError(Kind::bad_request, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string to_string(Label l) { return l == Label::real ? "real" : "fake"; }

Label parse_label(const std::string& s) {
  if (s == "real") return Label::real;
  if (s == "fake") return Label::fake;
  throw SurveyError(Kind::bad_request, "guess must be \"real\" or \"fake\"");
}

ImagePool ImagePool::from_directories(const fs::path& real_dir, const fs::path& fake_dir, std::uint64_t seed,
                                      std::size_t per_label) {
  Rng rng(Rng::derive(seed, 0x1D5));
  std::vector<std::pair<fs::path, Label>> all;
  for (auto [dir, label] : {std::pair{real_dir, Label::real}, std::pair{fake_dir, Label::fake}}) {
    auto files = image_files(dir);
    if (per_label && files.size() > per_label) {
      for (std::size_t i = 0; i < per_label; ++i) std::swap(files[i], files[i + rng.below(files.size() - i)]);
      files.resize(per_label);
    }
    for (auto& f : files) all.emplace_back(f, label);
  }
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
  ImagePool pool;
  std::set<std::string> used;
  for (auto& [path, label] : all) {
    std::string id;
    do id = hex_token(rng.next_u64(), 0, 1);
    while (!used.insert(id).second);
    pool.add(id, path, label);
  }
  return pool;
}

void ImagePool::add(std::string id, fs::path path, Label label) {
  if (id.empty() || by_id_.count(id)) throw SurveyError(Kind::bad_request, "duplicate or empty image id");
  const std::size_t idx = entries_.size();
  by_id_[id] = idx;
  (label == Label::real ? real_ : fake_).push_back(idx);
  entries_.push_back({std::move(id), std::move(path), label});
}

const PoolEntry& ImagePool::get(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw SurveyError(Kind::not_found, "unknown image id");
  return entries_[it->second];
}

std::size_t ImagePool::count(Label l) const { return indices(l).size(); }

SurveySession create_session(const ImagePool& pool, std::size_t n, Rng& rng, std::string session_id) {
  if (n < kMinImages || n > kMaxImages) {
    throw SurveyError(Kind::bad_request, "session size must be between 25 and 30, got " + std::to_string(n));
  }
  const std::size_t half = (n + 1) / 2;
  if (pool.count(Label::real) < half || pool.count(Label::fake) < half) {
    throw SurveyError(Kind::bad_request, "pool needs at least " + std::to_string(half) + " images of each kind");
  }
  SurveySession s;
  s.id = std::move(session_id);
  // Lazily shuffled copies: element i of a label is fixed on first use.
  std::vector<std::size_t> real = pool.indices(Label::real), fake = pool.indices(Label::fake);
  std::size_t used_real = 0, used_fake = 0;
  auto draw = [&](std::vector<std::size_t>& v, std::size_t& used) {
    std::swap(v[used], v[used + rng.below(v.size() - used)]);
    return v[used++];
  };
  for (std::size_t slot = 0; slot < n; ++slot) {
    bool want_real = rng.uniform() < 0.5;
    if (want_real && used_real == real.size()) want_real = false;
    if (!want_real && used_fake == fake.size()) want_real = true;
    const auto idx = want_real ? draw(real, used_real) : draw(fake, used_fake);
    s.images.push_back(pool.entries()[idx].id);
  }
  return s;
}

void ConfusionMatrix::add(Label truth, Label guess) {
  if (truth == Label::real) {
    ++(guess == Label::real ? tp : fn);
  } else {
    ++(guess == Label::real ? fp : tn);
  }
}

std::string AnswerEvent::to_json() const {
  return json{{"ts", ts}, {"session", session}, {"image", image}, {"truth", survey::to_string(truth)},
              {"guess", survey::to_string(guess)}}
      .dump();
}

Aggregate aggregate_lines(const std::vector<std::string>& lines) {
  Aggregate out;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto truth = parse_label(j.at("truth").get<std::string>());
      const auto guess = parse_label(j.at("guess").get<std::string>());
      const auto image = j.at("image").get<std::string>();
      j.at("session").get<std::string>();
      j.at("ts").get<double>();
      out.matrix.add(truth, guess);
      auto& st = out.images[image];
      ++st.shown;
      st.correct += truth == guess;
    } catch (const std::exception&) {
      ++out.skipped;
    }
  }
  return out;
}

Aggregate aggregate(const fs::path& log) {
  std::vector<std::string> lines;
  std::ifstream in(log);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return aggregate_lines(lines);
}

SurveyService::SurveyService(ImagePool pool, fs::path log, std::uint64_t seed)
    : pool_(std::move(pool)), log_(std::move(log)), seed_(seed) {
  std::random_device rd;
  tokens_.seed((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  if (log_.has_parent_path()) fs::create_directories(log_.parent_path());
  log_out_.open(log_, std::ios::app);
  if (!log_out_) throw SurveyError(Kind::bad_request, "cannot open answer log " + log_.string());
  // Running per-image totals continue from earlier runs.
  stats_ = aggregate(log_).images;
}

std::string SurveyService::new_token() { return hex_token(tokens_(), tokens_(), 2); }

SurveySession SurveyService::create(std::optional<std::size_t> n) {
  std::uint64_t number;
  std::string id;
  {
    std::lock_guard lock(mu_);
    number = counter_++;
    do id = new_token();
    while (sessions_.count(id));
  }
  Rng rng(Rng::derive(seed_, number));
  const std::size_t size = n ? *n : kMinImages + rng.below(kMaxImages - kMinImages + 1);
  auto slot = std::make_shared<Slot>();
  slot->session = create_session(pool_, size, rng, id);
  auto copy = slot->session;
  std::lock_guard lock(mu_);
  sessions_[id] = std::move(slot);
  return copy;
}

std::shared_ptr<SurveyService::Slot> SurveyService::slot(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SurveyError(Kind::not_found, "unknown session");
  return it->second;
}

Served SurveyService::next(const std::string& session) {
  auto sl = slot(session);
  std::lock_guard lock(sl->mu);
  const auto& s = sl->session;
  if (s.finished || s.cursor >= s.size()) throw SurveyError(Kind::conflict, "session complete");
  const auto& e = pool_.get(s.images[s.cursor]);
  return {e.id, e.path, s.cursor + 1, s.size()};
}

Ack SurveyService::answer(const std::string& session, const std::string& image_id, Label guess) {
  auto sl = slot(session);
  std::lock_guard lock(sl->mu);
  auto& s = sl->session;
  if (s.finished) throw SurveyError(Kind::conflict, "session complete");
  for (const auto& a : s.answers) {
    if (a.image_id == image_id) throw SurveyError(Kind::conflict, "image already answered");
  }
  if (s.cursor >= s.size()) throw SurveyError(Kind::conflict, "all images answered; finish the session");
  if (image_id != s.images[s.cursor]) throw SurveyError(Kind::conflict, "not the current image");
  s.answers.push_back({image_id, guess, now_seconds()});
  ++s.cursor;
  {
    std::lock_guard sl2(stats_mu_);
    auto& st = stats_[image_id];
    ++st.shown;
    st.correct += pool_.get(image_id).label == guess;
  }
  return {s.cursor, s.size()};
}

FinishReport SurveyService::finish(const std::string& session) {
  auto sl = slot(session);
  std::lock_guard lock(sl->mu);
  auto& s = sl->session;
  if (s.finished) throw SurveyError(Kind::conflict, "session already finished");
  if (s.answers.size() < s.size()) {
    throw SurveyError(Kind::conflict, std::to_string(s.size() - s.answers.size()) + " images remain unanswered");
  }
  FinishReport rep;
  std::string block;
  for (const auto& a : s.answers) {
    const auto truth = pool_.get(a.image_id).label;
    (truth == a.guess ? rep.correct : rep.incorrect)++;
    block += AnswerEvent{a.timestamp, s.id, a.image_id, truth, a.guess}.to_json() + '\n';
  }
  {
    std::lock_guard lk(log_mu_);
    log_out_ << block;
    log_out_.flush();
    if (!log_out_) throw std::runtime_error("failed writing answer log " + log_.string());
  }
  s.finished = true;
  return rep;
}

ConfusionMatrix SurveyService::confusion() const {
  std::lock_guard lk(log_mu_);
  return aggregate(log_).matrix;
}

std::map<std::string, ImageStats> SurveyService::live_stats() const {
  std::lock_guard lk(stats_mu_);
  return stats_;
}

}  // namespace pgf::survey
