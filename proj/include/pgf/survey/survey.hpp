#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgf/tensor/random.hpp"

namespace pgf::survey {

enum class Label { real, fake };
std::string to_string(Label l);
Label parse_label(const std::string& s);  // throws SurveyError

inline constexpr std::size_t kMinImages = 25;
inline constexpr std::size_t kMaxImages = 30;

// Error codes map onto HTTP statuses.
struct SurveyError : std::runtime_error {
  enum class Kind { bad_request, not_found, conflict };
  Kind kind;
  SurveyError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct PoolEntry {
  std::string id;  // opaque, independent of the label
  std::filesystem::path path;
  Label label;
};

class ImagePool {
 public:
  // Ids are random 16-hex tokens drawn from `seed`; entry order is shuffled.
  static ImagePool from_directories(const std::filesystem::path& real_dir, const std::filesystem::path& fake_dir,
                                    std::uint64_t seed, std::size_t per_label = 0);
  void add(std::string id, std::filesystem::path path, Label label);

  const std::vector<PoolEntry>& entries() const { return entries_; }
  const PoolEntry& get(const std::string& id) const;  // throws not_found
  std::size_t count(Label l) const;
  const std::vector<std::size_t>& indices(Label l) const { return l == Label::real ? real_ : fake_; }

 private:
  std::vector<PoolEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<std::size_t> real_, fake_;
};

struct Answer {
  std::string image_id;
  Label guess;
  double timestamp = 0;  // seconds since the epoch
};

struct SurveySession {
  std::string id;
  std::vector<std::string> images;  // served order
  std::size_t cursor = 0;
  std::vector<Answer> answers;
  bool finished = false;

  std::size_t size() const { return images.size(); }
};

// Every slot is real with probability 1/2 and drawn without replacement from
// that label. Should a label run out, the slot falls back to the other one.
// Throws bad_request unless 25 <= n <= 30 and each label has >= ceil(n/2).
SurveySession create_session(const ImagePool& pool, std::size_t n, Rng& rng, std::string session_id = {});

struct ConfusionMatrix {
  std::size_t tp = 0;  // real judged real
  std::size_t fn = 0;  // real judged fake
  std::size_t fp = 0;  // fake judged real
  std::size_t tn = 0;  // fake judged fake

  std::size_t total() const { return tp + fn + fp + tn; }
  double accuracy() const { return total() ? double(tp + tn) / double(total()) : 0.0; }
  void add(Label truth, Label guess);
  bool operator==(const ConfusionMatrix&) const = default;
};

struct ImageStats {
  std::size_t shown = 0, correct = 0;
  double accuracy() const { return shown ? double(correct) / shown : 0.0; }
  bool operator==(const ImageStats&) const = default;
};

struct AnswerEvent {
  double ts = 0;
  std::string session, image;
  Label truth, guess;

  std::string to_json() const;  // {"ts","session","image","truth","guess"}
};

struct Aggregate {
  ConfusionMatrix matrix;
  std::map<std::string, ImageStats> images;
  std::size_t skipped = 0;  // corrupt lines
};

Aggregate aggregate(const std::filesystem::path& log);
Aggregate aggregate_lines(const std::vector<std::string>& lines);

struct FinishReport {
  std::size_t correct = 0, incorrect = 0;
};

struct Served {
  std::string image_id;
  std::filesystem::path path;
  std::size_t position = 0, total = 0;  // position is 1-based
};

struct Ack {
  std::size_t position = 0, total = 0;  // answers recorded so far, of total
};

// Thread-safe session registry over one pool and one append-only answer log.
class SurveyService {
 public:
  SurveyService(ImagePool pool, std::filesystem::path log, std::uint64_t seed);

  // n unset: drawn uniformly from 25..30.
  SurveySession create(std::optional<std::size_t> n = std::nullopt);
  Served next(const std::string& session);
  Ack answer(const std::string& session, const std::string& image_id, Label guess);
  FinishReport finish(const std::string& session);

  ConfusionMatrix confusion() const;  // from the log
  std::map<std::string, ImageStats> live_stats() const;
  const ImagePool& pool() const { return pool_; }
  const std::filesystem::path& log_path() const { return log_; }

 private:
  struct Slot {
    std::mutex mu;
    SurveySession session;
  };
  std::shared_ptr<Slot> slot(const std::string& id) const;
  std::string new_token();

  ImagePool pool_;
  std::filesystem::path log_;
  std::uint64_t seed_;
  mutable std::mutex mu_;  // sessions_, counter_, token rng
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 tokens_;
  mutable std::mutex stats_mu_;
  std::map<std::string, ImageStats> stats_;
  mutable std::mutex log_mu_;
  std::ofstream log_out_;
};

}  // namespace pgf::survey
