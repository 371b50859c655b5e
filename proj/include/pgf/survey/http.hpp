#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "pgf/survey/survey.hpp"

namespace pgf::survey {

// JSON API over a SurveyService:
//   POST /api/sessions {n?}               -> 201 {session_id, total}
//   GET  /api/sessions/{id}/next          -> image bytes, X-Image-Id, X-Position, X-Total
//   POST /api/sessions/{id}/answers {image_id, guess} -> {position, total}
//   POST /api/sessions/{id}/finish        -> {correct, incorrect}
//   GET  /api/admin/confusion             -> {tp, fn, fp, tn, total, accuracy}
//   GET  /api/health                      -> {status}
// Errors are {error} with 400, 404 or 409. Nothing a participant can reach
// carries a label or a per-answer outcome.
class SurveyServer {
 public:
  explicit SurveyServer(SurveyService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~SurveyServer();
  SurveyServer(const SurveyServer&) = delete;
  SurveyServer& operator=(const SurveyServer&) = delete;

  // port 0 picks a free port; returns the bound port or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pgf::survey
