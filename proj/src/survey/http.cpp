#include "pgf/survey/http.hpp"

#include <httplib.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace pgf::survey {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_header("Cache-Control", "no-store");
  res.set_content(body.dump(), "application/json");
}

int status_of(SurveyError::Kind k) {
  switch (k) {
    case SurveyError::Kind::not_found: return 404;
    case SurveyError::Kind::conflict: return 409;
    default: return 400;
  }
}

std::string content_type(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" ? "image/png" : "image/jpeg";
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw SurveyError(SurveyError::Kind::bad_request, "request body must be a JSON object");
    return j;
  } catch (const json::exception&) {
    throw SurveyError(SurveyError::Kind::bad_request, "request body is not valid JSON");
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const SurveyError& e) {
      send_json(res, status_of(e.kind), {{"error", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", std::string("bad request field: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

struct SurveyServer::Impl {
  SurveyService& service;
  httplib::Server server;
  explicit Impl(SurveyService& s) : service(s) {}
};

SurveyServer::SurveyServer(SurveyService& service, std::optional<fs::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  }));

  srv.Post("/api/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = body_of(req);
    std::optional<std::size_t> n;
    if (body.contains("n") && !body.at("n").is_null()) {
      if (!body.at("n").is_number_integer() || body.at("n").get<long long>() < 0) {
        throw SurveyError(SurveyError::Kind::bad_request, "n must be a non-negative integer");
      }
      n = body.at("n").get<std::size_t>();
    }
    const auto s = svc.create(n);
    send_json(res, 201, {{"session_id", s.id}, {"total", s.size()}});
  }));

  srv.Get("/api/sessions/:id/next", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto served = svc.next(req.path_params.at("id"));
    std::ifstream in(served.path, std::ios::binary);
    if (!in) throw std::runtime_error("image file unavailable");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    res.status = 200;
    res.set_header("X-Image-Id", served.image_id);
    res.set_header("X-Position", std::to_string(served.position));
    res.set_header("X-Total", std::to_string(served.total));
    res.set_header("Cache-Control", "no-store");
    res.set_content(bytes.str(), content_type(served.path));
  }));

  srv.Post("/api/sessions/:id/answers", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = body_of(req);
    if (!body.contains("image_id") || !body.at("image_id").is_string() || !body.contains("guess") ||
        !body.at("guess").is_string()) {
      throw SurveyError(SurveyError::Kind::bad_request, "body needs string fields image_id and guess");
    }
    const auto ack = svc.answer(req.path_params.at("id"), body.at("image_id").get<std::string>(),
                                parse_label(body.at("guess").get<std::string>()));
    send_json(res, 200, {{"position", ack.position}, {"total", ack.total}});
  }));

  srv.Post("/api/sessions/:id/finish", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto rep = svc.finish(req.path_params.at("id"));
    send_json(res, 200, {{"correct", rep.correct}, {"incorrect", rep.incorrect}});
  }));

  srv.Get("/api/admin/confusion", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    const auto m = svc.confusion();
    send_json(res, 200,
              {{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}, {"total", m.total()}, {"accuracy", m.accuracy()}});
  }));

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

SurveyServer::~SurveyServer() { stop(); }

int SurveyServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool SurveyServer::serve() { return impl_->server.listen_after_bind(); }

void SurveyServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool SurveyServer::running() const { return impl_->server.is_running(); }

}  // namespace pgf::survey
