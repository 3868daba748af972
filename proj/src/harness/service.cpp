#include "beltforge/service.hpp"

#include <atomic>
#include <thread>

#include "httplib.h"

namespace beltforge {

namespace {

void reply(httplib::Response& res, int status, const io::Json& body) {
  res.status = status;
  res.set_content(io::dump(body), "application/json");
}

}  // namespace

struct CorrectionService::Impl {
  ArtifactStore& store;
  io::Json scene;
  httplib::Server server;
  std::thread thread;
  std::atomic<long> accepted{0};

  Impl(ArtifactStore& s, io::Json sc) : store(s), scene(std::move(sc)) { routes(); }

  void routes() {
    server.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"schema", io::kSchema},
                       {"status", "ok"},
                       {"paths", store.list(kPlannedPath).size()},
                       {"corrections_accepted", accepted.load()}});
    });
    server.Get("/api/scene", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, scene);
    });
    server.Get("/api/paths", [this](const httplib::Request&, httplib::Response& res) {
      io::Json items = io::Json::array();
      for (const auto& info : store.list(kPlannedPath)) {
        const io::Json j = store.get(info.id);
        items.push_back({{"id", info.id},
                         {"sha256", info.sha256},
                         {"waypoints", j.at("waypoints").size()},
                         {"dt", j.at("dt")}});
      }
      reply(res, 200, {{"schema", io::kSchema}, {"paths", items}});
    });
    server.Get(R"(/api/paths/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!store.contains(id)) return reply(res, 404, {{"error", "unknown_id"}, {"id", id}});
      reply(res, 200, store.get(id));
    });
    server.Post(R"(/api/paths/([0-9a-f]+)/corrections)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  if (!store.contains(id)) return reply(res, 404, {{"error", "unknown_id"}, {"id", id}});
                  io::Json body;
                  try {
                    body = io::Json::parse(req.body);
                  } catch (const std::exception& e) {
                    return reply(res, 422, {{"error", "invalid_body"}, {"message", e.what()}});
                  }
                  try {
                    const ArtifactInfo info = ingest_correction(store, id, body);
                    ++accepted;
                    reply(res, 201, {{"id", info.id}, {"sha256", info.sha256}, {"base_id", id}});
                  } catch (const CorrectionRejected& e) {
                    reply(res, 422, {{"error", e.reason()}, {"message", e.what()}});
                  } catch (const Error& e) {
                    reply(res, 422, {{"error", "invalid_body"}, {"message", e.what()}});
                  }
                });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      reply(res, 500, {{"error", "internal"}, {"message", msg}});
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, res.status, {{"error", res.status == 404 ? "not_found" : "http_error"}});
    });
  }
};

CorrectionService::CorrectionService(ArtifactStore& store, io::Json scene)
    : impl_(std::make_unique<Impl>(store, std::move(scene))) {}

CorrectionService::~CorrectionService() { stop(); }

int CorrectionService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void CorrectionService::listen() { impl_->server.listen_after_bind(); }

int CorrectionService::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void CorrectionService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace beltforge
