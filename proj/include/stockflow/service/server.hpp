#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "httplib.h"
#include "stockflow/service/api.hpp"

namespace stockflow::service {

struct ServerOptions {
  ServiceConfig service;
  bool cors = false;
  std::string ui_dir;  // served under /ui/ when set
};

namespace detail {

inline void send(httplib::Response& res, const Response& r) {
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  res.status = r.status;
  res.set_content(r.body, "application/json");
}

}  // namespace detail

/// Routes the API onto a fresh httplib server. The caller binds and listens.
inline std::unique_ptr<httplib::Server> make_server(const ServerOptions& options) {
  auto server = std::make_unique<httplib::Server>();
  const ServiceConfig config = options.service;

  server->Get("/api/health", [](const httplib::Request&, httplib::Response& res) { detail::send(res, handle_health()); });
  server->Get("/api/defaults",
              [](const httplib::Request&, httplib::Response& res) { detail::send(res, handle_defaults()); });
  server->Post("/api/simulate", [config](const httplib::Request& req, httplib::Response& res) {
    detail::send(res, handle_simulate(req.body, config));
  });

  if (options.cors) {
    server->set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Expose-Headers", "X-Run-Millis");
    });
    server->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }
  if (!options.ui_dir.empty() && std::filesystem::is_directory(options.ui_dir)) {
    server->set_mount_point("/ui", options.ui_dir);
  }

  server->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(Json{{"errors", Json::array({{{"code", "NOT_FOUND"}, {"message", "no such route"}}})}}.dump(),
                      "application/json");
    }
  });
  server->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(Json{{"errors", Json::array({{{"code", "INTERNAL"}, {"message", what}}})}}.dump(), "application/json");
  });
  return server;
}

}  // namespace stockflow::service
