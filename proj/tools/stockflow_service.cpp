// stockflow-service: HTTP front end for what-if runs.
//
//   GET  /api/health     liveness and version
//   GET  /api/defaults   default scenario with slider ranges
//   POST /api/simulate   run a scenario, return series and summary

#include <csignal>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stockflow/service/server.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HTTP service for e-commerce stock-and-flow scenarios"};
  std::string listen = "127.0.0.1:8080";
  stockflow::service::ServerOptions options;
  app.add_option("--listen", listen, "Bind address as host:port")->capture_default_str();
  app.add_flag("--cors", options.cors, "Send permissive cross-origin headers");
  app.add_option("--max-steps", options.service.max_steps, "Largest horizon/dt accepted by /api/simulate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--ui-dir", options.ui_dir, "Static UI bundle to serve under /ui/");
  CLI11_PARSE(app, argc, argv);

  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --listen expects host:port\n";
    return 1;
  }
  const std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in --listen\n";
    return 1;
  }

  auto server = stockflow::service::make_server(options);
  g_server = server.get();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << host << ':' << port << std::endl;
  if (!server->listen(host, port)) {
    std::cerr << "error: cannot listen on " << listen << '\n';
    return 2;
  }
  return 0;
}
