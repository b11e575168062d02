#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nudge/service.hpp"

namespace nudge::service {

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// Routes one REST request without any socket involved:
//   GET  /status
//   GET  /config              PUT /config
//   POST /session/start       POST /session/{id}/stop
//   GET  /sessions
//   GET  /events?session_id=&kind=&from_ms=&to_ms=
HttpResponse route_request(Service& svc, const std::string& method, const std::string& target,
                           const std::string& body);

// Serves the REST routes plus the WebSocket feed at /stream. One thread per
// connection; intended for a single local dashboard.
class HttpServer {
 public:
  HttpServer(Service& svc, std::string listen_addr);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and starts accepting; returns the bound port.
  int start();
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Connection {
    int fd = -1;
    std::thread thread;
  };

  void accept_loop();
  void serve(std::uint64_t id, int fd);

  Service& svc_;
  std::string listen_addr_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::uint64_t next_conn_ = 1;
  std::map<std::uint64_t, Connection> connections_;
  std::vector<std::uint64_t> finished_;
};

}  // namespace nudge::service
