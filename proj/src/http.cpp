#include "nudge/http.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <condition_variable>
#include <deque>
#include <iostream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "net.hpp"

namespace nudge::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Json = nlohmann::json;

namespace {

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  while (!q.empty()) {
    const auto amp = q.find('&');
    const auto part = q.substr(0, amp);
    const auto eq = part.find('=');
    if (!part.empty()) {
      out[url_decode(part.substr(0, eq))] =
          eq == std::string_view::npos ? "" : url_decode(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    q.remove_prefix(amp + 1);
  }
  return out;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto slash = path.find('/');
    parts.emplace_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash);
  }
  return parts;
}

HttpResponse error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::int64_t parse_ms(const std::string& field, const std::string& v) {
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw RangeError(field + " must be an integer");
  return out;
}

HttpResponse dispatch(Service& svc, const std::string& method, const std::vector<std::string>& path,
                      const std::map<std::string, std::string>& query, const std::string& body) {
  const auto n = path.size();
  if (n == 1 && path[0] == "status") {
    if (method != "GET") return error(405, "method not allowed");
    return {200, to_json(svc.status())};
  }
  if (n == 1 && path[0] == "config") {
    if (method == "GET") return {200, to_json(svc.config())};
    if (method != "PUT") return error(405, "method not allowed");
    const Json j = Json::parse(body);
    ServiceConfig next = merge_config(j, svc.config());
    svc.set_config(next);
    return {200, to_json(svc.config())};
  }
  if (n == 2 && path[0] == "session" && path[1] == "start") {
    if (method != "POST") return error(405, "method not allowed");
    return {201, {{"session_id", svc.start_session()}}};
  }
  if (n == 3 && path[0] == "session" && path[2] == "stop") {
    if (method != "POST") return error(405, "method not allowed");
    return {200, {{"session_id", path[1]}, {"summary", svc.stop_session(path[1])}}};
  }
  if (n == 1 && path[0] == "sessions") {
    if (method != "GET") return error(405, "method not allowed");
    Json out = Json::array();
    for (const auto& s : svc.sessions()) out.push_back(store::to_json(s));
    return {200, out};
  }
  if (n == 1 && path[0] == "events") {
    if (method != "GET") return error(405, "method not allowed");
    store::EventQuery q;
    if (auto it = query.find("session_id"); it != query.end()) q.session_id = it->second;
    if (q.session_id.empty()) return error(400, "session_id is required");
    if (auto it = query.find("kind"); it != query.end() && !it->second.empty()) {
      q.kind = store::parse_event_kind(it->second);
      if (!q.kind) return error(400, "unknown event kind '" + it->second + "'");
    }
    if (auto it = query.find("from_ms"); it != query.end()) q.from_ms = parse_ms("from_ms", it->second);
    if (auto it = query.find("to_ms"); it != query.end()) q.to_ms = parse_ms("to_ms", it->second);
    Json out = Json::array();
    for (const auto& e : svc.events(q)) out.push_back(store::to_json(e));
    return {200, out};
  }
  return error(404, "no route");
}

}  // namespace

HttpResponse route_request(Service& svc, const std::string& method, const std::string& target,
                           const std::string& body) {
  const auto qpos = target.find('?');
  const auto path = split_path(std::string_view(target).substr(0, qpos));
  const auto query =
      qpos == std::string::npos ? std::map<std::string, std::string>{} : parse_query(target.substr(qpos + 1));
  try {
    return dispatch(svc, method, path, query, body);
  } catch (const ConfigError& e) {
    Json errs = Json::array();
    for (const auto& f : e.errors()) errs.push_back({{"field", f.field}, {"message", f.message}});
    return {422, {{"error", "invalid configuration"}, {"errors", errs}}};
  } catch (const Json::exception& e) {
    return error(400, std::string("bad request body: ") + e.what());
  } catch (const RangeError& e) {
    return error(400, e.what());
  } catch (const ContractViolation& e) {
    return error(409, e.what());
  } catch (const NotFound& e) {
    return error(404, e.what());
  } catch (const StartupError& e) {
    return error(503, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

HttpServer::HttpServer(Service& svc, std::string listen_addr)
    : svc_(svc), listen_addr_(std::move(listen_addr)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
  listen_fd_ = net::listen_tcp(net::parse_host_port(listen_addr_), port_);
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
  return port_;
}

void HttpServer::stop() {
  if (!acceptor_.joinable()) return;
  stopping_ = true;
  acceptor_.join();
  net::close_fd(listen_fd_);
  std::map<std::uint64_t, Connection> conns;
  {
    std::lock_guard lk(conn_mu_);
    for (auto& [_, c] : connections_) {
      if (c.fd >= 0) ::shutdown(c.fd, SHUT_RDWR);
    }
    conns.swap(connections_);
    finished_.clear();
  }
  for (auto& [_, c] : conns) c.thread.join();
}

void HttpServer::accept_loop() {
  while (!stopping_) {
    {
      std::lock_guard lk(conn_mu_);
      for (const auto id : finished_) {
        auto it = connections_.find(id);
        if (it == connections_.end()) continue;
        it->second.thread.join();
        connections_.erase(it);
      }
      finished_.clear();
    }
    if (!net::wait_readable(listen_fd_, 100)) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lk(conn_mu_);
    const auto id = next_conn_++;
    auto& c = connections_[id];
    c.fd = fd;
    c.thread = std::thread([this, id, fd] { serve(id, fd); });
  }
}

namespace {

void run_stream(Service& svc, tcp::socket& sock, const http::request<http::string_body>& req,
                const std::atomic<bool>& stopping) {
  websocket::stream<tcp::socket&> ws(sock);
  ws.text(true);
  ws.accept(req);

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  constexpr std::size_t kMaxBacklog = 1024;
  const auto push = [&](const Json& msg) {
    {
      std::lock_guard lk(mu);
      if (outbox.size() == kMaxBacklog) outbox.pop_front();
      outbox.push_back(msg.dump());
    }
    cv.notify_one();
  };
  const auto handle = svc.subscribe(push);

  beast::error_code ec;
  beast::flat_buffer inbound;
  while (!stopping && !ec) {
    std::deque<std::string> batch;
    {
      std::unique_lock lk(mu);
      cv.wait_for(lk, std::chrono::milliseconds(250), [&] { return !outbox.empty(); });
      batch.swap(outbox);
    }
    for (const auto& m : batch) {
      ws.write(asio::buffer(m), ec);
      if (ec) break;
    }
    // Inbound traffic is only control frames (close, ping); read it in this
    // thread so reads and writes never overlap.
    pollfd p{sock.native_handle(), POLLIN, 0};
    if (!ec && ::poll(&p, 1, 0) > 0) {
      ws.read(inbound, ec);
      inbound.clear();
    }
  }
  svc.unsubscribe(handle);
}

}  // namespace

void HttpServer::serve(std::uint64_t id, int fd) {
  asio::io_context ioc;
  tcp::socket sock(ioc);
  try {
    sock.assign(tcp::v4(), fd);
    beast::flat_buffer buf;
    while (!stopping_) {
      http::request<http::string_body> req;
      beast::error_code ec;
      http::read(sock, buf, req, ec);
      if (ec) break;
      const std::string target(req.target());
      if (websocket::is_upgrade(req)) {
        if (target == "/stream") run_stream(svc_, sock, req, stopping_);
        break;
      }
      const auto r = route_request(svc_, std::string(req.method_string()), target, req.body());
      http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
      res.set(http::field::server, "nudge");
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req.keep_alive());
      res.body() = r.body.dump();
      res.prepare_payload();
      http::write(sock, res, ec);
      if (ec || !req.keep_alive()) break;
    }
  } catch (const std::exception& e) {
    std::cerr << "http connection error: " << e.what() << "\n";
  }
  // Closed under the lock so stop() never shuts down a reused descriptor.
  std::lock_guard lk(conn_mu_);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  sock.close(ec);
  if (auto it = connections_.find(id); it != connections_.end()) {
    it->second.fd = -1;
    finished_.push_back(id);
  }
}

}  // namespace nudge::service
