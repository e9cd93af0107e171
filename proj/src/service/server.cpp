// SPDX-License-Identifier: Apache-2.0
#include "gestigo/service/server.hpp"

#include <atomic>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

int worker_threads(int fallback) {
  if (const char* env = std::getenv("GESTIGO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(fallback, 1);
}

struct Server::Impl : std::enable_shared_from_this<Server::Impl> {
  Impl(std::shared_ptr<const Engine> e, ServerConfig c)
      : engine(std::move(e)), config(std::move(c)), acceptor(ioc), signals(ioc, SIGINT, SIGTERM),
        pool(static_cast<std::size_t>(config.workers > 0 ? config.workers
                                                         : worker_threads(static_cast<int>(std::thread::hardware_concurrency())))) {}

  std::shared_ptr<const Engine> engine;
  ServerConfig config;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::signal_set signals;
  asio::thread_pool pool;
  std::thread io_thread;
  std::atomic<std::size_t> sessions{0};
  std::atomic<std::size_t> classified{0};
  std::atomic<std::uint64_t> next_id{1};
  std::mutex stop_mutex;
  bool stopped = false;
  std::mutex live_mutex;
  std::map<std::uint64_t, std::function<void()>> live;  // closers of open connections
  std::uint64_t next_conn = 1;

  void accept();
  void shutdown();
  std::uint64_t track(std::function<void()> closer) {
    std::lock_guard lock(live_mutex);
    live.emplace(next_conn, std::move(closer));
    return next_conn++;
  }
  void untrack(std::uint64_t id) {
    std::lock_guard lock(live_mutex);
    live.erase(id);
  }
};

namespace {

const char* mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<Server::Impl> server)
      : ws_(std::move(socket)),
        server_(std::move(server)),
        session_(server_->next_id++, server_->engine, server_->config.session),
        tick_(ws_.get_executor()) {
    ++server_->sessions;
  }
  ~WsSession() {
    server_->untrack(conn_);
    --server_->sessions;
  }

  void run(http::request<http::string_body> req) {
    conn_ = server_->track([weak = weak_from_this()] {
      if (auto self = weak.lock()) {
        self->closed_ = true;
        self->tick_.cancel();
        beast::error_code ignored;
        beast::get_lowest_layer(self->ws_).socket().close(ignored);
      }
    });
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    if (static_cast<int>(server_->sessions.load()) > server_->config.max_sessions) {
      handle(Session::Reply{{error_message(ErrorCode::kUnavailable, "too many sessions")}, std::nullopt, true});
      return;
    }
    do_read();
    arm_tick();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      closed_ = true;
      tick_.cancel();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    handle(session_.on_message(text));
    if (!closing_) do_read();
  }

  void arm_tick() {
    tick_.expires_after(std::chrono::milliseconds(100));
    tick_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_ || self->closing_) return;
      self->handle(self->session_.on_tick(Session::Clock::now()));
      self->arm_tick();
    });
  }

  void handle(Session::Reply reply) {
    for (const auto& m : reply.messages) send(m.dump());
    if (reply.job) {
      const auto received = Session::Clock::now();
      auto job = std::make_shared<Job>(std::move(*reply.job));
      asio::post(server_->pool, [self = shared_from_this(), job, received] {
        json out;
        try {
          auto msg = self->server_->engine->classify(*job->sequence, job->gesture_id);
          msg.frames = job->frames;
          msg.duration_ms = job->duration_ms;
          msg.latency.total_ms =
              std::chrono::duration<double, std::milli>(Session::Clock::now() - received).count();
          out = to_json(msg);
          ++self->server_->classified;
        } catch (const std::exception& e) {
          out = error_message(ErrorCode::kUnavailable, fmt::format("classification failed: {}", e.what()));
        }
        asio::post(self->ws_.get_executor(), [self, text = out.dump()] { self->send(text); });
      });
    }
    if (reply.close) {
      closing_ = true;
      tick_.cancel();
      if (queue_.empty()) do_close();
    }
  }

  void send(std::string text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->do_write();
      } else if (self->closing_) {
        self->do_close();
      }
    });
  }

  void do_close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Server::Impl> server_;
  Session session_;
  asio::steady_timer tick_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool closing_ = false;
  bool closed_ = false;
  std::uint64_t conn_ = 0;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, std::shared_ptr<Server::Impl> server)
      : stream_(std::move(socket)), server_(std::move(server)) {}
  ~HttpConnection() { server_->untrack(conn_); }

  void run() {
    conn_ = server_->track([weak = weak_from_this()] {
      if (auto self = weak.lock()) {
        beast::error_code ignored;
        self->stream_.socket().close(ignored);
      }
    });
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      server_->untrack(conn_);
      conn_ = 0;
      std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, req_.version());
    res->set(http::field::server, "gestigo");
    res->set(http::field::content_type, "text/plain");
    res->body() = "not found\n";
    std::string target(req_.target());
    if (target == "/") target = "/index.html";
    if (!server_->config.ui_dir.empty() && req_.method() == http::verb::get &&
        target.find("..") == std::string::npos) {
      const auto path = server_->config.ui_dir / target.substr(1);
      std::ifstream f(path, std::ios::binary);
      if (f) {
        std::ostringstream body;
        body << f.rdbuf();
        res->result(http::status::ok);
        res->set(http::field::content_type, mime_type(path));
        res->body() = body.str();
      }
    }
    res->keep_alive(false);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Server::Impl> server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::uint64_t conn_ = 0;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept(asio::make_strand(ioc), [self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpConnection>(std::move(socket), self)->run();
    self->accept();
  });
}

void Server::Impl::shutdown() {
  beast::error_code ignored;
  acceptor.close(ignored);
  signals.cancel(ignored);
  std::vector<std::function<void()>> closers;
  {
    std::lock_guard lock(live_mutex);
    for (auto& [id, c] : live) closers.push_back(c);
  }
  for (auto& c : closers) c();
}

Server::Server(std::shared_ptr<const Engine> engine, ServerConfig config)
    : impl_(std::make_shared<Impl>(std::move(engine), std::move(config))) {}

Server::~Server() { stop(); }

unsigned short Server::start() {
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->config.address, ec);
  if (ec) throw TransportError(fmt::format("bad bind address '{}': {}", impl_->config.address, ec.message()));
  const tcp::endpoint endpoint(address, impl_->config.port);
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(endpoint, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw TransportError(fmt::format("cannot listen on {}:{}: {}", impl_->config.address, impl_->config.port, ec.message()));
  impl_->accept();
  impl_->signals.async_wait([impl = impl_](beast::error_code ec2, int) {
    if (!ec2) impl->shutdown();
  });
  impl_->io_thread = std::thread([impl = impl_] { impl->ioc.run(); });
  return impl_->acceptor.local_endpoint().port();
}

void Server::wait() {
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  stop();
}

void Server::stop() {
  std::lock_guard lock(impl_->stop_mutex);
  if (impl_->stopped) return;
  impl_->stopped = true;
  if (impl_->io_thread.joinable() && impl_->io_thread.get_id() != std::this_thread::get_id()) {
    asio::post(impl_->ioc, [impl = impl_] { impl->shutdown(); });
    impl_->pool.join();
    impl_->io_thread.join();
  } else {
    impl_->shutdown();
    impl_->pool.join();
  }
  impl_->ioc.restart();
  impl_->ioc.poll();
}

std::size_t Server::active_sessions() const { return impl_->sessions.load(); }
std::size_t Server::gestures_classified() const { return impl_->classified.load(); }

namespace {

// Blocking client over async operations so every step honours the timeout.
class ReplayClient {
 public:
  explicit ReplayClient(const ReplayOptions& o) : opt_(o), ws_(ioc_) {}

  void connect() {
    tcp::resolver resolver(ioc_);
    const auto endpoints = resolver.resolve(opt_.host, std::to_string(opt_.port));
    await([&](auto h) { beast::get_lowest_layer(ws_).async_connect(endpoints, h); });
    await([&](auto h) { ws_.async_handshake(opt_.host, "/", h); });
    ws_.text(true);
  }

  void write(const json& j) {
    const std::string text = j.dump();
    await([&](auto h) { ws_.async_write(asio::buffer(text), h); });
  }

  json read() {
    buffer_.consume(buffer_.size());
    await([&](auto h) { ws_.async_read(buffer_, h); });
    json j = json::parse(beast::buffers_to_string(buffer_.data()), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ProtocolError("server sent a non-JSON message");
    if (j.value("type", "") == "error")
      throw ProtocolError(fmt::format("server error {}: {}", j.value("code", "?"), j.value("detail", "")));
    return j;
  }

  void close() {
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  template <class Start>
  void await(Start start) {
    bool done = false;
    beast::error_code result;
    start([&](beast::error_code ec, auto&&...) {
      result = ec;
      done = true;
    });
    ioc_.restart();
    ioc_.run_for(opt_.timeout);
    if (!done) {
      close();
      ioc_.restart();
      ioc_.run();
      throw TransportError(fmt::format("{}:{}: timed out after {} ms", opt_.host, opt_.port, opt_.timeout.count()));
    }
    if (result)
      throw TransportError(fmt::format("{}:{}: {}", opt_.host, opt_.port, result.message()));
  }

  ReplayOptions opt_;
  asio::io_context ioc_;
  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
};

}  // namespace

ReplayResult replay(const condense::SkeletonSequence& seq, const ReplayOptions& options) {
  using Clock = std::chrono::steady_clock;
  ReplayResult result;
  ReplayClient client(options);
  client.connect();
  client.write(hello_message(seq.schema()));
  if (client.read().value("type", "") != "ready") throw ProtocolError("expected a ready message");
  client.write({{"type", "start"}});
  const auto t0 = Clock::now();
  const double period_ms = 1000.0 / (options.fps > 0 ? options.fps : 15.0);
  for (std::size_t i = 0; i < seq.frame_count(); ++i) {
    if (options.fps > 0)
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double, std::milli>(period_ms * static_cast<double>(i))));
    client.write(frame_message(seq.frame(i), static_cast<std::int64_t>(std::llround(period_ms * static_cast<double>(i)))));
  }
  const auto t1 = Clock::now();
  client.write({{"type", "stop"}});
  json reply = client.read();
  while (reply.value("type", "") != "prediction") reply = client.read();
  const auto t2 = Clock::now();
  result.prediction = prediction_from_json(reply);
  result.streaming_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  result.response_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  client.close();
  return result;
}

}  // namespace gestigo::service
