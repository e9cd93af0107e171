#include <chrono>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "gestigo/error.hpp"
#include "gestigo/net/predict.hpp"
#include "gestigo/service/protocol.hpp"
#include "gestigo/service/server.hpp"
#include "gestigo/synth/generator.hpp"

using namespace gestigo;
using namespace gestigo::service;
using condense::VoName;
namespace beast = boost::beast;
namespace asio = boost::asio;
using Clock = std::chrono::steady_clock;

namespace {

const std::vector<VoName> kVos{VoName::kCustom, VoName::kTopDown, VoName::kFrontAway};

std::shared_ptr<net::E2eetModel<float>> small_model() {
  net::ModelConfig c;
  c.class_count = 14;
  c.stream_count = 3;
  c.encoder_widths = {4, 8};
  c.tuner_widths = {2};
  c.head_hidden = 16;
  c.tuner_hidden = 8;
  c.stage_sizes = {32};
  c.pseudo_size = 16;
  c.master_px = 64;
  c.dataset = "DHG1428_14G";
  c.vo_names = {"custom", "top-down", "front-away"};
  c.class_names = dataset::class_names(dataset::DatasetId::kDhg1428_14G);
  return std::make_shared<net::E2eetModel<float>>(c);
}

std::shared_ptr<const Engine> small_engine() {
  static const auto engine = std::make_shared<const Engine>(small_model(), kVos);
  return engine;
}

std::string dump(const json& j) { return j.dump(); }

std::string code_of(const Session::Reply& r) {
  REQUIRE(r.messages.size() == 1);
  return r.messages[0].value("code", std::string{});
}

Session ready_session(SessionConfig cfg = {}, std::shared_ptr<const Engine> engine = small_engine()) {
  Session s(1, std::move(engine), cfg);
  const auto r = s.on_message(dump(hello_message(*dataset::dhg22_schema())));
  REQUIRE(r.messages.size() == 1);
  REQUIRE(r.messages[0]["type"] == "ready");
  return s;
}

// Blocking WebSocket client for exercising the server directly.
class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    asio::ip::tcp::resolver resolver(ioc_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
    ws_.text(true);
  }
  void send(const json& j) { ws_.write(asio::buffer(j.dump())); }
  json recv() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  bool closed_by_peer() {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws_.read(buf, ec);
    return ec == beast::websocket::error::closed || ec == asio::error::eof ||
           ec == asio::error::connection_reset;
  }

 private:
  asio::io_context ioc_;
  beast::websocket::stream<asio::ip::tcp::socket> ws_;
};

struct RunningServer {
  Server server;
  unsigned short port;
  RunningServer(std::shared_ptr<const Engine> engine, ServerConfig cfg)
      : server(std::move(engine), [&] {
          cfg.port = 0;
          return cfg;
        }()),
        port(server.start()) {}
  ~RunningServer() { server.stop(); }
};

}  // namespace

TEST_CASE("session handshake and ordering errors") {
  {
    Session s(1, small_engine());
    const auto r = s.on_message(R"({"type":"start"})");
    CHECK(code_of(r) == "ORDER");
    CHECK(r.close);
    CHECK(s.state() == Session::State::kClosed);
    CHECK(s.on_message(R"({"type":"start"})").messages.empty());
  }
  {
    Session s(1, small_engine());
    auto hello = hello_message(*dataset::dhg22_schema());
    hello["version"] = 2;
    const auto r = s.on_message(dump(hello));
    CHECK(code_of(r) == "VERSION");
    CHECK(r.close);
  }
  {
    Session s(1, small_engine());
    CHECK(code_of(s.on_message("{not json")) == "ORDER");
  }
  {
    Session s(1, small_engine());
    CHECK(code_of(s.on_message(R"({"type":"hello","version":1,"schema":{"joints":"x"}})")) == "ORDER");
  }
  auto s = ready_session();
  CHECK(s.state() == Session::State::kIdle);
  const auto again = s.on_message(dump(hello_message(*dataset::dhg22_schema())));
  CHECK(code_of(again) == "ORDER");
  CHECK_FALSE(again.close);
  CHECK(code_of(s.on_message(R"({"type":"stop"})")) == "ORDER");
  const std::vector<condense::Vec3> frame(22);
  CHECK(code_of(s.on_message(dump(frame_message(frame, 0)))) == "ORDER");
  CHECK(s.on_message(R"({"type":"start"})").messages.empty());
  CHECK(code_of(s.on_message(R"({"type":"start"})")) == "ORDER");
  const std::vector<condense::Vec3> short_frame(21);
  CHECK(code_of(s.on_message(dump(frame_message(short_frame, 0)))) == "ORDER");
  CHECK(code_of(s.on_message(R"({"type":"frame","t_ms":0,"xyz":[)" + std::string(65, '1') + "]}")) == "ORDER");
  CHECK(s.state() == Session::State::kRecording);
  const auto unknown = s.on_message(R"({"type":"dance"})");
  CHECK(code_of(unknown) == "ORDER");
  CHECK(unknown.close);
}

TEST_CASE("session capture outcomes") {
  const auto seq = synth::dhg_gesture(3, 1, 1, 1, 17, 3);
  SUBCASE("too few frames") {
    auto s = ready_session();
    s.on_message(R"({"type":"start"})");
    s.on_message(dump(frame_message(seq.frame(0), 0)));
    const auto r = s.on_message(R"({"type":"stop"})");
    CHECK(code_of(r) == "EMPTY_GESTURE");
    CHECK_FALSE(r.close);
    CHECK(s.state() == Session::State::kIdle);
  }
  SUBCASE("overflow discards the capture") {
    SessionConfig cfg;
    cfg.max_frames = 5;
    auto s = ready_session(cfg);
    s.on_message(R"({"type":"start"})");
    for (int i = 0; i < 5; ++i) CHECK(s.on_message(dump(frame_message(seq.frame(static_cast<std::size_t>(i)), i))).messages.empty());
    const auto r = s.on_message(dump(frame_message(seq.frame(5), 5)));
    CHECK(code_of(r) == "OVERFLOW");
    CHECK(s.state() == Session::State::kIdle);
    CHECK(s.buffered_frames() == 0);
  }
  SUBCASE("no model") {
    auto s = ready_session({}, nullptr);
    s.on_message(R"({"type":"start"})");
    for (int i = 0; i < 3; ++i) s.on_message(dump(frame_message(seq.frame(static_cast<std::size_t>(i)), i)));
    CHECK(code_of(s.on_message(R"({"type":"stop"})")) == "UNAVAILABLE");
  }
  SUBCASE("stop produces a job with the captured frames") {
    auto s = ready_session();
    s.on_message(R"({"type":"start"})");
    for (std::size_t i = 0; i < seq.frame_count(); ++i)
      s.on_message(dump(frame_message(seq.frame(i), static_cast<std::int64_t>(10 * i))));
    const auto r = s.on_message(R"({"type":"stop"})");
    REQUIRE(r.job.has_value());
    CHECK(r.job->frames == seq.frame_count());
    CHECK(r.job->duration_ms == static_cast<std::int64_t>(10 * (seq.frame_count() - 1)));
    const auto a = r.job->sequence->coords();
    const auto b = seq.coords();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(r.job->gesture_id == 1);
  }
  SUBCASE("idle timeout stops the capture") {
    SessionConfig cfg;
    cfg.idle_timeout = std::chrono::milliseconds(800);
    auto s = ready_session(cfg);
    const auto t0 = Clock::now();
    s.on_message(R"({"type":"start"})", t0);
    for (int i = 0; i < 4; ++i) s.on_message(dump(frame_message(seq.frame(static_cast<std::size_t>(i)), i)), t0);
    CHECK_FALSE(s.on_tick(t0 + std::chrono::milliseconds(700)).job.has_value());
    const auto r = s.on_tick(t0 + std::chrono::milliseconds(801));
    REQUIRE(r.job.has_value());
    CHECK(r.job->frames == 4);
    CHECK(s.state() == Session::State::kIdle);
  }
}

TEST_CASE("prediction messages round trip through JSON") {
  PredictionMessage m;
  m.gesture_id = 7;
  m.streams = {{0.1, 0.9}, {0.3333333333333333, 0.6666666666666667}};
  m.tuner = {0.123456789012345678, 1.0 - 0.123456789012345678};
  m.decided = 1;
  m.label = "Swipe Right";
  m.latency = {1.5, 2.25, 3.75};
  m.frames = 40;
  m.duration_ms = 2600;
  const auto back = prediction_from_json(json::parse(to_json(m).dump()));
  CHECK(back.streams == m.streams);
  CHECK(back.tuner == m.tuner);
  CHECK(back.decided == 1);
  CHECK(back.label == m.label);
  CHECK(back.frames == 40);
  CHECK(back.duration_ms == 2600);
  CHECK(back.latency.total_ms == 3.75);
  CHECK_THROWS_AS(prediction_from_json(json{{"type", "prediction"}}), ProtocolError);
  CHECK(error_message(ErrorCode::kOverflow, "x")["code"] == "OVERFLOW");
}

TEST_CASE("engine checks the VO order") {
  CHECK_THROWS_AS(Engine(small_model(), {VoName::kTopDown, VoName::kCustom, VoName::kFrontAway}), ConfigError);
  CHECK_THROWS_AS(Engine(nullptr, kVos), ConfigError);
}

TEST_CASE("served predictions equal offline predictions") {
  const auto model = small_model();
  auto engine = std::make_shared<const Engine>(model, kVos);
  RunningServer rs(engine, {});
  for (int g = 1; g <= 4; ++g) {
    const auto seq = synth::dhg_gesture(g, 1, 2, 1, 17, g);
    const auto offline = net::predict(seq, kVos, *model);
    ReplayOptions opt;
    opt.port = rs.port;
    opt.fps = 0;
    const auto online = replay(seq, opt);
    CHECK(online.prediction.decided == offline.decided_class());
    REQUIRE(online.prediction.tuner.size() == offline.tuner_probs.size());
    for (std::size_t k = 0; k < offline.tuner_probs.size(); ++k)
      CHECK(std::abs(online.prediction.tuner[k] - offline.tuner_probs[k]) <= 1e-6);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 14; ++k)
        CHECK(std::abs(online.prediction.streams[j][k] - offline.per_stream_probs[j][k]) <= 1e-6);
    CHECK(online.prediction.frames == seq.frame_count());
    CHECK(online.prediction.latency.total_ms < 500.0);
    CHECK(online.prediction.label == model->config().class_names[static_cast<std::size_t>(offline.decided_class())]);
  }
  CHECK(rs.server.gestures_classified() == 4);
}

TEST_CASE("replay paces frames at the requested rate") {
  RunningServer rs(small_engine(), {});
  const auto full = synth::dhg_gesture(2, 2, 1, 1, 17, 2);
  std::vector<condense::Vec3> coords;
  for (std::size_t i = 0; i < 30; ++i) coords.insert(coords.end(), full.frame(i).begin(), full.frame(i).end());
  const auto seq = full.with_coords(std::move(coords));
  ReplayOptions opt;
  opt.port = rs.port;
  opt.fps = 15.0;
  const auto r = replay(seq, opt);
  CHECK(r.streaming_ms == doctest::Approx(2000.0).epsilon(0.1));
  CHECK(r.prediction.duration_ms == std::llround(29 * 1000.0 / 15.0));
}

TEST_CASE("sessions are isolated") {
  const auto model = small_model();
  RunningServer rs(std::make_shared<const Engine>(model, kVos), {});
  const auto a = synth::dhg_gesture(5, 1, 3, 1, 17, 5);
  const auto b = synth::dhg_gesture(11, 2, 4, 2, 17, 11);
  Client ca(rs.port), cb(rs.port);
  ca.send(hello_message(a.schema()));
  cb.send(hello_message(b.schema()));
  const auto ra = ca.recv();
  const auto rb = cb.recv();
  CHECK(ra["type"] == "ready");
  CHECK(rb["type"] == "ready");
  CHECK(ra["session"] != rb["session"]);
  ca.send({{"type", "start"}});
  cb.send({{"type", "start"}});
  const std::size_t n = std::max(a.frame_count(), b.frame_count());
  for (std::size_t i = 0; i < n; ++i) {
    if (i < a.frame_count()) ca.send(frame_message(a.frame(i), static_cast<std::int64_t>(i)));
    if (i < b.frame_count()) cb.send(frame_message(b.frame(i), static_cast<std::int64_t>(i)));
  }
  cb.send({{"type", "stop"}});
  ca.send({{"type", "stop"}});
  const auto pa = prediction_from_json(ca.recv());
  const auto pb = prediction_from_json(cb.recv());
  CHECK(pa.tuner == net::predict(a, kVos, *model).tuner_probs);
  CHECK(pa.frames == a.frame_count());
  CHECK(pb.frames == b.frame_count());
  CHECK(pb.tuner == net::predict(b, kVos, *model).tuner_probs);
}

TEST_CASE("server limits sessions and reports errors over the wire") {
  ServerConfig cfg;
  cfg.max_sessions = 1;
  RunningServer rs(small_engine(), cfg);
  Client first(rs.port);
  first.send(hello_message(*dataset::dhg22_schema()));
  CHECK(first.recv()["type"] == "ready");
  Client second(rs.port);
  const auto busy = second.recv();
  CHECK(busy["type"] == "error");
  CHECK(busy["code"] == "UNAVAILABLE");
  CHECK(second.closed_by_peer());

  first.send({{"type", "stop"}});
  const auto err = first.recv();
  CHECK(err["code"] == "ORDER");
  first.send({{"type", "bogus"}});
  CHECK(first.recv()["code"] == "ORDER");
  CHECK(first.closed_by_peer());
}

TEST_CASE("replay against a closed port is a transport error") {
  unsigned short port;
  {
    RunningServer rs(small_engine(), {});
    port = rs.port;
  }
  ReplayOptions opt;
  opt.port = port;
  opt.fps = 0;
  opt.timeout = std::chrono::milliseconds(2000);
  CHECK_THROWS_AS(replay(synth::dhg_gesture(1, 1, 1, 1, 17, 1), opt), TransportError);
}

TEST_CASE("engine without a model answers UNAVAILABLE") {
  RunningServer rs(nullptr, {});
  ReplayOptions opt;
  opt.port = rs.port;
  opt.fps = 0;
  CHECK_THROWS_AS(replay(synth::dhg_gesture(1, 1, 1, 1, 17, 1), opt), ProtocolError);
}
