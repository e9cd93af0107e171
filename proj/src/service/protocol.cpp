// SPDX-License-Identifier: Apache-2.0
#include "gestigo/service/protocol.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/net/predict.hpp"

namespace gestigo::service {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kVersion: return "VERSION";
    case ErrorCode::kOrder: return "ORDER";
    case ErrorCode::kEmptyGesture: return "EMPTY_GESTURE";
    case ErrorCode::kOverflow: return "OVERFLOW";
    case ErrorCode::kUnavailable: return "UNAVAILABLE";
  }
  return "?";
}

json to_json(const PredictionMessage& m) {
  return {{"type", "prediction"},
          {"gesture_id", m.gesture_id},
          {"streams", m.streams},
          {"tuner", m.tuner},
          {"class", m.decided},
          {"label", m.label},
          {"latency_ms", {{"condense", m.latency.condense_ms}, {"infer", m.latency.infer_ms}, {"total", m.latency.total_ms}}},
          {"frames", m.frames},
          {"duration_ms", m.duration_ms}};
}

PredictionMessage prediction_from_json(const json& j) {
  try {
    if (j.at("type") != "prediction") throw ProtocolError("not a prediction message");
    PredictionMessage m;
    m.gesture_id = j.at("gesture_id").get<std::int64_t>();
    m.streams = j.at("streams").get<std::vector<std::vector<double>>>();
    m.tuner = j.at("tuner").get<std::vector<double>>();
    m.decided = j.at("class").get<int>();
    m.label = j.at("label").get<std::string>();
    const auto& l = j.at("latency_ms");
    m.latency = {l.at("condense").get<double>(), l.at("infer").get<double>(), l.at("total").get<double>()};
    m.frames = j.value("frames", std::size_t{0});
    m.duration_ms = j.value("duration_ms", std::int64_t{0});
    return m;
  } catch (const json::exception& e) {
    throw ProtocolError(fmt::format("malformed prediction message: {}", e.what()));
  }
}

json error_message(ErrorCode code, std::string_view detail) {
  return {{"type", "error"}, {"code", to_string(code)}, {"detail", detail}};
}

Engine::Engine(std::shared_ptr<const net::E2eetModel<float>> model, std::vector<condense::VoName> vos)
    : model_(std::move(model)), vos_(std::move(vos)) {
  if (!model_) throw ConfigError("engine: no model");
  const auto& names = model_->config().vo_names;
  bool match = names.size() == vos_.size();
  for (std::size_t i = 0; match && i < names.size(); ++i) match = condense::vo_from_string(names[i]) == vos_[i];
  if (!match) {
    std::vector<std::string_view> got;
    for (auto v : vos_) got.push_back(condense::to_string(v));
    throw ConfigError(fmt::format("VO sequence [{}] does not match the model's [{}]", fmt::join(got, ","),
                                  fmt::join(names, ",")));
  }
}

PredictionMessage Engine::classify(const condense::SkeletonSequence& seq, std::int64_t gesture_id) const {
  using Clock = std::chrono::steady_clock;
  const auto ms = [](Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  const auto t0 = Clock::now();
  const auto masters = net::condense_views(seq, model_->config());
  const auto t1 = Clock::now();
  net::ViewSet views;
  for (const auto& m : masters) views.push_back(&m);
  const auto pred = net::infer_master(*model_, {views}, {}, 1).front();
  const auto t2 = Clock::now();
  PredictionMessage m;
  m.gesture_id = gesture_id;
  m.streams = pred.per_stream_probs;
  m.tuner = pred.tuner_probs;
  m.decided = pred.decided_class();
  const auto& names = model_->config().class_names;
  m.label = static_cast<std::size_t>(m.decided) < names.size() ? names[static_cast<std::size_t>(m.decided)]
                                                                : fmt::format("class {}", m.decided + 1);
  m.latency = {ms(t1 - t0), ms(t2 - t1), ms(t2 - t0)};
  m.frames = seq.frame_count();
  return m;
}

Session::Session(std::uint64_t id, std::shared_ptr<const Engine> engine, SessionConfig config)
    : id_(id), engine_(std::move(engine)), config_(config) {}

Session::Reply Session::fail(ErrorCode code, std::string detail, bool close) {
  Reply r;
  r.messages.push_back(error_message(code, detail));
  r.close = close;
  if (close) state_ = State::kClosed;
  return r;
}

Session::Reply Session::stop() {
  const std::size_t frames = frame_count_;
  std::vector<condense::Vec3> coords = std::move(coords_);
  coords_.clear();
  frame_count_ = 0;
  state_ = State::kIdle;
  if (frames < 2) return fail(ErrorCode::kEmptyGesture, fmt::format("{} frame(s) captured, need at least 2", frames), false);
  if (!engine_) return fail(ErrorCode::kUnavailable, "no model loaded", false);
  Reply r;
  Job job;
  job.gesture_id = next_gesture_++;
  job.frames = frames;
  job.duration_ms = last_t_ - first_t_;
  try {
    job.sequence = condense::SkeletonSequence::create(schema_, std::move(coords), 0);
  } catch (const Error& e) {
    return fail(ErrorCode::kEmptyGesture, e.what(), false);
  }
  r.job = std::move(job);
  return r;
}

Session::Reply Session::on_message(std::string_view text, Clock::time_point now) {
  if (state_ == State::kClosed) return {};
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    return fail(ErrorCode::kOrder, "message is not valid JSON", true);
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return fail(ErrorCode::kOrder, "message has no type", true);
  const std::string type = msg["type"];

  if (type == "hello") {
    if (state_ != State::kAwaitHello) return fail(ErrorCode::kOrder, "hello already received", false);
    if (!msg.contains("version") || !msg["version"].is_number_integer() || msg["version"].get<int>() != kProtocolVersion)
      return fail(ErrorCode::kVersion, fmt::format("supported protocol version is {}", kProtocolVersion), true);
    try {
      const auto& s = msg.at("schema");
      const int joints = s.at("joints").get<int>();
      const auto tips = s.at("fingertips").get<std::vector<int>>();
      schema_ = dataset::schema_for(joints, tips);
    } catch (const json::exception& e) {
      return fail(ErrorCode::kOrder, fmt::format("bad hello schema: {}", e.what()), true);
    } catch (const Error& e) {
      return fail(ErrorCode::kOrder, fmt::format("bad hello schema: {}", e.what()), true);
    }
    state_ = State::kIdle;
    Reply r;
    json ready{{"type", "ready"}, {"version", kProtocolVersion}, {"session", id_}};
    if (engine_) {
      ready["classes"] = engine_->config().class_names;
      ready["vos"] = engine_->config().vo_names;
    }
    r.messages.push_back(std::move(ready));
    return r;
  }
  if (state_ == State::kAwaitHello) return fail(ErrorCode::kOrder, fmt::format("'{}' before hello", type), true);

  if (type == "start") {
    if (state_ == State::kRecording) return fail(ErrorCode::kOrder, "already recording", false);
    state_ = State::kRecording;
    coords_.clear();
    frame_count_ = 0;
    last_frame_ = now;
    return {};
  }
  if (type == "stop") {
    if (state_ != State::kRecording) return fail(ErrorCode::kOrder, "stop while idle", false);
    return stop();
  }
  if (type == "frame") {
    if (state_ != State::kRecording) return fail(ErrorCode::kOrder, "frame while idle", false);
    const auto xyz = msg.find("xyz");
    const auto t = msg.find("t_ms");
    const auto expected = static_cast<std::size_t>(3 * schema_->joint_count);
    if (xyz == msg.end() || !xyz->is_array() || xyz->size() != expected || t == msg.end() || !t->is_number_integer())
      return fail(ErrorCode::kOrder, fmt::format("frame needs integer t_ms and {} xyz values", expected), false);
    std::vector<condense::Vec3> frame;
    frame.reserve(expected / 3);
    for (std::size_t i = 0; i < expected; i += 3) {
      const auto& a = (*xyz)[i];
      const auto& b = (*xyz)[i + 1];
      const auto& c = (*xyz)[i + 2];
      if (!a.is_number() || !b.is_number() || !c.is_number())
        return fail(ErrorCode::kOrder, "frame values must be numbers", false);
      const condense::Vec3 v{a.get<double>(), b.get<double>(), c.get<double>()};
      if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
        return fail(ErrorCode::kOrder, "frame values must be finite", false);
      frame.push_back(v);
    }
    if (frame_count_ >= config_.max_frames) {
      coords_.clear();
      frame_count_ = 0;
      state_ = State::kIdle;
      return fail(ErrorCode::kOverflow, fmt::format("capture exceeded {} frames and was discarded", config_.max_frames), false);
    }
    const auto t_ms = t->get<std::int64_t>();
    if (frame_count_ == 0) first_t_ = t_ms;
    last_t_ = t_ms;
    coords_.insert(coords_.end(), frame.begin(), frame.end());
    ++frame_count_;
    last_frame_ = now;
    return {};
  }
  return fail(ErrorCode::kOrder, fmt::format("unknown message type '{}'", type), true);
}

Session::Reply Session::on_tick(Clock::time_point now) {
  if (state_ != State::kRecording || config_.idle_timeout.count() <= 0) return {};
  if (now - last_frame_ < config_.idle_timeout) return {};
  return stop();
}

json hello_message(const dataset::JointSchema& schema) {
  return {{"type", "hello"},
          {"version", kProtocolVersion},
          {"schema", {{"joints", schema.joint_count}, {"fingertips", schema.fingertips}}}};
}

json frame_message(std::span<const condense::Vec3> frame, std::int64_t t_ms) {
  json xyz = json::array();
  for (const auto& v : frame) {
    xyz.push_back(v.x);
    xyz.push_back(v.y);
    xyz.push_back(v.z);
  }
  return {{"type", "frame"}, {"t_ms", t_ms}, {"xyz", std::move(xyz)}};
}

}  // namespace gestigo::service
