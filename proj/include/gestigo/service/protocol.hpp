// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gestigo/condense/geometry.hpp"
#include "gestigo/net/model.hpp"

namespace gestigo::service {

using nlohmann::json;

inline constexpr int kProtocolVersion = 1;

enum class ErrorCode { kVersion, kOrder, kEmptyGesture, kOverflow, kUnavailable };
std::string_view to_string(ErrorCode code);

struct Latency {
  double condense_ms = 0.0;
  double infer_ms = 0.0;
  double total_ms = 0.0;
};

struct PredictionMessage {
  std::int64_t gesture_id = 0;
  std::vector<std::vector<double>> streams;
  std::vector<double> tuner;
  int decided = 0;  // 0-based index into `tuner`
  std::string label;
  Latency latency;
  std::size_t frames = 0;
  std::int64_t duration_ms = 0;
};

json to_json(const PredictionMessage& m);
/// Throws ProtocolError-kind Error on a malformed object.
PredictionMessage prediction_from_json(const json& j);
json error_message(ErrorCode code, std::string_view detail);

/// Loaded model plus its VO order; read-only and shared by every session.
class Engine {
 public:
  /// Throws ConfigError when `vos` differs from the model's VO order.
  Engine(std::shared_ptr<const net::E2eetModel<float>> model, std::vector<condense::VoName> vos);

  /// Condense + infer; total latency here covers only this call.
  PredictionMessage classify(const condense::SkeletonSequence& seq, std::int64_t gesture_id) const;

  const net::ModelConfig& config() const { return model_->config(); }
  const std::vector<condense::VoName>& vos() const { return vos_; }

 private:
  std::shared_ptr<const net::E2eetModel<float>> model_;
  std::vector<condense::VoName> vos_;
};

struct SessionConfig {
  std::size_t max_frames = 1024;
  std::chrono::milliseconds idle_timeout{800};
};

/// A finished capture waiting for classification.
struct Job {
  std::int64_t gesture_id = 0;
  std::optional<condense::SkeletonSequence> sequence;
  std::size_t frames = 0;
  std::int64_t duration_ms = 0;
};

/// Transport-free state machine of one connection.
class Session {
 public:
  using Clock = std::chrono::steady_clock;
  enum class State { kAwaitHello, kIdle, kRecording, kClosed };

  Session(std::uint64_t id, std::shared_ptr<const Engine> engine, SessionConfig config = {});

  struct Reply {
    std::vector<json> messages;
    std::optional<Job> job;
    bool close = false;
  };

  Reply on_message(std::string_view text, Clock::time_point now = Clock::now());
  /// Auto-stop when recording and no frame arrived within the idle timeout.
  Reply on_tick(Clock::time_point now);

  State state() const { return state_; }
  std::size_t buffered_frames() const { return frame_count_; }
  std::uint64_t id() const { return id_; }
  const dataset::SchemaPtr& schema() const { return schema_; }

 private:
  Reply stop();
  Reply fail(ErrorCode code, std::string detail, bool close);

  std::uint64_t id_;
  std::shared_ptr<const Engine> engine_;
  SessionConfig config_;
  State state_ = State::kAwaitHello;
  dataset::SchemaPtr schema_;
  std::vector<condense::Vec3> coords_;
  std::size_t frame_count_ = 0;
  std::int64_t first_t_ = 0;
  std::int64_t last_t_ = 0;
  Clock::time_point last_frame_{};
  std::int64_t next_gesture_ = 1;
};

/// Frames of a sequence as the hello + frame messages a client would send.
json hello_message(const dataset::JointSchema& schema);
json frame_message(std::span<const condense::Vec3> frame, std::int64_t t_ms);

}  // namespace gestigo::service
