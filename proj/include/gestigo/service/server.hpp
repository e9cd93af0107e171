// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "gestigo/service/protocol.hpp"

namespace gestigo::service {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  int max_sessions = 16;
  int workers = 0;             // 0: GESTIGO_THREADS, else hardware concurrency
  SessionConfig session;
  std::filesystem::path ui_dir;  // static files for plain HTTP requests; empty disables
};

/// Worker count from GESTIGO_THREADS, else `fallback` (at least 1).
int worker_threads(int fallback);

/// WebSocket gesture service. One strand per connection; classification runs
/// on a worker pool.
class Server {
 public:
  /// `engine` may be null: sessions then answer stop with UNAVAILABLE.
  Server(std::shared_ptr<const Engine> engine, ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds, listens and starts the I/O thread. Returns the bound port.
  /// Throws TransportError when binding fails.
  unsigned short start();
  /// Blocks until stop() or SIGINT/SIGTERM.
  void wait();
  void stop();

  std::size_t active_sessions() const;
  std::size_t gestures_classified() const;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

struct ReplayOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  /// Streaming rate; 0 sends frames back to back (timestamps still step at 15 fps).
  double fps = 15.0;
  std::chrono::milliseconds timeout{30000};
};

struct ReplayResult {
  PredictionMessage prediction;
  double streaming_ms = 0.0;  // first frame sent to stop sent
  double response_ms = 0.0;   // stop sent to prediction received
};

/// Streams `seq` to a running service and returns its prediction. Throws
/// TransportError on connection failures and ProtocolError on error replies.
ReplayResult replay(const condense::SkeletonSequence& seq, const ReplayOptions& options);

}  // namespace gestigo::service
