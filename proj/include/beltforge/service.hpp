#pragma once

#include <memory>
#include <string>

#include "beltforge/stages.hpp"

namespace beltforge {

/// Local HTTP/JSON service for the correction editor:
///   GET  /api/paths                       planned paths in the store
///   GET  /api/paths/{id}                  path artifact
///   POST /api/paths/{id}/corrections      201 stored, 404 unknown id, 422 {"error": reason}
///   GET  /api/scene                       scene and robot
///   GET  /api/status
/// Requests run on httplib's worker pool; the store serialises writes.
class CorrectionService {
 public:
  CorrectionService(ArtifactStore& store, io::Json scene);
  ~CorrectionService();
  CorrectionService(const CorrectionService&) = delete;
  CorrectionService& operator=(const CorrectionService&) = delete;

  /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until stop().
  void listen();
  /// bind() plus listen() on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace beltforge
