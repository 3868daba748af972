#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "beltforge/io.hpp"

namespace beltforge {

std::string sha256_hex(const std::string& data);

/// Stage seed from the master seed and a fixed label: the first 8 bytes of
/// SHA-256("<master>/<label>"), big-endian. Adding a stage never shifts the
/// seeds of the others.
std::uint64_t derive_seed(std::uint64_t master, const std::string& label);

struct ArtifactInfo {
  std::string id;
  std::string kind;
  std::string sha256;
  std::filesystem::path file;
};

/// Content-addressed JSON artifacts in one directory. An artifact is stored as
/// <id>.json where id is the first 16 hex digits of the SHA-256 of its
/// canonical text, so writing the same content twice is a no-op. Writes are
/// serialised; files are replaced atomically and never modified, so reads
/// take no lock.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Adds "schema" and "kind" to `body` and stores it.
  ArtifactInfo put(const std::string& kind, io::Json body);

  bool contains(const std::string& id) const;
  /// Throws StageDependencyError for unknown ids or an artifact of another
  /// kind, FormatError for a schema mismatch.
  io::Json get(const std::string& id) const;
  io::Json get(const std::string& id, const std::string& kind) const;
  ArtifactInfo info(const std::string& id) const;

  /// Sorted by id; empty `kind` lists everything.
  std::vector<ArtifactInfo> list(const std::string& kind = {}) const;

  /// Writes a non-artifact file (reports, manifests) under the root.
  std::filesystem::path write_text(const std::string& name, const std::string& text);

 private:
  std::filesystem::path path_for(const std::string& id) const;

  std::filesystem::path root_;
  std::mutex write_mutex_;
};

}  // namespace beltforge
