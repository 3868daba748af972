#include "beltforge/store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace beltforge {

namespace {

constexpr std::size_t kIdLength = 16;

bool is_artifact_name(const std::filesystem::path& p) {
  const auto stem = p.stem().string();
  return p.extension() == ".json" && stem.size() == kIdLength &&
         std::all_of(stem.begin(), stem.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) && !std::isupper(static_cast<unsigned char>(c)); });
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::kGeneric, "sha256 failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& label) {
  const std::string hex = sha256_hex(std::to_string(master) + "/" + label);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path ArtifactStore::path_for(const std::string& id) const {
  return root_ / (id + ".json");
}

ArtifactInfo ArtifactStore::put(const std::string& kind, io::Json body) {
  if (!body.is_object()) throw FormatError("artifact body must be an object");
  body["schema"] = io::kSchema;
  body["kind"] = kind;
  const std::string text = io::dump(body);
  const std::string sha = sha256_hex(text);
  ArtifactInfo info{sha.substr(0, kIdLength), kind, sha, {}};
  info.file = path_for(info.id);
  std::lock_guard lock(write_mutex_);
  if (!std::filesystem::exists(info.file)) io::write_file(info.file, text);
  return info;
}

bool ArtifactStore::contains(const std::string& id) const {
  return id.size() == kIdLength && is_artifact_name(path_for(id)) && std::filesystem::exists(path_for(id));
}

io::Json ArtifactStore::get(const std::string& id) const {
  if (!contains(id)) throw StageDependencyError("unknown artifact '" + id + "'");
  io::Json j = io::parse(slurp(path_for(id)));
  io::check_schema(j);
  return j;
}

io::Json ArtifactStore::get(const std::string& id, const std::string& kind) const {
  io::Json j = get(id);
  if (j.value("kind", "") != kind)
    throw StageDependencyError("artifact '" + id + "' is a " + j.value("kind", "?") + ", expected " + kind);
  return j;
}

ArtifactInfo ArtifactStore::info(const std::string& id) const {
  if (!contains(id)) throw StageDependencyError("unknown artifact '" + id + "'");
  const std::string text = slurp(path_for(id));
  return {id, io::parse(text).value("kind", ""), sha256_hex(text), path_for(id)};
}

std::vector<ArtifactInfo> ArtifactStore::list(const std::string& kind) const {
  std::vector<ArtifactInfo> out;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (!entry.is_regular_file() || !is_artifact_name(entry.path())) continue;
    const std::string text = slurp(entry.path());
    io::Json j;
    try {
      j = io::parse(text);
    } catch (const FormatError&) {
      continue;
    }
    const std::string k = j.value("kind", "");
    if (!kind.empty() && k != kind) continue;
    out.push_back({entry.path().stem().string(), k, sha256_hex(text), entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::filesystem::path ArtifactStore::write_text(const std::string& name, const std::string& text) {
  const auto p = root_ / name;
  std::lock_guard lock(write_mutex_);
  io::write_file(p, text);
  return p;
}

}  // namespace beltforge
