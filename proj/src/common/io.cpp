#include "choicealign/io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "choicealign/error.hpp"

namespace choicealign::io {

std::string_view tool_version() { return CHOICEALIGN_VERSION; }

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned long> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path tmp = path;
  tmp += fmt::format(".tmp-{:x}-{}", tid, counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_data(fmt::format("cannot write '{}'", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw_data(fmt::format("short write to '{}'", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw_data(fmt::format("cannot rename into '{}': {}", path.string(), ec.message()));
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kData, "sha256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace choicealign::io
