#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace choicealign::cli {

/// Runs one command line (without the program name) and returns the exit code:
/// 0 success, 1 usage, 2 data, 3 convergence, 4 transport.
int run(const std::vector<std::string>& args);

/// Output directory that records what produced it. Every file goes through an
/// atomic write; config.json lists the arguments, resolved settings and version.
class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, std::string command, std::vector<std::string> args);
  void write(const std::string& name, std::string_view content);
  void write_json(const std::string& name, const nlohmann::json& j);
  nlohmann::json& resolved() { return resolved_; }
  const std::filesystem::path& dir() const { return dir_; }
  /// Writes config.json.
  void finish();

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::string> args_;
  nlohmann::json resolved_ = nlohmann::json::object();
  std::vector<std::string> files_;
};

/// Writes SVG renderings and summary.md for every known table found in `in`.
/// Returns the names of the files written.
std::vector<std::string> render_report(const std::filesystem::path& in, OutputDir& out);

}  // namespace choicealign::cli
