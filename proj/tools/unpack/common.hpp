#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unpack/model.hpp"
#include "unpack/trace_config.hpp"

namespace unpack::cli {

/// Flags shared by every subcommand that runs attribution.
struct TraceFlags {
  std::string config = "kqv_aligned";
  std::optional<double> beta, tau;
  std::optional<std::size_t> topk;
  std::string weights;  // "wK,wQ,wV"
  std::optional<double> aggregate_floor;

  void add(CLI::App& app);
  /// Named variant with the overrides applied; no target yet.
  TraceConfig build() const;
};

struct Common {
  std::string model;
  std::string output = ".";
  std::string fixtures;
  int jobs = 1;
  std::uint64_t seed = 42;

  void add_model(CLI::App& app);
  void add_output(CLI::App& app);
  void add_jobs(CLI::App& app);
  std::filesystem::path fixture_dir() const;
};

Model open_model(const std::string& dir);
const Tokenizer& require_tokenizer(const Model& m);

/// BOS (when the model defines one) followed by the encoded text. The first form rejects
/// text longer than the context; the second truncates it.
std::vector<int> encode_prompt(const Model& m, const std::string& text);
std::vector<int> encode_prompt_truncated(const Model& m, const std::string& text);
/// A token given as text (" Mary") or as "#<id>".
int parse_token(const Model& m, const std::string& spec);
std::vector<std::string> token_strings(const Model& m, const std::vector<int>& ids);

/// Run manifest written next to every output.
class Manifest {
 public:
  Manifest(std::string subcommand, int argc, char** argv);
  nlohmann::ordered_json& body() { return j_; }
  void set_config(const TraceConfig& c);
  void add_fixture(const std::filesystem::path& file);
  void add_output(const std::filesystem::path& file);
  void write(const std::filesystem::path& dir);

 private:
  nlohmann::ordered_json j_;
  std::chrono::steady_clock::time_point t0_;
};

std::string crc32_file(const std::filesystem::path& file);

}  // namespace unpack::cli
