#include "common.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "unpack/errors.hpp"
#include "unpack/text_io.hpp"
#include "unpack/tokenizer.hpp"

namespace unpack::cli {

void TraceFlags::add(CLI::App& app) {
  app.add_option("--config", config, "attribution variant")->capture_default_str();
  app.add_option("--beta", beta, "SafeDenom floor (default 0.8)");
  app.add_option("--tau", tau, "path pruning threshold (default 1e-3)");
  app.add_option("--topk", topk, "paths kept per trace (default 2000)");
  app.add_option("--weights", weights, "K,Q,V branch weights, e.g. 0.5,0.25,0.25");
  app.add_option("--aggregate-floor", aggregate_floor, "drop aggregated credit entries below this magnitude");
}

TraceConfig TraceFlags::build() const {
  TraceConfig c = TraceConfig::named(config);
  if (beta) c.beta = *beta;
  if (tau) c.tau = *tau;
  if (topk) c.top_k_paths = *topk;
  if (aggregate_floor) c.aggregate_floor = *aggregate_floor;
  if (!weights.empty()) {
    const auto parts = split(weights, ',');
    if (parts.size() != 3) throw UsageError("--weights expects three comma-separated numbers");
    try {
      c.w_k = std::stod(parts[0]);
      c.w_q = std::stod(parts[1]);
      c.w_v = std::stod(parts[2]);
    } catch (const std::logic_error&) {
      throw UsageError("--weights: not a number in '" + weights + "'");
    }
    if (c.attn_key_side != AttnKeySide::kqv) throw UsageError("--weights only applies to kqv configs");
  }
  return c;
}

void Common::add_model(CLI::App& app) {
  app.add_option("--model", model, "converted model directory")->required();
}

void Common::add_output(CLI::App& app) {
  app.add_option("--output", output, "output directory")->capture_default_str();
}

void Common::add_jobs(CLI::App& app) {
  app.add_option("--jobs", jobs, "prompt-level worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

std::filesystem::path Common::fixture_dir() const {
  if (!fixtures.empty()) return fixtures;
  if (const char* env = std::getenv("UNPACK_FIXTURES"); env && *env) return env;
  return UNPACK_DEFAULT_FIXTURES;
}

Model open_model(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw UsageError("--model: no such directory: " + dir);
  return load_model(dir);
}

const Tokenizer& require_tokenizer(const Model& m) {
  if (!m.tokenizer()) throw ModelError("model directory has no tokenizer (vocab/merges)");
  return *m.tokenizer();
}

std::vector<int> encode_prompt(const Model& m, const std::string& text) {
  std::vector<int> ids;
  if (m.config().bos_token_id >= 0) ids.push_back(m.config().bos_token_id);
  const auto body = require_tokenizer(m).encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  if (static_cast<int>(ids.size()) > m.config().n_ctx) {
    throw UsageError("prompt is " + std::to_string(ids.size()) + " tokens; the model context is " +
                     std::to_string(m.config().n_ctx));
  }
  return ids;
}

std::vector<int> encode_prompt_truncated(const Model& m, const std::string& text) {
  std::vector<int> ids;
  if (m.config().bos_token_id >= 0) ids.push_back(m.config().bos_token_id);
  const auto body = require_tokenizer(m).encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  if (static_cast<int>(ids.size()) > m.config().n_ctx) ids.resize(m.config().n_ctx);
  return ids;
}

int parse_token(const Model& m, const std::string& spec) {
  if (spec.size() > 1 && spec[0] == '#') {
    try {
      return std::stoi(spec.substr(1));
    } catch (const std::logic_error&) {
      throw UsageError("bad token id '" + spec + "'");
    }
  }
  const auto id = require_tokenizer(m).single_token(spec);
  if (!id) {
    const auto n = require_tokenizer(m).encode(spec).size();
    throw UsageError("target '" + spec + "' is " + std::to_string(n) + " tokens; a single token is required");
  }
  return *id;
}

std::vector<std::string> token_strings(const Model& m, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(m.tokenizer() ? m.tokenizer()->decode({id}) : "#" + std::to_string(id));
  return out;
}

std::string crc32_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UsageError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  const uLong c = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(c));
  return buf;
}

Manifest::Manifest(std::string subcommand, int argc, char** argv) : t0_(std::chrono::steady_clock::now()) {
  j_["subcommand"] = std::move(subcommand);
  std::vector<std::string> args(argv, argv + argc);
  j_["argv"] = args;
  j_["build"] = UNPACK_BUILD_ID;
}

void Manifest::set_config(const TraceConfig& c) {
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : c.describe()) cfg[k] = v;
  j_["trace_config"] = cfg;
}

void Manifest::add_fixture(const std::filesystem::path& file) { j_["fixtures"][file.string()] = crc32_file(file); }

void Manifest::add_output(const std::filesystem::path& file) { j_["outputs"].push_back(file.filename().string()); }

void Manifest::write(const std::filesystem::path& dir) {
  j_["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  write_file(dir / "manifest.json", j_.dump(2) + "\n");
}

}  // namespace unpack::cli
