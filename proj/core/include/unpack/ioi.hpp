#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unpack/attribution.hpp"
#include "unpack/tokenizer.hpp"

namespace unpack {

struct IoiFixtures {
  std::vector<std::string> names;  // single-token with a leading space under the tokenizer
  std::vector<std::string> templates;
  std::vector<std::string> places;
  std::vector<std::string> objects;
  std::size_t names_dropped = 0;
};

/// Reads names.txt, templates.txt, places.txt and objects.txt from `dir`.
IoiFixtures load_ioi_fixtures(const std::filesystem::path& dir, const Tokenizer& tok);

/// "role: l.h l.h ..." per line. Throws UsageError for heads outside the model.
RoleTable load_role_table(const std::filesystem::path& path, const ModelConfig& cfg);

/// One prompt with names at three slots: IO, S1 and S2. IOI prompts repeat the subject
/// at S1 and S2; ABC prompts put three distinct names there.
struct IoiPrompt {
  std::string text;
  int template_id = 0;
  bool abba = false;
  std::array<std::string, 3> names;  // IO, S1, S2 slot names, without the leading space
  std::array<int, 3> name_tokens{};
  std::vector<int> tokens;  // BOS first
  int pos_io = 0, pos_s1 = 0, pos_s2 = 0, pos_end = 0;

  bool is_ioi() const { return names[1] == names[2]; }
  /// Throws UsageError if the slot layout is inconsistent.
  void validate() const;
};

struct PromptPair {
  IoiPrompt ioi;
  IoiPrompt abc;  // S1 -> B, S2 -> C
};

/// Fills a template. `io`, `s1`, `s2` are bare names; positions are found by tokenizing the
/// text before each slot.
IoiPrompt make_prompt(const std::string& tmpl, int template_id, bool abba, const std::string& io,
                      const std::string& s1, const std::string& s2, const std::string& place,
                      const std::string& object, const Tokenizer& tok, int bos);

/// Deterministic under `seed`. Even indices use BABA order, odd indices ABBA.
std::vector<PromptPair> gen_prompts(const IoiFixtures& fx, const Tokenizer& tok, int bos, std::uint64_t seed,
                                    int n);

}  // namespace unpack
