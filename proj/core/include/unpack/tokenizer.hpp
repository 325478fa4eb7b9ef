#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace unpack {

/// Byte-level BPE in the GPT-2 style.
///
/// `vocab` has one `<token> <id>` pair per line, tokens written in the byte-to-unicode
/// alphabet (so they never contain whitespace). `merges` has one `<left> <right>` rule per
/// line in priority order; a leading `#version` line is ignored.
class Tokenizer {
 public:
  static Tokenizer load(const std::filesystem::path& vocab, const std::filesystem::path& merges);
  /// 256 single-byte tokens and no merges, plus `<|endoftext|>` at id 256.
  static Tokenizer byte_level();

  Tokenizer(std::unordered_map<std::string, int> vocab, std::vector<std::pair<std::string, std::string>> merges);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  /// Id of a token written in plain text (e.g. " Alice"), if the whole string is one token.
  std::optional<int> single_token(std::string_view text) const;
  std::optional<int> special_token(std::string_view literal) const;

  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
  const std::string& token_string(int id) const { return id_to_token_.at(id); }

  void save(const std::filesystem::path& vocab, const std::filesystem::path& merges) const;

  /// Splits text into pre-tokens with the GPT-2 pattern
  /// `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`.
  static std::vector<std::string_view> pretokenize(std::string_view text);

 private:
  std::vector<int> bpe(std::string_view pretoken) const;

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
  std::vector<std::string> byte_encoder_;     // byte -> utf-8 symbol
  std::unordered_map<std::string, unsigned char> byte_decoder_;
};

}  // namespace unpack
