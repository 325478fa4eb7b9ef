#include "unpack/tokenizer.hpp"

#include <algorithm>
#include <climits>
#include <fstream>
#include <sstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "unpack/errors.hpp"

namespace unpack {

namespace {

std::string utf8_of(UChar32 cp) {
  char buf[4];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, 4, cp, err);
  (void)err;
  return std::string(buf, static_cast<std::size_t>(len));
}

// GPT-2 bytes_to_unicode: printable bytes map to themselves, the rest to 256+n.
std::vector<std::string> make_byte_encoder() {
  std::vector<int> printable;
  for (int b = '!'; b <= '~'; ++b) printable.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
  std::vector<std::string> enc(256);
  int extra = 0;
  for (int b = 0; b < 256; ++b) {
    bool keep = std::find(printable.begin(), printable.end(), b) != printable.end();
    enc[b] = utf8_of(keep ? b : 256 + extra++);
  }
  return enc;
}

enum class CharClass { letter, number, space, other };

struct CodePoint {
  CharClass cls;
  int len;
  UChar32 cp;
};

CodePoint next_codepoint(std::string_view s, std::size_t i) {
  int32_t pos = static_cast<int32_t>(i);
  UChar32 cp = 0;
  U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), pos, static_cast<int32_t>(s.size()), cp);
  int len = pos - static_cast<int32_t>(i);
  if (cp < 0) return {CharClass::other, len, cp};
  if (u_isUWhiteSpace(cp)) return {CharClass::space, len, cp};
  switch (u_charType(cp)) {
    case U_UPPERCASE_LETTER:
    case U_LOWERCASE_LETTER:
    case U_TITLECASE_LETTER:
    case U_MODIFIER_LETTER:
    case U_OTHER_LETTER: return {CharClass::letter, len, cp};
    case U_DECIMAL_DIGIT_NUMBER:
    case U_LETTER_NUMBER:
    case U_OTHER_NUMBER: return {CharClass::number, len, cp};
    default: return {CharClass::other, len, cp};
  }
}

std::size_t contraction_length(std::string_view s, std::size_t i) {
  if (s[i] != '\'') return 0;
  static constexpr std::string_view suffixes[] = {"re", "ve", "ll", "s", "t", "m", "d"};
  auto rest = s.substr(i + 1);
  for (auto suf : suffixes) {
    if (rest.starts_with(suf)) return 1 + suf.size();
  }
  return 0;
}

}  // namespace

std::vector<std::string_view> Tokenizer::pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto run_of = [&](std::size_t from, CharClass cls) {
    std::size_t j = from;
    while (j < n) {
      auto c = next_codepoint(text, j);
      bool match = cls == CharClass::other ? c.cls == CharClass::other : c.cls == cls;
      if (!match) break;
      j += c.len;
    }
    return j;
  };

  while (i < n) {
    if (auto len = contraction_length(text, i)) {
      out.push_back(text.substr(i, len));
      i += len;
      continue;
    }
    // " ?\p{L}+", " ?\p{N}+", " ?[^\s\p{L}\p{N}]+"
    std::size_t body = (text[i] == ' ' && i + 1 < n) ? i + 1 : i;
    auto head = next_codepoint(text, body);
    if (head.cls != CharClass::space && !(body == i && text[i] == ' ')) {
      std::size_t end = run_of(body, head.cls);
      out.push_back(text.substr(i, end - i));
      i = end;
      continue;
    }
    // "\s+(?!\S)|\s+"
    std::size_t end = run_of(i, CharClass::space);
    if (end == i) {
      // lone ' ' at end of input is whitespace; anything else was consumed above
      end = i + next_codepoint(text, i).len;
    }
    if (end < n) {
      // followed by a non-space: give back the final whitespace char if the run is longer than one
      std::size_t last = i;
      for (std::size_t j = i; j < end;) {
        last = j;
        j += next_codepoint(text, j).len;
      }
      if (last > i) end = last;
    }
    out.push_back(text.substr(i, end - i));
    i = end;
  }
  return out;
}

Tokenizer::Tokenizer(std::unordered_map<std::string, int> vocab,
                     std::vector<std::pair<std::string, std::string>> merges)
    : token_to_id_(std::move(vocab)), merges_(std::move(merges)), byte_encoder_(make_byte_encoder()) {
  int max_id = -1;
  for (const auto& [tok, id] : token_to_id_) {
    if (id < 0) throw ModelError("vocab: negative id for token " + tok);
    max_id = std::max(max_id, id);
  }
  id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  for (const auto& [tok, id] : token_to_id_) id_to_token_[id] = tok;
  for (std::size_t r = 0; r < merges_.size(); ++r) merge_rank_.emplace(merges_[r], static_cast<int>(r));
  for (int b = 0; b < 256; ++b) {
    byte_decoder_.emplace(byte_encoder_[b], static_cast<unsigned char>(b));
    if (!token_to_id_.contains(byte_encoder_[b])) {
      throw ModelError("vocab is missing the byte token for 0x" + std::to_string(b));
    }
  }
}

Tokenizer Tokenizer::byte_level() {
  auto enc = make_byte_encoder();
  std::unordered_map<std::string, int> vocab;
  for (int b = 0; b < 256; ++b) vocab.emplace(enc[b], b);
  vocab.emplace("<|endoftext|>", 256);
  return Tokenizer(std::move(vocab), {});
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_path, const std::filesystem::path& merges_path) {
  std::ifstream vf(vocab_path);
  if (!vf) throw ModelError("cannot open vocab file " + vocab_path.string());
  std::unordered_map<std::string, int> vocab;
  std::string line;
  int lineno = 0;
  while (std::getline(vf, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto sp = line.rfind(' ');
    if (sp == std::string::npos || sp == 0) {
      throw ModelError(vocab_path.filename().string() + ":" + std::to_string(lineno) + ": expected '<token> <id>'");
    }
    int id = 0;
    try {
      id = std::stoi(line.substr(sp + 1));
    } catch (const std::exception&) {
      throw ModelError(vocab_path.filename().string() + ":" + std::to_string(lineno) + ": bad id");
    }
    vocab.emplace(line.substr(0, sp), id);
  }

  std::ifstream mf(merges_path);
  if (!mf) throw ModelError("cannot open merges file " + merges_path.string());
  std::vector<std::pair<std::string, std::string>> merges;
  while (std::getline(mf, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.starts_with("#version")) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw ModelError("merges: malformed rule '" + line + "'");
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

void Tokenizer::save(const std::filesystem::path& vocab, const std::filesystem::path& merges) const {
  std::ofstream vf(vocab, std::ios::trunc);
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
    if (!id_to_token_[id].empty()) vf << id_to_token_[id] << ' ' << id << '\n';
  }
  std::ofstream mf(merges, std::ios::trunc);
  mf << "#version: 0.2\n";
  for (const auto& [a, b] : merges_) mf << a << ' ' << b << '\n';
  if (!vf || !mf) throw ModelError("failed writing tokenizer files");
}

std::vector<int> Tokenizer::bpe(std::string_view pretoken) const {
  std::vector<std::string> word;
  word.reserve(pretoken.size());
  for (unsigned char b : pretoken) word.push_back(byte_encoder_[b]);

  while (word.size() > 1) {
    int best_rank = INT_MAX;
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      auto it = merge_rank_.find({word[i], word[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank == INT_MAX) break;
    const std::string left = word[best];
    const std::string right = word[best + 1];
    std::vector<std::string> merged;
    merged.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == left && word[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(word[i]);
        ++i;
      }
    }
    word = std::move(merged);
  }

  std::vector<int> ids;
  ids.reserve(word.size());
  for (const auto& sym : word) {
    auto it = token_to_id_.find(sym);
    if (it == token_to_id_.end()) throw ModelError("BPE produced a symbol missing from the vocabulary");
    ids.push_back(it->second);
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (auto piece : pretokenize(text)) {
    auto part = bpe(piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(id_to_token_.size())) {
      throw UsageError("token id " + std::to_string(id) + " out of vocabulary");
    }
    const std::string& tok = id_to_token_[id];
    for (std::size_t i = 0; i < tok.size();) {
      int32_t pos = static_cast<int32_t>(i);
      UChar32 cp = 0;
      U8_NEXT(reinterpret_cast<const uint8_t*>(tok.data()), pos, static_cast<int32_t>(tok.size()), cp);
      std::string sym = tok.substr(i, static_cast<std::size_t>(pos) - i);
      auto it = byte_decoder_.find(sym);
      if (it != byte_decoder_.end()) {
        out.push_back(static_cast<char>(it->second));
      } else {
        out += sym;  // special tokens are stored verbatim
      }
      i = static_cast<std::size_t>(pos);
    }
  }
  return out;
}

std::optional<int> Tokenizer::single_token(std::string_view text) const {
  auto ids = encode(text);
  if (ids.size() == 1) return ids.front();
  return std::nullopt;
}

std::optional<int> Tokenizer::special_token(std::string_view literal) const {
  auto it = token_to_id_.find(std::string(literal));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

}  // namespace unpack
