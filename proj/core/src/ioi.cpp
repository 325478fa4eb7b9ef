#include "unpack/ioi.hpp"

#include <random>
#include <sstream>

#include "unpack/errors.hpp"
#include "unpack/text_io.hpp"

namespace unpack {

IoiFixtures load_ioi_fixtures(const std::filesystem::path& dir, const Tokenizer& tok) {
  IoiFixtures fx;
  for (const auto& name : read_lines(dir / "names.txt")) {
    if (tok.single_token(" " + name)) {
      fx.names.push_back(name);
    } else {
      ++fx.names_dropped;
    }
  }
  fx.templates = read_lines(dir / "templates.txt");
  fx.places = read_lines(dir / "places.txt");
  fx.objects = read_lines(dir / "objects.txt");
  if (fx.templates.empty() || fx.places.empty() || fx.objects.empty()) {
    throw UsageError("IOI fixtures in " + dir.string() + " are incomplete");
  }
  return fx;
}

RoleTable load_role_table(const std::filesystem::path& path, const ModelConfig& cfg) {
  RoleTable table;
  for (const auto& line : read_lines(path)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw UsageError("role table: expected 'role: l.h ...' in " + path.string());
    std::vector<ComponentId> heads;
    std::istringstream in(line.substr(colon + 1));
    std::string item;
    while (in >> item) {
      const auto dot = item.find('.');
      int l = -1, h = -1;
      try {
        if (dot == std::string::npos) throw std::invalid_argument(item);
        l = std::stoi(item.substr(0, dot));
        h = std::stoi(item.substr(dot + 1));
      } catch (const std::exception&) {
        throw UsageError("role table: bad head '" + item + "'");
      }
      const ComponentId c = ComponentId::head(l, h);
      if (!c.valid_for(cfg)) throw UsageError("role table: head " + c.name() + " is not in the model");
      heads.push_back(c);
    }
    table.emplace_back(trim(line.substr(0, colon)), std::move(heads));
  }
  return table;
}

void IoiPrompt::validate() const {
  const int n = static_cast<int>(tokens.size());
  if (pos_end != n - 1) throw UsageError("IOI prompt: END is not the final position");
  if (pos_s1 == pos_s2) throw UsageError("IOI prompt: S1 and S2 share a position");
  for (int p : {pos_io, pos_s1, pos_s2}) {
    if (p <= 0 || p >= n) throw UsageError("IOI prompt: name slot out of range");
  }
  if (tokens[pos_io] != name_tokens[0] || tokens[pos_s1] != name_tokens[1] || tokens[pos_s2] != name_tokens[2]) {
    throw UsageError("IOI prompt: slot token mismatch in \"" + text + "\"");
  }
}

IoiPrompt make_prompt(const std::string& tmpl, int template_id, bool abba, const std::string& io,
                      const std::string& s1, const std::string& s2, const std::string& place,
                      const std::string& object, const Tokenizer& tok, int bos) {
  IoiPrompt p;
  p.template_id = template_id;
  p.abba = abba;
  p.names = {io, s1, s2};
  for (int i = 0; i < 3; ++i) {
    const auto t = tok.single_token(" " + p.names[i]);
    if (!t) throw UsageError("name '" + p.names[i] + "' is not a single token");
    p.name_tokens[i] = *t;
  }

  // slot 0 = IO, 1 = S1, 2 = S2; char offset where each name starts
  std::array<std::size_t, 3> offset{};
  int subject_seen = 0, first_pair = 0;
  std::string text;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '[') {
      text += tmpl[i++];
      continue;
    }
    const auto close = tmpl.find(']', i);
    if (close == std::string::npos) throw UsageError("template: unclosed placeholder");
    const std::string key = tmpl.substr(i + 1, close - i - 1);
    i = close + 1;
    if (key == "PLACE") {
      text += place;
    } else if (key == "OBJECT") {
      text += object;
    } else if (key == "S" || key == "IO") {
      // the first two name placeholders form the "A and B" pair, swapped under ABBA
      std::string slot = key;
      if (first_pair < 2 && abba) slot = key == "S" ? "IO" : "S";
      ++first_pair;
      int idx = 0;
      if (slot == "S") idx = subject_seen++ == 0 ? 1 : 2;
      if (idx == 2 && subject_seen > 2) throw UsageError("template: more than two subject mentions");
      if (!text.empty() && text.back() == ' ') {
        offset[idx] = text.size() - 1;
      } else {
        throw UsageError("template: a name placeholder must follow a space");
      }
      text += p.names[idx];
    } else {
      throw UsageError("template: unknown placeholder [" + key + "]");
    }
  }
  if (subject_seen != 2) throw UsageError("template must mention the subject twice");

  p.text = text;
  p.tokens.push_back(bos);
  const auto body = tok.encode(text);
  p.tokens.insert(p.tokens.end(), body.begin(), body.end());
  std::array<int, 3> pos{};
  for (int k = 0; k < 3; ++k) pos[k] = 1 + static_cast<int>(tok.encode(text.substr(0, offset[k])).size());
  p.pos_io = pos[0];
  p.pos_s1 = pos[1];
  p.pos_s2 = pos[2];
  p.pos_end = static_cast<int>(p.tokens.size()) - 1;
  p.validate();
  return p;
}

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::vector<PromptPair> gen_prompts(const IoiFixtures& fx, const Tokenizer& tok, int bos, std::uint64_t seed,
                                    int n) {
  if (fx.names.size() < 4) throw UsageError("IOI name pool too small: need 4 single-token names");
  if (n < 0) throw UsageError("prompt count must be non-negative");
  std::mt19937_64 rng(seed);
  std::vector<PromptPair> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t t = pick(rng, fx.templates.size());
    const bool abba = i % 2 == 1;
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = pick(rng, fx.names.size());
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
      }
    }
    const std::string& place = fx.places[pick(rng, fx.places.size())];
    const std::string& object = fx.objects[pick(rng, fx.objects.size())];
    const std::string &io = fx.names[idx[0]], &s = fx.names[idx[1]], &b = fx.names[idx[2]], &c = fx.names[idx[3]];
    PromptPair pair{make_prompt(fx.templates[t], static_cast<int>(t), abba, io, s, s, place, object, tok, bos),
                    make_prompt(fx.templates[t], static_cast<int>(t), abba, io, b, c, place, object, tok, bos)};
    if (pair.ioi.tokens.size() != pair.abc.tokens.size() || pair.ioi.pos_io != pair.abc.pos_io ||
        pair.ioi.pos_s1 != pair.abc.pos_s1 || pair.ioi.pos_s2 != pair.abc.pos_s2) {
      throw UsageError("ABC partner layout differs from its IOI prompt: \"" + pair.abc.text + "\"");
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace unpack
