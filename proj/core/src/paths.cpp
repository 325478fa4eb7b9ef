#include "unpack/paths.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "unpack/errors.hpp"

namespace unpack {

std::optional<EntryMode> root_entry_mode(const Path& path) {
  if (path.hops.size() < 2) return std::nullopt;
  return path.hops[path.hops.size() - 2].mode;
}

std::vector<Path> filter_paths(const std::vector<Path>& paths, std::optional<EntryMode> mode) {
  if (!mode) return paths;
  std::vector<Path> out;
  for (const Path& p : paths) {
    if (root_entry_mode(p) == mode) out.push_back(p);
  }
  return out;
}

VecD percent_of_positive(const VecD& credit) {
  const double pos = credit.cwiseMax(0.0).sum();
  if (pos <= 0.0) return VecD::Zero(credit.size());
  return credit * (100.0 / pos);
}

void write_paths_jsonl(const std::vector<Path>& paths, std::ostream& out) {
  for (const Path& p : paths) {
    nlohmann::json hops = nlohmann::json::array();
    for (const Hop& h : p.hops) {
      hops.push_back({{"component", h.component.name()}, {"position", h.position}, {"mode", to_string(h.mode)}});
    }
    nlohmann::json j{{"magnitude", p.magnitude}, {"terminal_position", p.terminal_position}, {"hops", hops}};
    out << j.dump() << '\n';
  }
}

std::vector<Path> read_paths_jsonl(std::istream& in) {
  std::vector<Path> paths;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Path p;
      p.magnitude = j.at("magnitude").get<double>();
      p.terminal_position = j.at("terminal_position").get<int>();
      for (const auto& h : j.at("hops")) {
        p.hops.push_back({ComponentId::parse(h.at("component").get<std::string>()), h.at("position").get<int>(),
                          parse_entry_mode(h.at("mode").get<std::string>())});
      }
      paths.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("paths line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return paths;
}

void write_token_credit(const VecD& credit, const std::vector<std::string>& tokens, std::ostream& out) {
  const VecD pct = percent_of_positive(credit);
  out << "position\ttoken\tcredit\tpct_positive\n";
  for (Eigen::Index i = 0; i < credit.size(); ++i) {
    const std::string tok = i < static_cast<Eigen::Index>(tokens.size()) ? nlohmann::json(tokens[i]).dump() : "\"\"";
    out << i << '\t' << tok << '\t' << credit(i) << '\t' << pct(i) << '\n';
  }
}

}  // namespace unpack
