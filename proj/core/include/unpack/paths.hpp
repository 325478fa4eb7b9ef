#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unpack/attribution.hpp"

namespace unpack {

/// Mode of the hop that feeds the root (the second-to-last hop); nullopt for a one-hop path.
std::optional<EntryMode> root_entry_mode(const Path& path);

/// Paths whose hop into the root entered with `mode`; nullopt keeps everything.
std::vector<Path> filter_paths(const std::vector<Path>& paths, std::optional<EntryMode> mode);

/// 100 * v / (sum of the positive entries). All zeros when nothing is positive.
VecD percent_of_positive(const VecD& credit);

/// One JSON object per line: {"magnitude", "terminal_position", "hops": [{component, position, mode}]}.
void write_paths_jsonl(const std::vector<Path>& paths, std::ostream& out);
std::vector<Path> read_paths_jsonl(std::istream& in);

/// Tab-separated: position, token, credit, percent of positive credit.
void write_token_credit(const VecD& credit, const std::vector<std::string>& tokens, std::ostream& out);

}  // namespace unpack
