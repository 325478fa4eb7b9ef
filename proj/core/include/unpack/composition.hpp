#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unpack/ioi.hpp"
#include "unpack/text_io.hpp"

namespace unpack {

/// One (filter mode, root role, upstream role) cell pooled over prompts and root heads.
struct CompositionCell {
  std::string mode;  // "K", "Q", "V" or "all"
  std::string root_role;
  std::string upstream_role;
  int rerootings = 0;
  int found = 0;
  double median_rank = 0;  // lower median over found cases; 0 when none

  double found_fraction() const { return rerootings ? static_cast<double>(found) / rerootings : 0.0; }
};

struct CompositionOptions {
  /// Root roles and where they are rerooted: END unless listed here as S2.
  std::vector<std::string> root_roles{"NM", "S-Inh", "Ind"};
  std::vector<std::string> s2_roles{"Ind"};
  int layer_floor = 1;
  int found_within = 100;
};

/// Reroots `config` at every head of each root role on every IOI prompt and ranks upstream
/// heads under each mode filter. Cells come out in (mode K, Q, V, all) x root x upstream order.
std::vector<CompositionCell> composition_verification(const Model& model, const std::vector<PromptPair>& pairs,
                                                      const TraceConfig& config, const RoleTable& roles,
                                                      const CompositionOptions& opts = {}, int jobs = 1);

const CompositionCell* find_cell(const std::vector<CompositionCell>& cells, const std::string& mode,
                                 const std::string& root, const std::string& upstream);

/// Rows are root roles, columns upstream roles, cells "median / found%".
Table composition_table(const std::vector<CompositionCell>& cells, const std::string& mode);

}  // namespace unpack
