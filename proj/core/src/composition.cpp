#include "unpack/composition.hpp"

#include <algorithm>

#include "unpack/errors.hpp"
#include "unpack/parallel.hpp"

namespace unpack {

namespace {

const std::vector<ComponentId>& role_heads(const RoleTable& roles, const std::string& name) {
  for (const auto& [role, heads] : roles) {
    if (role == name) return heads;
  }
  throw UsageError("role '" + name + "' is not in the role table");
}

const std::vector<std::pair<std::string, std::optional<EntryMode>>>& mode_filters() {
  static const std::vector<std::pair<std::string, std::optional<EntryMode>>> f{
      {"K", EntryMode::K}, {"Q", EntryMode::Q}, {"V", EntryMode::V}, {"all", std::nullopt}};
  return f;
}

double median(std::vector<int> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];  // lower median keeps ranks integral
}

}  // namespace

std::vector<CompositionCell> composition_verification(const Model& model, const std::vector<PromptPair>& pairs,
                                                      const TraceConfig& config, const RoleTable& roles,
                                                      const CompositionOptions& opts, int jobs) {
  if (pairs.empty()) throw UsageError("composition: no prompts");
  for (const auto& r : opts.root_roles) role_heads(roles, r);
  const auto& filters = mode_filters();
  const std::size_t U = roles.size(), R = opts.root_roles.size(), M = filters.size();

  // ranks[prompt][mode][root][upstream] -> list of ranks (0 = not found) over the root's heads
  using Ranks = std::vector<std::vector<std::vector<std::vector<int>>>>;
  std::vector<Ranks> per_prompt(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), jobs, [&](int i) {
    const IoiPrompt& p = pairs[i].ioi;
    const ForwardCapture cap = forward(model, p.tokens);
    Attributor attr(model, cap, config);
    Ranks ranks(M, std::vector<std::vector<std::vector<int>>>(R, std::vector<std::vector<int>>(U)));
    for (std::size_t r = 0; r < R; ++r) {
      const bool at_s2 = std::find(opts.s2_roles.begin(), opts.s2_roles.end(), opts.root_roles[r]) !=
                         opts.s2_roles.end();
      const int pos = at_s2 ? p.pos_s2 : p.pos_end;
      for (const ComponentId& head : role_heads(roles, opts.root_roles[r])) {
        const CreditLedger ledger = attr.reroot(head, pos);
        for (std::size_t m = 0; m < M; ++m) {
          std::vector<RoleRank> rr;
          if (!ledger.paths.empty()) rr = rank_upstream(ledger, filters[m].second, opts.layer_floor, roles, opts.found_within);
          for (std::size_t u = 0; u < U; ++u) {
            ranks[m][r][u].push_back(rr.empty() || !rr[u].found ? 0 : rr[u].rank);
          }
        }
      }
    }
    per_prompt[i] = std::move(ranks);
  });

  std::vector<CompositionCell> cells;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t u = 0; u < U; ++u) {
        CompositionCell cell{filters[m].first, opts.root_roles[r], roles[u].first};
        std::vector<int> found;
        for (const auto& ranks : per_prompt) {
          for (int rank : ranks[m][r][u]) {
            ++cell.rerootings;
            if (rank > 0) found.push_back(rank);
          }
        }
        cell.found = static_cast<int>(found.size());
        cell.median_rank = median(found);
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

const CompositionCell* find_cell(const std::vector<CompositionCell>& cells, const std::string& mode,
                                 const std::string& root, const std::string& upstream) {
  for (const auto& c : cells) {
    if (c.mode == mode && c.root_role == root && c.upstream_role == upstream) return &c;
  }
  return nullptr;
}

Table composition_table(const std::vector<CompositionCell>& cells, const std::string& mode) {
  Table t;
  t.header = {"Mode", "root \\ upstream"};
  std::vector<std::string> roots;
  for (const auto& c : cells) {
    if (c.mode != mode) continue;
    if (std::find(t.header.begin() + 2, t.header.end(), c.upstream_role) == t.header.end()) {
      t.header.push_back(c.upstream_role);
    }
    if (std::find(roots.begin(), roots.end(), c.root_role) == roots.end()) roots.push_back(c.root_role);
  }
  for (const auto& root : roots) {
    std::vector<std::string> row{mode, root};
    for (std::size_t u = 2; u < t.header.size(); ++u) {
      const CompositionCell* c = find_cell(cells, mode, root, t.header[u]);
      if (!c || c->found == 0) {
        row.push_back("-- / 0%");
      } else {
        row.push_back(fmt(c->median_rank, 0) + " / " +
                      fmt_pct(c->found_fraction(), 0));
      }
    }
    t.add(row);
  }
  return t;
}

}  // namespace unpack
