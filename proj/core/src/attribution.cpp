#include "unpack/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "unpack/errors.hpp"
#include "unpack/safe_denom.hpp"

namespace unpack {

std::string_view to_string(EntryMode m) {
  switch (m) {
    case EntryMode::root: return "root";
    case EntryMode::K: return "K";
    case EntryMode::Q: return "Q";
    case EntryMode::V: return "V";
    case EntryMode::mlp: return "MLP";
  }
  return "?";
}

EntryMode parse_entry_mode(std::string_view s) {
  if (s == "root") return EntryMode::root;
  if (s == "K") return EntryMode::K;
  if (s == "Q") return EntryMode::Q;
  if (s == "V") return EntryMode::V;
  if (s == "MLP" || s == "mlp") return EntryMode::mlp;
  throw UsageError("unknown entry mode '" + std::string(s) + "'");
}

VecD target_direction(const Model& model, const ForwardCapture& capture, const Target& target, int pos) {
  const ModelConfig& cfg = model.config();
  auto check = [&](int t) {
    if (t < 0) throw UsageError("no target token set");
    if (t >= cfg.vocab_size) throw UsageError("target token " + std::to_string(t) + " out of vocabulary");
  };
  check(target.token);
  if (pos < 0 || pos >= capture.n_pos()) throw UsageError("target position out of range");
  const auto wu = model.unembed();
  VecD u = wu.row(target.token).cast<double>().transpose();
  if (target.kind == Target::Kind::logit_diff) {
    check(target.distractor);
    u -= wu.row(target.distractor).cast<double>().transpose();
  } else {
    u -= wu.cast<double>().colwise().mean().transpose();
  }
  const double sigma = capture.ln_sigma(Site::final_ln(cfg), pos);
  VecD d = model.lnf_w().cast<double>().cwiseProduct(u) / sigma;
  return d.array() - d.mean();
}

Attributor::Attributor(const Model& model, const ForwardCapture& capture, TraceConfig config)
    : model_(model),
      cap_(capture),
      cfg_(config),
      dec_(model, capture),
      L_(model.config().n_layers),
      H_(model.config().n_heads),
      n_(capture.n_pos()) {
  cfg_.validate();
  if (!cap_.flags.attention || !cap_.flags.mlp_pre) {
    throw UsageError("attribution needs a capture with attention weights and MLP pre-activations");
  }
  dirs_.assign(n_origins(), VecD());
  dir_ready_.assign(n_origins(), 0);
}

void Attributor::reset_root() {
  for (int l = 0; l < L_; ++l) dir_ready_[mlp_root_origin(l)] = 0;
  dir_ready_[0] = 0;
  value_cache_.clear();  // shares keyed by root-dependent origins
  lost_ = 0.0;
  trips_ = 0;
}

void Attributor::set_root_direction(VecD dir, int root_pos) {
  reset_root();
  dirs_[0] = std::move(dir);
  dir_ready_[0] = 1;
  root_pos_ = root_pos;
}

const VecD& Attributor::direction(int origin) {
  if (origin < 0 || origin >= n_origins()) throw UsageError("direction origin out of range");
  if (!dir_ready_[origin]) {
    if (origin > L_) {
      const int rel = origin - 1 - L_;
      ensure_deep(rel / n_, rel % n_);
    } else {
      throw NumericError("direction requested before the root was set");
    }
  }
  return dirs_[origin];
}

// ---- share caches -------------------------------------------------------------------

namespace {

void fill_column(const VecD& r, double beta, RowMatD& share, int col, std::uint8_t& dead, std::uint8_t& floored) {
  const auto sd = safe_denom_ex(std::span<const double>(r.data(), r.size()), beta);
  floored = sd.floored;
  if (sd.value == 0.0) {
    dead = 1;
    share.col(col).setZero();
  } else {
    dead = 0;
    share.col(col) = r / sd.value;
  }
}

}  // namespace

const Attributor::ShareBlock& Attributor::key_shares(int l, int h, int q) {
  auto key = std::make_tuple(l, h, q);
  auto it = key_cache_.find(key);
  if (it != key_cache_.end()) return it->second;
  const RowMatD r = dec_.key_contribs_all(l, h, q);
  ShareBlock b{RowMatD(r.rows(), r.cols()), std::vector<std::uint8_t>(r.cols()), std::vector<std::uint8_t>(r.cols())};
  for (int s = 0; s <= q; ++s) fill_column(r.col(s), cfg_.beta, b.share, s, b.dead[s], b.floored[s]);
  return key_cache_.emplace(key, std::move(b)).first->second;
}

const Attributor::ShareBlock& Attributor::query_shares(int l, int h, int q) {
  auto key = std::make_tuple(l, h, q);
  auto it = query_cache_.find(key);
  if (it != query_cache_.end()) return it->second;
  const RowMatD r = dec_.query_contribs_all(l, h, q);
  ShareBlock b{RowMatD(r.rows(), r.cols()), std::vector<std::uint8_t>(r.cols()), std::vector<std::uint8_t>(r.cols())};
  for (int s = 0; s <= q; ++s) fill_column(r.col(s), cfg_.beta, b.share, s, b.dead[s], b.floored[s]);
  return query_cache_.emplace(key, std::move(b)).first->second;
}

const Attributor::ShareBlock& Attributor::value_shares(int l, int h, int s, int origin) {
  auto key = std::make_tuple(l, h, s, origin);
  auto it = value_cache_.find(key);
  if (it != value_cache_.end()) return it->second;
  const VecD r = dec_.value_projections(l, h, s, direction(origin));
  ShareBlock b{RowMatD(r.size(), 1), std::vector<std::uint8_t>(1), std::vector<std::uint8_t>(1)};
  fill_column(r, cfg_.beta, b.share, 0, b.dead[0], b.floored[0]);
  return value_cache_.emplace(key, std::move(b)).first->second;
}

const VecD& Attributor::value_sum(int l, int h, int s) {
  auto key = std::make_tuple(l, h, s);
  auto it = vsum_cache_.find(key);
  if (it != vsum_cache_.end()) return it->second;
  return vsum_cache_.emplace(key, dec_.value_sum(l, h, s)).first->second;
}

Attributor::MlpInfo& Attributor::mlp_info(int l, int q) {
  auto key = std::make_pair(l, q);
  auto it = mlp_cache_.find(key);
  if (it != mlp_cache_.end()) return it->second;
  MlpInfo info;
  const int dm = model_.config().d_mlp;
  info.gate.resize(dm);
  info.gate_ratio.resize(dm);
  for (int j = 0; j < dm; ++j) {
    const double pre = cap_.mlp_pre[l](q, j);
    info.gate(j) = model_.activation(pre);
    info.gate_ratio(j) = std::abs(pre) < 1e-6 ? model_.activation_slope_at_zero() : info.gate(j) / pre;
  }
  if (cfg_.mlp_key_side == MlpKeySide::l2) info.norms = dec_.mlp_contribs(l, q).rowwise().norm();
  return mlp_cache_.emplace(key, std::move(info)).first->second;
}

Attributor::Transfer Attributor::mlp_transfer(int l, int q, const VecD& neuron_share) {
  const RowMatD s = dec_.mlp_contribs(l, q);
  const VecD sum = s.colwise().sum().transpose();
  const VecD mass = s.cwiseAbs().colwise().sum().transpose();
  Transfer t;
  VecD scale = VecD::Zero(s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (neuron_share(j) == 0.0) continue;
    const double floor = cfg_.beta * mass(j);
    double denom = sum(j);
    if (std::abs(sum(j)) < floor) {
      ++t.trips;
      denom = (sum(j) > 0.0 ? 1.0 : (sum(j) < 0.0 ? -1.0 : 0.0)) * floor;
    }
    if (denom == 0.0) {
      t.lost += neuron_share(j);
    } else {
      scale(j) = neuron_share(j) / denom;
    }
  }
  t.transfer = s * scale;
  t.neuron_share = neuron_share;
  return t;
}

VecD Attributor::mlp_child_direction(int l, int q, const VecD& neuron_share) {
  const MlpInfo& info = mlp_info(l, q);
  const VecD mix = neuron_share.cwiseProduct(info.gate_ratio);
  const VecD raw = model_.w_in(l).cast<double>() * mix;
  return dec_.ln_weight(Site::mlp(l)).cwiseProduct(raw);
}

void Attributor::ensure_deep(int l, int q) {
  MlpInfo& info = mlp_info(l, q);
  if (info.deep_ready) return;
  const auto sd = safe_denom_ex(std::span<const double>(info.gate.data(), info.gate.size()), cfg_.beta);
  VecD share = VecD::Zero(info.gate.size());
  info.deep_trips = sd.floored ? 1 : 0;
  if (sd.value == 0.0) {
    info.deep_transfer = VecD::Zero(dec_.prefix(Site::mlp(l)));
    info.deep_lost = 1.0;
  } else {
    share = info.gate / sd.value;
    Transfer t = mlp_transfer(l, q, share);
    info.deep_transfer = std::move(t.transfer);
    info.deep_lost = t.lost;
    info.deep_trips += t.trips;
  }
  info.deep_ready = true;
  const int o = mlp_deep_origin(l, q);
  dirs_[o] = mlp_child_direction(l, q, share);
  dir_ready_[o] = 1;
}

// ---- dispatch -----------------------------------------------------------------------

std::vector<double> Attributor::source_weights(int l, int h, int q, int origin, int depth) {
  const RowMatD& a = cap_.alpha(l, h);
  std::vector<double> r(q + 1);
  if (depth > 0) {
    for (int s = 0; s <= q; ++s) r[s] = a(q, s);
    return r;
  }
  VecD d = cfg_.v_dispatch == VDispatch::aligned ? dec_.attn_output(l, q) : direction(origin);
  d.array() -= d.mean();
  for (int s = 0; s <= q; ++s) r[s] = a(q, s) == 0.0 ? 0.0 : a(q, s) * value_sum(l, h, s).dot(d);
  return r;
}

std::vector<std::pair<int, double>> Attributor::attention_v_dispatch(int l, int h, int q, double importance,
                                                                     int origin, int depth) {
  const std::vector<double> r = source_weights(l, h, q, origin, depth);
  const auto sd = safe_denom_ex(r, cfg_.beta);
  if (sd.floored) ++trips_;
  std::vector<std::pair<int, double>> out;
  if (sd.value == 0.0) {
    lost_ += importance;
    return out;
  }
  for (int s = 0; s <= q; ++s) {
    const double v = importance * r[s] / sd.value;
    if (v != 0.0) out.emplace_back(s, v);
  }
  return out;
}

std::vector<Child> Attributor::attention_k_dispatch(int l, int h, int q, int s, double source_importance,
                                                    int origin) {
  std::vector<Child> out;
  const bool kqv = cfg_.attn_key_side == AttnKeySide::kqv;
  const double wk = kqv ? cfg_.w_k : 1.0;
  const double wq = kqv ? cfg_.w_q : 0.0;
  const double wv = kqv ? cfg_.w_v : 0.0;

  auto emit = [&](const ShareBlock& b, int col, double w, int pos, EntryMode mode) {
    const double credit = w * source_importance;
    if (b.floored[col]) ++trips_;
    if (b.dead[col]) {
      lost_ += credit;
      return;
    }
    for (Eigen::Index j = 0; j < b.share.rows(); ++j) {
      const double v = credit * b.share(j, col);
      if (v != 0.0) out.push_back({static_cast<int>(j), pos, v, origin, mode});
    }
  };
  if (wk > 0.0) emit(key_shares(l, h, q), s, wk, s, EntryMode::K);
  if (wq > 0.0) emit(query_shares(l, h, q), s, wq, q, EntryMode::Q);
  if (wv > 0.0) emit(value_shares(l, h, s, origin), 0, wv, s, EntryMode::V);
  return out;
}

std::vector<Child> Attributor::mlp_dispatch(int l, int q, double importance, int origin, int depth) {
  std::vector<Child> out;
  if (cfg_.mlp_key_side == MlpKeySide::l2) {
    const VecD& norms = mlp_info(l, q).norms;
    const double total = norms.sum();
    if (total == 0.0) {
      lost_ += importance;
      return out;
    }
    for (Eigen::Index k = 0; k < norms.size(); ++k) {
      const double v = importance * norms(k) / total;
      if (v != 0.0) out.push_back({static_cast<int>(k), q, v, origin, EntryMode::mlp});
    }
    return out;
  }

  const VecD* transfer = nullptr;
  Transfer root;
  int child_origin = 0;
  if (depth > 0) {
    ensure_deep(l, q);
    const MlpInfo& info = mlp_info(l, q);
    lost_ += importance * info.deep_lost;
    trips_ += info.deep_trips;
    transfer = &info.deep_transfer;
    child_origin = mlp_deep_origin(l, q);
  } else {
    const MlpInfo& info = mlp_info(l, q);
    VecD d;
    if (cfg_.v_dispatch == VDispatch::aligned) {
      d = cap_.component(ComponentId::mlp(l).index(model_.config()), q).cast<double>().transpose();
    } else {
      d = direction(origin);
    }
    d.array() -= d.mean();
    const VecD value_proj = model_.w_out(l).cast<double>() * d;  // <W_out[j,:], d> per neuron
    const VecD r = info.gate.cwiseProduct(value_proj);
    const auto sd = safe_denom_ex(std::span<const double>(r.data(), r.size()), cfg_.beta);
    if (sd.floored) ++trips_;
    if (sd.value == 0.0) {
      lost_ += importance;
      return out;
    }
    root = mlp_transfer(l, q, r / sd.value);
    lost_ += importance * root.lost;
    trips_ += root.trips;
    transfer = &root.transfer;
    child_origin = mlp_root_origin(l);
    dirs_[child_origin] = mlp_child_direction(l, q, root.neuron_share);
    dir_ready_[child_origin] = 1;
  }
  for (Eigen::Index k = 0; k < transfer->size(); ++k) {
    const double v = importance * (*transfer)(k);
    if (v != 0.0) out.push_back({static_cast<int>(k), q, v, child_origin, EntryMode::mlp});
  }
  return out;
}

// ---- enumeration --------------------------------------------------------------------

void Attributor::expand(std::vector<Child>& out, int comp, int pos, double importance, int origin, int depth) {
  out.clear();
  const ComponentId c = ComponentId::from_index(comp, model_.config());
  if (c.is_head()) {
    for (const auto& [s, is] : attention_v_dispatch(c.layer(), c.head_index(), pos, importance, origin, depth)) {
      auto kids = attention_k_dispatch(c.layer(), c.head_index(), pos, s, is, origin);
      out.insert(out.end(), kids.begin(), kids.end());
    }
  } else if (c.is_mlp()) {
    out = mlp_dispatch(c.layer(), pos, importance, origin, depth);
  }
  // deterministic order, then merge frames that carry identical labels
  std::sort(out.begin(), out.end(), [](const Child& a, const Child& b) {
    return std::tie(a.component, a.position, a.mode, a.origin) < std::tie(b.component, b.position, b.mode, b.origin);
  });
  std::size_t w = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (w > 0 && out[w - 1].component == out[i].component && out[w - 1].position == out[i].position &&
        out[w - 1].mode == out[i].mode && out[w - 1].origin == out[i].origin) {
      out[w - 1].importance += out[i].importance;
    } else {
      out[w++] = out[i];
    }
  }
  out.resize(w);
}

namespace {

bool heap_less(double ka, std::uint64_t sa, double kb, std::uint64_t sb) {
  // "a ranks below b": smaller magnitude, or equal magnitude found later
  return ka < kb || (ka == kb && sa > sb);
}

}  // namespace

void Attributor::dfs(const Child& frame, int depth, std::vector<Hop>& stack, CreditLedger& ledger) {
  if (ledger.frames >= cfg_.max_frames) {
    ledger.truncated = true;
    ledger.pruned_credit += std::abs(frame.importance);
    return;
  }
  ++ledger.frames;
  const ModelConfig& mc = model_.config();
  stack.push_back({ComponentId::from_index(frame.component, mc), frame.position, frame.mode});

  if (frame.component == 0) {
    ledger.token_credit(frame.position) += frame.importance;
    const double key = std::abs(frame.importance);
    const std::uint64_t seq = seq_++;
    if (cfg_.top_k_paths > 0) {
      auto cmp = [](const HeapEntry& a, const HeapEntry& b) { return heap_less(b.key, b.seq, a.key, a.seq); };
      const bool full = heap_.size() >= cfg_.top_k_paths;
      if (!full || heap_less(heap_.front().key, heap_.front().seq, key, seq)) {
        Path p;
        p.hops.assign(stack.rbegin(), stack.rend());
        p.magnitude = frame.importance;
        p.terminal_position = ledger.position;
        if (full) {
          std::pop_heap(heap_.begin(), heap_.end(), cmp);
          heap_.back() = {key, seq, std::move(p)};
        } else {
          heap_.push_back({key, seq, std::move(p)});
        }
        std::push_heap(heap_.begin(), heap_.end(), cmp);
      }
    }
    stack.pop_back();
    return;
  }

  std::vector<Child> kids;
  expand(kids, frame.component, frame.position, frame.importance, frame.origin, depth);
  for (const Child& k : kids) {
    if (std::abs(k.importance) < cfg_.tau) {
      ledger.pruned_credit += std::abs(k.importance);
      continue;
    }
    dfs(k, depth + 1, stack, ledger);
  }
  stack.pop_back();
}

void Attributor::finish_paths(CreditLedger& ledger) {
  std::sort(heap_.begin(), heap_.end(),
            [](const HeapEntry& a, const HeapEntry& b) { return heap_less(b.key, b.seq, a.key, a.seq); });
  ledger.paths.clear();
  ledger.paths.reserve(heap_.size());
  for (auto& e : heap_) ledger.paths.push_back(std::move(e.path));
  heap_.clear();
  seq_ = 0;
  ledger.lost_credit = lost_;
  ledger.floor_trips = trips_;
}

VecD Attributor::root_importances(int pos) {
  const VecD d = target_direction(model_, cap_, cfg_.target, pos);
  return cap_.components[pos].cast<double>() * d;
}

CreditLedger Attributor::trace(int pos) {
  if (pos < 0 || pos >= n_) throw UsageError("trace position out of range");
  set_root_direction(target_direction(model_, cap_, cfg_.target, pos), pos);
  const VecD roots = cap_.components[pos].cast<double>() * dirs_[0];
  CreditLedger ledger;
  ledger.token_credit = VecD::Zero(n_);
  ledger.position = pos;
  ledger.root = "target";
  ledger.total_root_importance = roots.sum();
  std::vector<Hop> stack;
  for (Eigen::Index k = 0; k < roots.size(); ++k) {
    if (roots(k) == 0.0) continue;
    if (std::abs(roots(k)) < cfg_.tau) {
      ledger.pruned_credit += std::abs(roots(k));
      continue;
    }
    dfs({static_cast<int>(k), pos, roots(k), 0, EntryMode::root}, 0, stack, ledger);
  }
  finish_paths(ledger);
  return ledger;
}

CreditLedger Attributor::reroot(ComponentId component, int pos) {
  if (component.is_embedding()) throw UsageError("cannot reroot at the embedding: nothing is upstream of it");
  if (!component.valid_for(model_.config())) throw UsageError("reroot component out of range");
  if (pos < 0 || pos >= n_) throw UsageError("reroot position out of range");
  const int idx = component.index(model_.config());
  set_root_direction(cap_.component(idx, pos).cast<double>().transpose(), pos);
  CreditLedger ledger;
  ledger.token_credit = VecD::Zero(n_);
  ledger.position = pos;
  ledger.root = component.name();
  ledger.total_root_importance = 1.0;
  std::vector<Hop> stack;
  dfs({idx, pos, 1.0, 0, EntryMode::root}, 0, stack, ledger);
  finish_paths(ledger);
  return ledger;
}

// ---- exact aggregate ----------------------------------------------------------------

AggregateResult Attributor::propagate(const std::vector<Child>& roots, double total) {
  const ModelConfig& mc = model_.config();
  const int K = mc.n_components();
  const int O = n_origins();
  const double floor = cfg_.aggregate_floor;
  std::vector<RowMatD> credit(n_, RowMatD::Zero(K, O));
  AggregateResult res;
  res.token_credit = VecD::Zero(n_);
  res.total_root_importance = total;

  std::vector<Child> kids;
  for (const Child& r : roots) {
    if (r.component == 0) {
      res.token_credit(r.position) += r.importance;
      continue;
    }
    expand(kids, r.component, r.position, r.importance, r.origin, 0);
    for (const Child& k : kids) credit[k.position](k.component, k.origin) += k.importance;
  }

  const bool kqv = cfg_.attn_key_side == AttnKeySide::kqv;
  const double wk = kqv ? cfg_.w_k : 1.0;
  const double wq = kqv ? cfg_.w_q : 0.0;
  const double wv = kqv ? cfg_.w_v : 0.0;

  for (int k = K - 1; k >= 1; --k) {
    const ComponentId c = ComponentId::from_index(k, mc);
    RowMatD C(n_, O);
    for (int p = 0; p < n_; ++p) C.row(p) = credit[p].row(k);
    if (floor > 0.0) {
      for (Eigen::Index i = 0; i < C.size(); ++i) {
        if (std::abs(C.data()[i]) < floor) C.data()[i] = 0.0;
      }
    }
    if (C.isZero(0.0)) continue;

    if (c.is_mlp()) {
      const int l = c.layer();
      for (int q = 0; q < n_; ++q) {
        if (cfg_.mlp_key_side == MlpKeySide::l2) {
          const VecD& norms = mlp_info(l, q).norms;
          const double tot = norms.sum();
          for (int o = 0; o < O; ++o) {
            if (C(q, o) == 0.0) continue;
            if (tot == 0.0) {
              lost_ += C(q, o);
              continue;
            }
            credit[q].col(o).head(norms.size()) += (C(q, o) / tot) * norms;
          }
        } else {
          const double tot = C.row(q).sum();
          if (C.row(q).isZero(0.0)) continue;
          ensure_deep(l, q);
          const MlpInfo& info = mlp_info(l, q);
          lost_ += tot * info.deep_lost;
          trips_ += info.deep_trips;
          credit[q].col(mlp_deep_origin(l, q)).head(info.deep_transfer.size()) += tot * info.deep_transfer;
        }
      }
      continue;
    }

    const int l = c.layer(), h = c.head_index();
    const RowMatD& a = cap_.alpha(l, h);
    const int m = dec_.prefix(Site::attn(l));
    RowMatD T = RowMatD::Zero(n_, O);  // V-branch source totals
    for (int q = 0; q < n_; ++q) {
      if (C.row(q).isZero(0.0)) continue;
      const auto sd = safe_denom_ex(std::span<const double>(a.row(q).data(), q + 1), cfg_.beta);
      if (sd.floored) ++trips_;
      if (sd.value == 0.0) {
        lost_ += C.row(q).sum();
        continue;
      }
      const ShareBlock* kb = wk > 0.0 ? &key_shares(l, h, q) : nullptr;
      const ShareBlock* qb = wq > 0.0 ? &query_shares(l, h, q) : nullptr;
      for (int s = 0; s <= q; ++s) {
        if (a(q, s) == 0.0) continue;
        const Eigen::RowVectorXd is = C.row(q) * (a(q, s) / sd.value);
        if (kb) {
          if (kb->floored[s]) ++trips_;
          if (kb->dead[s]) lost_ += wk * is.sum();
          else credit[s].topRows(m).noalias() += (wk * kb->share.col(s)) * is;
        }
        if (qb) {
          if (qb->floored[s]) ++trips_;
          if (qb->dead[s]) lost_ += wq * is.sum();
          else credit[q].topRows(m).noalias() += (wq * qb->share.col(s)) * is;
        }
        if (wv > 0.0) T.row(s) += is;
      }
    }
    if (wv > 0.0) {
      for (int s = 0; s < n_; ++s) {
        for (int o = 0; o < O; ++o) {
          if (T(s, o) == 0.0) continue;
          const ShareBlock& vb = value_shares(l, h, s, o);
          if (vb.floored[0]) ++trips_;
          if (vb.dead[0]) lost_ += wv * T(s, o);
          else credit[s].col(o).head(m) += (wv * T(s, o)) * vb.share.col(0);
        }
      }
    }
  }
  for (int p = 0; p < n_; ++p) res.token_credit(p) += credit[p].row(0).sum();
  res.lost_credit = lost_;
  res.floor_trips = trips_;
  return res;
}

AggregateResult Attributor::aggregate_token_credit(int pos) {
  if (pos < 0 || pos >= n_) throw UsageError("position out of range");
  set_root_direction(target_direction(model_, cap_, cfg_.target, pos), pos);
  const VecD roots = cap_.components[pos].cast<double>() * dirs_[0];
  std::vector<Child> frames;
  for (Eigen::Index k = 0; k < roots.size(); ++k) {
    if (roots(k) != 0.0) frames.push_back({static_cast<int>(k), pos, roots(k), 0, EntryMode::root});
  }
  return propagate(frames, roots.sum());
}

AggregateResult Attributor::reroot_aggregate(ComponentId component, int pos) {
  if (component.is_embedding()) throw UsageError("cannot reroot at the embedding: nothing is upstream of it");
  const int idx = component.index(model_.config());
  set_root_direction(cap_.component(idx, pos).cast<double>().transpose(), pos);
  return propagate({{idx, pos, 1.0, 0, EntryMode::root}}, 1.0);
}

// ---- ranking ------------------------------------------------------------------------

std::vector<std::pair<ComponentId, double>> upstream_head_scores(const CreditLedger& ledger,
                                                                 std::optional<EntryMode> mode, int layer_floor) {
  std::map<ComponentId, double> score;
  for (const Path& p : ledger.paths) {
    if (p.hops.size() < 2) continue;
    if (mode && p.hops[p.hops.size() - 2].mode != *mode) continue;
    std::vector<ComponentId> seen;
    for (std::size_t i = 0; i + 1 < p.hops.size(); ++i) {
      const ComponentId& c = p.hops[i].component;
      if (!c.is_head() || c.layer() < layer_floor) continue;
      if (std::find(seen.begin(), seen.end(), c) != seen.end()) continue;
      seen.push_back(c);
      score[c] += std::abs(p.magnitude);
    }
  }
  std::vector<std::pair<ComponentId, double>> out(score.begin(), score.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::vector<RoleRank> rank_upstream(const CreditLedger& ledger, std::optional<EntryMode> mode, int layer_floor,
                                    const RoleTable& roles, int found_within) {
  if (ledger.paths.empty()) throw UsageError("rank_upstream: ledger has no paths");
  const auto ranked = upstream_head_scores(ledger, mode, layer_floor);
  std::vector<RoleRank> out;
  for (const auto& [role, heads] : roles) {
    RoleRank rr{role, false, 0};
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (std::find(heads.begin(), heads.end(), ranked[i].first) != heads.end()) {
        rr.rank = static_cast<int>(i) + 1;
        rr.found = rr.rank <= found_within;
        break;
      }
    }
    out.push_back(rr);
  }
  return out;
}

}  // namespace unpack
