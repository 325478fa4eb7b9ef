#include "unpack/decomposition.hpp"

#include <cmath>

#include "unpack/errors.hpp"

namespace unpack {

VecD marginal_normalize(const VecD& v, double variance, const VecD& ln_weight, double eps) {
  const double inv = 1.0 / std::sqrt(variance + eps);
  return ((v.array() - v.mean()) * ln_weight.array() * inv).matrix();
}

double score_attn(std::span<const double> contribs) {
  if (contribs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : contribs) mean += v;
  mean /= static_cast<double>(contribs.size());
  double ss = 0.0;
  for (double v : contribs) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(contribs.size()));
}

double score_mlp(std::span<const double> contribs) {
  double ss = 0.0;
  for (double v : contribs) ss += v * v;
  return std::sqrt(ss);
}

Decomposer::Decomposer(const Model& model, const ForwardCapture& capture) : model_(model), cap_(capture) {
  if (!cap_.flags.components || !cap_.flags.ln_stats) {
    throw UsageError("decomposition needs a capture with components and LN statistics");
  }
  const ModelConfig& cfg = config();
  centered_.reserve(cap_.n_pos());
  for (int p = 0; p < cap_.n_pos(); ++p) {
    RowMatD c = cap_.components[p].cast<double>();
    c.colwise() -= c.rowwise().mean();
    centered_.push_back(std::move(c));
  }
  ln_w_.resize(Site::count(cfg));
  ln_b_.resize(Site::count(cfg));
  for (int l = 0; l < cfg.n_layers; ++l) {
    ln_w_[Site::attn(l).index()] = model.ln1_w(l).cast<double>();
    ln_b_[Site::attn(l).index()] = model.ln1_b(l).cast<double>();
    ln_w_[Site::mlp(l).index()] = model.ln2_w(l).cast<double>();
    ln_b_[Site::mlp(l).index()] = model.ln2_b(l).cast<double>();
  }
  ln_w_[Site::final_ln(cfg).index()] = model.lnf_w().cast<double>();
  ln_b_[Site::final_ln(cfg).index()] = model.lnf_b().cast<double>();
}

double Decomposer::sigma(Site site, int pos) const { return cap_.ln_sigma(site, pos); }

RowMatD Decomposer::normalized(Site site, int pos) const {
  const int m = prefix(site);
  const VecD scale = ln_weight(site) / sigma(site, pos);
  return centered_[pos].topRows(m) * scale.asDiagonal();
}

VecD Decomposer::normalized_bias(Site site, int pos) const {
  return marginal_normalize(cap_.site_bias[site.index()], cap_.ln_var(site.index(), pos), ln_weight(site),
                            config().ln_epsilon);
}

VecD Decomposer::ln_output(Site site, int pos) const {
  VecD y = normalized(site, pos).colwise().sum().transpose();
  return y + normalized_bias(site, pos) + ln_bias(site);
}

VecD Decomposer::fold_input(Site site, int pos, const VecD& g) const {
  return ln_weight(site).cwiseProduct(g) / sigma(site, pos);
}

VecD Decomposer::rotate_back(const VecD& v, int pos) const {
  if (config().position_scheme != PositionScheme::rotary) return v;
  const int half = config().rotary_dims() / 2;
  VecD out = v;
  for (int i = 0; i < half; ++i) {
    const double c = model_.rotary_cos()(pos, i), s = model_.rotary_sin()(pos, i);
    out(i) = v(i) * c + v(i + half) * s;
    out(i + half) = v(i + half) * c - v(i) * s;
  }
  return out;
}

namespace {

VecD rotate_forward(const Model& model, const VecD& v, int pos) {
  if (model.config().position_scheme != PositionScheme::rotary) return v;
  const int half = model.config().rotary_dims() / 2;
  VecD out = v;
  for (int i = 0; i < half; ++i) {
    const double c = model.rotary_cos()(pos, i), s = model.rotary_sin()(pos, i);
    out(i) = v(i) * c - v(i + half) * s;
    out(i + half) = v(i + half) * c + v(i) * s;
  }
  return out;
}

}  // namespace

const RowMatD& Decomposer::q_full(int l, int h) const {
  auto it = q_cache_.find({l, h});
  if (it != q_cache_.end()) return it->second;
  const RowMatD w = model_.w_q(l, h).cast<double>();
  const VecD b = model_.b_q(l, h).cast<double>();
  RowMatD out(n_pos(), config().d_head);
  for (int p = 0; p < n_pos(); ++p) {
    VecD v = w.transpose() * ln_output(Site::attn(l), p) + b;
    out.row(p) = rotate_forward(model_, v, p).transpose();
  }
  return q_cache_.emplace(std::make_pair(l, h), std::move(out)).first->second;
}

const RowMatD& Decomposer::k_full(int l, int h) const {
  auto it = k_cache_.find({l, h});
  if (it != k_cache_.end()) return it->second;
  const RowMatD w = model_.w_k(l, h).cast<double>();
  const VecD b = model_.b_k(l, h).cast<double>();
  RowMatD out(n_pos(), config().d_head);
  for (int p = 0; p < n_pos(); ++p) {
    VecD v = w.transpose() * ln_output(Site::attn(l), p) + b;
    out.row(p) = rotate_forward(model_, v, p).transpose();
  }
  return k_cache_.emplace(std::make_pair(l, h), std::move(out)).first->second;
}

double Decomposer::attn_logit(int l, int h, int q, int s) const {
  return q_full(l, h).row(q).dot(k_full(l, h).row(s)) / std::sqrt(static_cast<double>(config().d_head));
}

VecD Decomposer::key_contribs(int l, int h, int q, int s) const {
  if (s > q) throw UsageError("key_contribs: source after query");
  const Site site = Site::attn(l);
  const VecD u = rotate_back(q_full(l, h).row(q).transpose(), s) / std::sqrt(static_cast<double>(config().d_head));
  const VecD g = model_.w_k(l, h).cast<double>() * u;
  return centered_[s].topRows(prefix(site)) * fold_input(site, s, g);
}

double Decomposer::key_bias_term(int l, int h, int q, int s) const {
  const Site site = Site::attn(l);
  const VecD u = rotate_back(q_full(l, h).row(q).transpose(), s) / std::sqrt(static_cast<double>(config().d_head));
  const VecD g = model_.w_k(l, h).cast<double>() * u;
  return (ln_bias(site) + normalized_bias(site, s)).dot(g) + model_.b_k(l, h).cast<double>().dot(u);
}

VecD Decomposer::query_contribs(int l, int h, int q, int s) const {
  if (s > q) throw UsageError("query_contribs: source after query");
  const Site site = Site::attn(l);
  const VecD u = rotate_back(k_full(l, h).row(s).transpose(), q) / std::sqrt(static_cast<double>(config().d_head));
  const VecD g = model_.w_q(l, h).cast<double>() * u;
  return centered_[q].topRows(prefix(site)) * fold_input(site, q, g);
}

double Decomposer::query_bias_term(int l, int h, int q, int s) const {
  const Site site = Site::attn(l);
  const VecD u = rotate_back(k_full(l, h).row(s).transpose(), q) / std::sqrt(static_cast<double>(config().d_head));
  const VecD g = model_.w_q(l, h).cast<double>() * u;
  return (ln_bias(site) + normalized_bias(site, q)).dot(g) + model_.b_q(l, h).cast<double>().dot(u);
}

RowMatD Decomposer::key_directions(int l, int h, int q) const {
  const Site site = Site::attn(l);
  const double inv = 1.0 / std::sqrt(static_cast<double>(config().d_head));
  const RowMatD wk = model_.w_k(l, h).cast<double>();
  const VecD qv = q_full(l, h).row(q).transpose();
  RowMatD g(config().d_model, q + 1);
  for (int s = 0; s <= q; ++s) g.col(s) = fold_input(site, s, wk * (rotate_back(qv, s) * inv));
  return g;
}

RowMatD Decomposer::key_contribs_all(int l, int h, int q) const {
  const int m = prefix(Site::attn(l));
  const RowMatD g = key_directions(l, h, q);
  RowMatD out(m, q + 1);
  for (int s = 0; s <= q; ++s) out.col(s) = centered_[s].topRows(m) * g.col(s);
  return out;
}

RowMatD Decomposer::query_contribs_all(int l, int h, int q) const {
  const Site site = Site::attn(l);
  const int m = prefix(site);
  const double inv = 1.0 / std::sqrt(static_cast<double>(config().d_head));
  const RowMatD wq = model_.w_q(l, h).cast<double>();
  const RowMatD& kf = k_full(l, h);
  // all g vectors first, then one product against the components at q
  RowMatD g(config().d_model, q + 1);
  for (int s = 0; s <= q; ++s) g.col(s) = fold_input(site, q, wq * (rotate_back(kf.row(s).transpose(), q) * inv));
  return centered_[q].topRows(m) * g;
}

RowMatD Decomposer::value_vectors(int l, int h, int s) const {
  const RowMatD wv = model_.w_v(l, h).cast<double>();
  const RowMatD wo = model_.w_o(l, h).cast<double>();
  RowMatD v = (normalized(Site::attn(l), s) * wv) * wo;
  v.colwise() -= v.rowwise().mean();
  return v;
}

VecD Decomposer::value_projections(int l, int h, int s, const VecD& dir) const {
  const Site site = Site::attn(l);
  const VecD dc = dir.array() - dir.mean();
  const VecD e = model_.w_v(l, h).cast<double>() * (model_.w_o(l, h).cast<double>() * dc);
  return centered_[s].topRows(prefix(site)) * fold_input(site, s, e);
}

VecD Decomposer::value_sum(int l, int h, int s) const {
  const VecD x = normalized(Site::attn(l), s).colwise().sum().transpose();
  const VecD wv = model_.w_v(l, h).cast<double>().transpose() * x;
  VecD u = model_.w_o(l, h).cast<double>().transpose() * wv;
  return u.array() - u.mean();
}

VecD Decomposer::attn_output(int l, int q) const {
  if (!cap_.flags.attention) throw UsageError("attn_output: capture has no attention weights");
  VecD out = VecD::Zero(config().d_model);
  for (int h = 0; h < config().n_heads; ++h) {
    const RowMatD& a = cap_.alpha(l, h);
    for (int s = 0; s <= q; ++s) {
      if (a(q, s) != 0.0) out += a(q, s) * value_sum(l, h, s);
    }
  }
  return out;
}

RowMatD Decomposer::mlp_input_matrix(int l, int q) const {
  const Site site = Site::mlp(l);
  const VecD scale = ln_weight(site) / sigma(site, q);
  return scale.asDiagonal() * model_.w_in(l).cast<double>();
}

RowMatD Decomposer::mlp_contribs(int l, int q) const {
  return centered_[q].topRows(prefix(Site::mlp(l))) * mlp_input_matrix(l, q);
}

VecD Decomposer::mlp_bias_term(int l, int q) const {
  const Site site = Site::mlp(l);
  const VecD x = ln_bias(site) + normalized_bias(site, q);
  return model_.w_in(l).cast<double>().transpose() * x;
}

}  // namespace unpack
