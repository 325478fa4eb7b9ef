#include "unpack/forward.hpp"

#include <cmath>
#include <limits>

#include "unpack/errors.hpp"

namespace unpack {

double ForwardCapture::ln_sigma(Site site, int pos) const {
  return std::sqrt(ln_var(site.index(), pos) + config.ln_epsilon);
}

void apply_rotary(const Model& model, Eigen::Ref<RowMatF> x) {
  const int half = model.config().rotary_dims() / 2;
  if (half == 0) return;
  const auto& cs = model.rotary_cos();
  const auto& sn = model.rotary_sin();
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    for (int i = 0; i < half; ++i) {
      const float a = x(p, i), b = x(p, i + half);
      x(p, i) = a * cs(p, i) - b * sn(p, i);
      x(p, i + half) = b * cs(p, i) + a * sn(p, i);
    }
  }
}

namespace {

struct LnResult {
  RowMatF y;
  VecD mean, var;
};

LnResult layer_norm(const RowMatF& x, ConstVecMapF w, ConstVecMapF b, double eps) {
  const Eigen::Index n = x.rows(), d = x.cols();
  LnResult r{RowMatF(n, d), VecD(n), VecD(n)};
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto row = x.row(p).cast<double>();
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    r.mean(p) = mu;
    r.var(p) = var;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Eigen::Index i = 0; i < d; ++i) {
      r.y(p, i) = static_cast<float>((static_cast<double>(x(p, i)) - mu) * inv * w(i) + b(i));
    }
  }
  return r;
}

}  // namespace

ForwardCapture forward(const Model& model, std::span<const int> token_ids, CaptureFlags flags,
                       const LnInputHook& hook) {
  const ModelConfig& cfg = model.config();
  const int n = static_cast<int>(token_ids.size());
  if (n == 0) throw UsageError("forward: empty token sequence");
  if (n > cfg.n_ctx) {
    throw UsageError("forward: " + std::to_string(n) + " positions exceed the context length " +
                     std::to_string(cfg.n_ctx));
  }
  for (int id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size) throw UsageError("forward: token id " + std::to_string(id) + " out of vocabulary");
  }

  const int L = cfg.n_layers, H = cfg.n_heads, d = cfg.d_model, dh = cfg.d_head;
  const int K = cfg.n_components();
  const int S = Site::count(cfg);

  ForwardCapture cap;
  cap.config = cfg;
  cap.flags = flags;
  cap.token_ids.assign(token_ids.begin(), token_ids.end());
  if (flags.components) cap.components.assign(n, RowMatF::Zero(K, d));
  cap.site_bias.assign(S, VecD::Zero(d));
  if (flags.ln_stats) {
    cap.ln_mean.resize(S, n);
    cap.ln_var.resize(S, n);
  }
  if (flags.attention) {
    cap.attn.resize(L * H);
    cap.q_rot.resize(L * H);
    cap.k_rot.resize(L * H);
  }
  if (flags.mlp_pre) cap.mlp_pre.resize(L);
  if (flags.residuals) cap.residuals.resize(S);

  RowMatF x(n, d);
  const auto embed = model.embed();
  for (int p = 0; p < n; ++p) {
    x.row(p) = embed.row(token_ids[p]);
    if (cfg.position_scheme == PositionScheme::learned) x.row(p) += model.pos_embed().row(p);
  }
  if (flags.components) {
    for (int p = 0; p < n; ++p) cap.components[p].row(0) = x.row(p);
  }

  auto run_ln = [&](Site site, const RowMatF& trunk, ConstVecMapF w, ConstVecMapF b) {
    const RowMatF* input = &trunk;
    RowMatF edited;
    if (hook) {
      edited = trunk;
      for (int p = 0; p < n; ++p) hook(site, p, edited.row(p));
      input = &edited;
    }
    LnResult r = layer_norm(*input, w, b, cfg.ln_epsilon);
    if (flags.ln_stats) {
      cap.ln_mean.row(site.index()) = r.mean.transpose();
      cap.ln_var.row(site.index()) = r.var.transpose();
    }
    if (flags.residuals) cap.residuals[site.index()] = *input;
    return std::move(r.y);
  };

  VecD bias_acc = VecD::Zero(d);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  for (int l = 0; l < L; ++l) {
    cap.site_bias[Site::attn(l).index()] = bias_acc;
    const RowMatF y1 = run_ln(Site::attn(l), x, model.ln1_w(l), model.ln1_b(l));

    RowMatF attn_out = RowMatF::Zero(n, d);
    VecD attn_bias = model.b_o(l).cast<double>();
    for (int h = 0; h < H; ++h) {
      RowMatF q = y1 * model.w_q(l, h);
      RowMatF k = y1 * model.w_k(l, h);
      RowMatF v = y1 * model.w_v(l, h);
      q.rowwise() += model.b_q(l, h).transpose();
      k.rowwise() += model.b_k(l, h).transpose();
      if (cfg.position_scheme == PositionScheme::rotary) {
        apply_rotary(model, q);
        apply_rotary(model, k);
      }
      const RowMatF scores = (q * k.transpose()) * scale;
      RowMatD alpha = RowMatD::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) mx = std::max(mx, static_cast<double>(scores(i, j)));
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          alpha(i, j) = std::exp(static_cast<double>(scores(i, j)) - mx);
          z += alpha(i, j);
        }
        alpha.row(i).head(i + 1) /= z;
      }
      const RowMatF head_out = (alpha.cast<float>() * v) * model.w_o(l, h);
      attn_out += head_out;
      attn_bias += (model.b_v(l, h).transpose().cast<double>() * model.w_o(l, h).cast<double>()).transpose();
      if (flags.components) {
        const int idx = ComponentId::head(l, h).index(cfg);
        for (int p = 0; p < n; ++p) cap.components[p].row(idx) = head_out.row(p);
      }
      if (flags.attention) {
        cap.attn[l * H + h] = std::move(alpha);
        cap.q_rot[l * H + h] = q.cast<double>();
        cap.k_rot[l * H + h] = k.cast<double>();
      }
    }
    attn_out.rowwise() += attn_bias.cast<float>().transpose();

    RowMatF y2;
    if (cfg.block_layout == BlockLayout::sequential) {
      x += attn_out;
      bias_acc += attn_bias;
      cap.site_bias[Site::mlp(l).index()] = bias_acc;
      y2 = run_ln(Site::mlp(l), x, model.ln2_w(l), model.ln2_b(l));
    } else {
      cap.site_bias[Site::mlp(l).index()] = bias_acc;
      y2 = run_ln(Site::mlp(l), x, model.ln2_w(l), model.ln2_b(l));
      x += attn_out;
      bias_acc += attn_bias;
    }

    RowMatF pre = y2 * model.w_in(l);
    pre.rowwise() += model.b_in(l).transpose();
    RowMatF act(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      act.data()[i] = static_cast<float>(model.activation(pre.data()[i]));
    }
    const RowMatF mlp_out = act * model.w_out(l);
    if (flags.components) {
      const int idx = ComponentId::mlp(l).index(cfg);
      for (int p = 0; p < n; ++p) cap.components[p].row(idx) = mlp_out.row(p);
    }
    if (flags.mlp_pre) cap.mlp_pre[l] = pre.cast<double>();
    x += mlp_out;
    x.rowwise() += model.b_out(l).transpose();
    bias_acc += model.b_out(l).cast<double>();
  }

  const Site fin = Site::final_ln(cfg);
  cap.site_bias[fin.index()] = bias_acc;
  const RowMatF yf = run_ln(fin, x, model.lnf_w(), model.lnf_b());
  if (flags.logits) {
    cap.logits = yf * model.unembed().transpose();
    if (const float* ub = model.unembed_bias()) {
      cap.logits.rowwise() += ConstVecMapF(ub, cfg.vocab_size).transpose();
    }
  }
  return cap;
}

std::vector<std::pair<ComponentId, VecD>> residual_components(const ForwardCapture& capture, Site site, int pos) {
  const ModelConfig& cfg = capture.config;
  if (!site.valid_for(cfg)) throw UsageError("residual_components: site " + site.name() + " out of range");
  if (pos < 0 || pos >= capture.n_pos()) throw UsageError("residual_components: position out of range");
  if (!capture.flags.components) throw UsageError("residual_components: capture has no components");
  const int m = components_before(cfg, site);
  std::vector<std::pair<ComponentId, VecD>> out;
  out.reserve(m);
  for (int k = 0; k < m; ++k) {
    out.emplace_back(ComponentId::from_index(k, cfg), capture.component(k, pos).cast<double>().transpose());
  }
  return out;
}

}  // namespace unpack
