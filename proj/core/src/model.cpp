#include "unpack/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "unpack/container.hpp"
#include "unpack/errors.hpp"

namespace unpack {

std::vector<TensorSpec> expected_tensors(const ModelConfig& cfg) {
  const std::int64_t d = cfg.d_model, H = cfg.n_heads, dh = cfg.d_head, dm = cfg.d_mlp, V = cfg.vocab_size;
  std::vector<TensorSpec> specs;
  specs.push_back({"embed.weight", {V, d}});
  if (cfg.position_scheme == PositionScheme::learned) specs.push_back({"pos_embed.weight", {cfg.n_ctx, d}});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    specs.push_back({p + "ln1.weight", {d}});
    specs.push_back({p + "ln1.bias", {d}});
    for (const char* w : {"W_Q", "W_K", "W_V"}) specs.push_back({p + "attn." + w, {H, d, dh}});
    for (const char* b : {"b_Q", "b_K", "b_V"}) specs.push_back({p + "attn." + b, {H, dh}});
    specs.push_back({p + "attn.W_O", {H, dh, d}});
    specs.push_back({p + "attn.b_O", {d}});
    specs.push_back({p + "ln2.weight", {d}});
    specs.push_back({p + "ln2.bias", {d}});
    specs.push_back({p + "mlp.W_in", {d, dm}});
    specs.push_back({p + "mlp.b_in", {dm}});
    specs.push_back({p + "mlp.W_out", {dm, d}});
    specs.push_back({p + "mlp.b_out", {d}});
  }
  specs.push_back({"ln_final.weight", {d}});
  specs.push_back({"ln_final.bias", {d}});
  if (!cfg.tied_embeddings) specs.push_back({"unembed.weight", {V, d}});
  specs.push_back({"unembed.bias", {V}, true});
  return specs;
}

Model::Model(ModelConfig cfg, std::map<std::string, Tensor> tensors, std::shared_ptr<const Tokenizer> tokenizer)
    : cfg_(cfg), tensors_(std::move(tensors)), tokenizer_(std::move(tokenizer)) {
  cfg_.validate();
  std::set<std::string> known;
  for (const auto& spec : expected_tensors(cfg_)) {
    known.insert(spec.name);
    auto it = tensors_.find(spec.name);
    if (it == tensors_.end()) {
      if (spec.optional) continue;
      throw ModelError("missing tensor " + spec.name);
    }
    if (it->second.shape != spec.shape) {
      throw ModelError("shape mismatch for tensor " + spec.name + ": expected [" + shape_string(spec.shape) +
                       "], found [" + shape_string(it->second.shape) + "]");
    }
    if (it->second.data.size() != Tensor::numel(spec.shape)) {
      throw ModelError("tensor " + spec.name + " has inconsistent storage");
    }
  }
  for (const auto& [name, t] : tensors_) {
    if (!known.contains(name)) throw ModelError("unexpected tensor " + name + " for this config");
  }
  if (tokenizer_ && tokenizer_->vocab_size() > cfg_.vocab_size) {
    throw ModelError("tokenizer has " + std::to_string(tokenizer_->vocab_size()) + " ids but vocab_size is " +
                     std::to_string(cfg_.vocab_size));
  }

  auto ptr = [&](const std::string& n) { return tensors_.at(n).data.data(); };
  embed_ = ptr("embed.weight");
  if (cfg_.position_scheme == PositionScheme::learned) pos_ = ptr("pos_embed.weight");
  unembed_ = cfg_.tied_embeddings ? embed_ : ptr("unembed.weight");
  if (has("unembed.bias")) unembed_bias_ = ptr("unembed.bias");
  lnf_w_ = ptr("ln_final.weight");
  lnf_b_ = ptr("ln_final.bias");
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    layers_.push_back(LayerPtrs{
        ptr(p + "ln1.weight"), ptr(p + "ln1.bias"), ptr(p + "ln2.weight"), ptr(p + "ln2.bias"),
        ptr(p + "attn.W_Q"), ptr(p + "attn.W_K"), ptr(p + "attn.W_V"), ptr(p + "attn.W_O"),
        ptr(p + "attn.b_Q"), ptr(p + "attn.b_K"), ptr(p + "attn.b_V"), ptr(p + "attn.b_O"),
        ptr(p + "mlp.W_in"), ptr(p + "mlp.b_in"), ptr(p + "mlp.W_out"), ptr(p + "mlp.b_out")});
  }

  if (cfg_.position_scheme == PositionScheme::rotary) {
    const int half = cfg_.rotary_dims() / 2;
    rot_cos_.resize(cfg_.n_ctx, half);
    rot_sin_.resize(cfg_.n_ctx, half);
    for (int i = 0; i < half; ++i) {
      // f32 frequency as in the reference GPT-NeoX implementation
      const float inv = 1.0f / std::pow(static_cast<float>(cfg_.rotary_base),
                                        static_cast<float>(2 * i) / static_cast<float>(2 * half));
      for (int pos = 0; pos < cfg_.n_ctx; ++pos) {
        const float angle = static_cast<float>(pos) * inv;
        rot_cos_(pos, i) = static_cast<float>(std::cos(static_cast<double>(angle)));
        rot_sin_(pos, i) = static_cast<float>(std::sin(static_cast<double>(angle)));
      }
    }
  }
}

const Tensor& Model::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ModelError("no tensor named " + name);
  return it->second;
}

ConstMatMapF Model::embed() const { return ConstMatMapF(embed_, cfg_.vocab_size, cfg_.d_model); }

ConstMatMapF Model::pos_embed() const {
  if (!pos_) throw ModelError("model has no learned positional table");
  return ConstMatMapF(pos_, cfg_.n_ctx, cfg_.d_model);
}

ConstMatMapF Model::unembed() const { return ConstMatMapF(unembed_, cfg_.vocab_size, cfg_.d_model); }

ConstMatMapF Model::head_in(const float* base, int h) const {
  return ConstMatMapF(base + static_cast<std::size_t>(h) * cfg_.d_model * cfg_.d_head, cfg_.d_model, cfg_.d_head);
}

ConstMatMapF Model::w_o(int l, int h) const {
  return ConstMatMapF(layers_[l].w_o + static_cast<std::size_t>(h) * cfg_.d_head * cfg_.d_model, cfg_.d_head,
                      cfg_.d_model);
}

ConstMatMapF Model::w_in(int l) const { return ConstMatMapF(layers_[l].w_in, cfg_.d_model, cfg_.d_mlp); }
ConstMatMapF Model::w_out(int l) const { return ConstMatMapF(layers_[l].w_out, cfg_.d_mlp, cfg_.d_model); }

double Model::activation(double x) const {
  switch (cfg_.activation) {
    case Activation::gelu: {
      constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
      return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
    }
    case Activation::gelu_erf: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double Model::activation_slope_at_zero() const { return 0.5; }

std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& cfg) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::vector<std::pair<std::string, std::string>> f = {
      {"format", "unpack-model/1"},
      {"n_layers", std::to_string(cfg.n_layers)},
      {"n_heads", std::to_string(cfg.n_heads)},
      {"d_model", std::to_string(cfg.d_model)},
      {"d_head", std::to_string(cfg.d_head)},
      {"d_mlp", std::to_string(cfg.d_mlp)},
      {"vocab_size", std::to_string(cfg.vocab_size)},
      {"n_ctx", std::to_string(cfg.n_ctx)},
      {"block_layout", std::string(to_string(cfg.block_layout))},
      {"position_scheme", std::string(to_string(cfg.position_scheme))},
      {"activation", std::string(to_string(cfg.activation))},
      {"ln_epsilon", num(cfg.ln_epsilon)},
      {"tied_embeddings", cfg.tied_embeddings ? "true" : "false"},
      {"bos_token_id", std::to_string(cfg.bos_token_id)},
  };
  if (cfg.position_scheme == PositionScheme::rotary) {
    f.emplace_back("rotary_fraction", num(cfg.rotary_fraction));
    f.emplace_back("rotary_base", num(cfg.rotary_base));
  }
  return f;
}

ModelConfig config_from_fields(const std::vector<std::pair<std::string, std::string>>& fields) {
  ModelConfig cfg;
  auto as_int = [](const std::string& k, const std::string& v) {
    try {
      std::size_t used = 0;
      int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ModelError("manifest field " + k + ": expected an integer, got '" + v + "'");
    }
  };
  auto as_real = [](const std::string& k, const std::string& v) {
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ModelError("manifest field " + k + ": expected a number, got '" + v + "'");
    }
  };
  std::set<std::string> seen;
  for (const auto& [k, v] : fields) {
    seen.insert(k);
    if (k == "format") {
      if (v != "unpack-model/1") throw ModelError("unsupported container format '" + v + "'");
    } else if (k == "n_layers") cfg.n_layers = as_int(k, v);
    else if (k == "n_heads") cfg.n_heads = as_int(k, v);
    else if (k == "d_model") cfg.d_model = as_int(k, v);
    else if (k == "d_head") cfg.d_head = as_int(k, v);
    else if (k == "d_mlp") cfg.d_mlp = as_int(k, v);
    else if (k == "vocab_size") cfg.vocab_size = as_int(k, v);
    else if (k == "n_ctx") cfg.n_ctx = as_int(k, v);
    else if (k == "block_layout") cfg.block_layout = parse_block_layout(v);
    else if (k == "position_scheme") cfg.position_scheme = parse_position_scheme(v);
    else if (k == "activation") cfg.activation = parse_activation(v);
    else if (k == "ln_epsilon") cfg.ln_epsilon = as_real(k, v);
    else if (k == "tied_embeddings") cfg.tied_embeddings = (v == "true" || v == "1");
    else if (k == "bos_token_id") cfg.bos_token_id = as_int(k, v);
    else if (k == "rotary_fraction") cfg.rotary_fraction = as_real(k, v);
    else if (k == "rotary_base") cfg.rotary_base = as_real(k, v);
  }
  for (const char* required : {"n_layers", "n_heads", "d_model", "d_head", "d_mlp", "vocab_size"}) {
    if (!seen.contains(required)) throw ModelError(std::string("manifest is missing field ") + required);
  }
  cfg.validate();
  return cfg;
}

Model load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ModelError("model directory " + dir.string() + " does not exist");
  Container c = read_container(dir / "manifest", dir / "weights.bin");
  ModelConfig cfg = config_from_fields(c.fields);
  std::shared_ptr<const Tokenizer> tok;
  if (std::filesystem::exists(dir / "vocab") || std::filesystem::exists(dir / "merges")) {
    tok = std::make_shared<const Tokenizer>(Tokenizer::load(dir / "vocab", dir / "merges"));
  } else {
    throw ModelError("model directory " + dir.string() + " has no vocab/merges files");
  }
  return Model(cfg, std::move(c.tensors), std::move(tok));
}

void save_model(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, const Tensor*>> ordered;
  for (const auto& spec : expected_tensors(model.config())) {
    if (model.has(spec.name)) ordered.emplace_back(spec.name, &model.tensor(spec.name));
  }
  write_container(dir / "manifest", dir / "weights.bin", config_fields(model.config()), ordered);
  if (model.tokenizer()) model.tokenizer()->save(dir / "vocab", dir / "merges");
}

}  // namespace unpack
