#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "langsamp/autograd.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

// Pre-norm transformer encoder with learned absolute positions and a
// masked-LM head. When enabled, learnable language and script rows are added
// to the FINAL hidden states right before the head — the encoder itself never
// sees language or script ids, so downstream use needs neither.
struct ModelConfig {
  int vocab_size = 0;
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int ffn_dim = 128;
  int max_seq_len = 128;
  int num_languages = 1;
  int num_scripts = 1;
  bool use_lang_emb = true;
  bool use_script_emb = true;
  bool tie_head = false;
  double init_std = 0.02;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < 6) throw ConfigError("model: vocab_size must exceed the special tokens");
    if (hidden_dim < 1 || num_layers < 1 || num_heads < 1 || ffn_dim < 1 || max_seq_len < 1)
      throw ConfigError("model: dimensions must be positive");
    if (hidden_dim % num_heads != 0)
      throw ConfigError("model: hidden_dim must be divisible by num_heads");
    if (num_languages < 1 || num_scripts < 1)
      throw ConfigError("model: num_languages and num_scripts must be positive");
    if (!(init_std >= 0.0)) throw ConfigError("model: init_std must be nonnegative");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("model: layer_norm_eps must be positive");
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size},
            {"hidden_dim", hidden_dim},
            {"num_layers", num_layers},
            {"num_heads", num_heads},
            {"ffn_dim", ffn_dim},
            {"max_seq_len", max_seq_len},
            {"num_languages", num_languages},
            {"num_scripts", num_scripts},
            {"use_lang_emb", use_lang_emb},
            {"use_script_emb", use_script_emb},
            {"tie_head", tie_head},
            {"init_std", init_std},
            {"layer_norm_eps", layer_norm_eps},
            {"seed", seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.num_languages = j.at("num_languages").get<int>();
    c.num_scripts = j.at("num_scripts").get<int>();
    c.use_lang_emb = j.at("use_lang_emb").get<bool>();
    c.use_script_emb = j.at("use_script_emb").get<bool>();
    c.tie_head = j.at("tie_head").get<bool>();
    c.init_std = j.at("init_std").get<double>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }
};

inline std::string layer_tensor_name(int layer, std::string_view field) {
  return "layer" + std::to_string(layer) + "/" + std::string(field);
}

// Canonical tensor name order for a config. Checkpoint payloads, optimizer
// state and gradient accumulators all share this order.
inline std::vector<std::string> tensor_layout(const ModelConfig& config) {
  std::vector<std::string> names{"tok_emb", "pos_emb"};
  for (int l = 0; l < config.num_layers; ++l)
    for (const char* field : {"ln1_g", "ln1_b", "wq", "bq", "wk", "wv", "bv", "wo", "bo",
                              "ln2_g", "ln2_b", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"})
      names.push_back(layer_tensor_name(l, field));
  names.push_back("ln_f_g");
  names.push_back("ln_f_b");
  if (config.use_lang_emb) names.push_back("lang_emb");
  if (config.use_script_emb) names.push_back("script_emb");
  if (!config.tie_head) names.push_back("head_w");
  names.push_back("head_b");
  return names;
}

// Named parameter tensors in canonical order.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Mat<Scalar>> values;
  std::unordered_map<std::string, int> index;

  void add(std::string name, Mat<Scalar> value) {
    index.emplace(name, static_cast<int>(names.size()));
    names.push_back(std::move(name));
    values.push_back(std::move(value));
  }

  bool has(const std::string& name) const { return index.count(name) > 0; }

  Mat<Scalar>& at(const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw ValueError("model params: unknown tensor " + name);
    return values[static_cast<std::size_t>(it->second)];
  }
  const Mat<Scalar>& at(const std::string& name) const {
    const auto it = index.find(name);
    if (it == index.end()) throw ValueError("model params: unknown tensor " + name);
    return values[static_cast<std::size_t>(it->second)];
  }

  long parameter_count() const {
    long total = 0;
    for (const auto& v : values) total += static_cast<long>(v.size());
    return total;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.config = config;
    for (std::size_t i = 0; i < names.size(); ++i)
      out.add(names[i], values[i].template cast<Other>());
    return out;
  }
};

namespace detail {

template <typename Scalar>
Mat<Scalar> normal_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std_dev) {
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<Scalar>(rng.normal() * std_dev);
  return m;
}

}  // namespace detail

// Fresh parameters. Weight matrices and embeddings draw N(0, init_std^2);
// biases start at zero, layer-norm scales at one. The language/script tables
// draw from a separate tagged stream so that variants with and without the
// tables share a bit-identical backbone for a given seed.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "model_init"));
  Rng table_rng(derive_seed(config.seed, "aux_tables"));
  const int d = config.hidden_dim;
  const double s = config.init_std;

  ModelParams<Scalar> p;
  p.config = config;
  p.add("tok_emb", detail::normal_mat<Scalar>(rng, config.vocab_size, d, s));
  p.add("pos_emb", detail::normal_mat<Scalar>(rng, config.max_seq_len, d, s));
  for (int l = 0; l < config.num_layers; ++l) {
    p.add(layer_tensor_name(l, "ln1_g"), Mat<Scalar>::Ones(1, d));
    p.add(layer_tensor_name(l, "ln1_b"), Mat<Scalar>::Zero(1, d));
    p.add(layer_tensor_name(l, "wq"), detail::normal_mat<Scalar>(rng, d, d, s));
    p.add(layer_tensor_name(l, "bq"), Mat<Scalar>::Zero(1, d));
    // no key bias: softmax rows are invariant to a constant shift, so a key
    // bias is an exactly-null direction — dead weight with zero gradient
    p.add(layer_tensor_name(l, "wk"), detail::normal_mat<Scalar>(rng, d, d, s));
    p.add(layer_tensor_name(l, "wv"), detail::normal_mat<Scalar>(rng, d, d, s));
    p.add(layer_tensor_name(l, "bv"), Mat<Scalar>::Zero(1, d));
    p.add(layer_tensor_name(l, "wo"), detail::normal_mat<Scalar>(rng, d, d, s));
    p.add(layer_tensor_name(l, "bo"), Mat<Scalar>::Zero(1, d));
    p.add(layer_tensor_name(l, "ln2_g"), Mat<Scalar>::Ones(1, d));
    p.add(layer_tensor_name(l, "ln2_b"), Mat<Scalar>::Zero(1, d));
    p.add(layer_tensor_name(l, "ffn_w1"), detail::normal_mat<Scalar>(rng, d, config.ffn_dim, s));
    p.add(layer_tensor_name(l, "ffn_b1"), Mat<Scalar>::Zero(1, config.ffn_dim));
    p.add(layer_tensor_name(l, "ffn_w2"), detail::normal_mat<Scalar>(rng, config.ffn_dim, d, s));
    p.add(layer_tensor_name(l, "ffn_b2"), Mat<Scalar>::Zero(1, d));
  }
  p.add("ln_f_g", Mat<Scalar>::Ones(1, d));
  p.add("ln_f_b", Mat<Scalar>::Zero(1, d));
  if (config.use_lang_emb)
    p.add("lang_emb", detail::normal_mat<Scalar>(table_rng, config.num_languages, d, s));
  if (config.use_script_emb)
    p.add("script_emb", detail::normal_mat<Scalar>(table_rng, config.num_scripts, d, s));
  if (!config.tie_head)
    p.add("head_w", detail::normal_mat<Scalar>(rng, d, config.vocab_size, s));
  p.add("head_b", Mat<Scalar>::Zero(1, config.vocab_size));
  return p;
}

// Parameters bound to a graph as leaves, aligned with params.names.
template <typename Scalar>
struct BoundModel {
  Graph<Scalar>* graph = nullptr;
  const ModelParams<Scalar>* params = nullptr;
  std::vector<Var<Scalar>> vars;

  bool has(const std::string& name) const { return params->has(name); }
  Var<Scalar> at(const std::string& name) const {
    const auto it = params->index.find(name);
    if (it == params->index.end())
      throw ValueError("bound model: unknown tensor " + name);
    return vars[static_cast<std::size_t>(it->second)];
  }
};

template <typename Scalar>
BoundModel<Scalar> bind_model(Graph<Scalar>& graph, const ModelParams<Scalar>& params,
                              bool requires_grad) {
  BoundModel<Scalar> bound;
  bound.graph = &graph;
  bound.params = &params;
  bound.vars.reserve(params.values.size());
  for (const auto& value : params.values)
    bound.vars.push_back(leaf(graph, value, requires_grad));
  return bound;
}

// Per-layer activations: [0] is the embedding sum, [i] the output of block i,
// and the last entry the final layer norm of the top block — the hidden
// states H the LM head consumes.
template <typename Scalar>
struct Activations {
  std::vector<Var<Scalar>> layers;
  const Var<Scalar>& final_hidden() const { return layers.back(); }
};

// ID-free contextual encoder: consumes token ids only.
template <typename Scalar>
Activations<Scalar> encode(const BoundModel<Scalar>& model, std::span<const int> token_ids) {
  const ModelConfig& cfg = model.params->config;
  const auto n = static_cast<Eigen::Index>(token_ids.size());
  if (n < 1) throw ValueError("encode: empty token sequence");
  if (n > cfg.max_seq_len)
    throw ValueError("encode: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  std::vector<int> ids(token_ids.begin(), token_ids.end());
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw ValueError("encode: token id " + std::to_string(id) + " out of range");
  std::vector<int> positions(static_cast<std::size_t>(n));
  std::iota(positions.begin(), positions.end(), 0);

  const Scalar eps = static_cast<Scalar>(cfg.layer_norm_eps);
  const int head_dim = cfg.hidden_dim / cfg.num_heads;
  const Scalar att_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));

  Activations<Scalar> acts;
  Var<Scalar> x = add(gather_rows(model.at("tok_emb"), ids),
                      gather_rows(model.at("pos_emb"), positions));
  acts.layers.push_back(x);

  for (int l = 0; l < cfg.num_layers; ++l) {
    // pre-norm attention block
    Var<Scalar> normed = layer_norm_rows(x, model.at(layer_tensor_name(l, "ln1_g")),
                                         model.at(layer_tensor_name(l, "ln1_b")), eps);
    Var<Scalar> q = add_rowvec(matmul(normed, model.at(layer_tensor_name(l, "wq"))),
                               model.at(layer_tensor_name(l, "bq")));
    Var<Scalar> k = matmul(normed, model.at(layer_tensor_name(l, "wk")));
    Var<Scalar> v = add_rowvec(matmul(normed, model.at(layer_tensor_name(l, "wv"))),
                               model.at(layer_tensor_name(l, "bv")));
    std::vector<Var<Scalar>> heads;
    heads.reserve(static_cast<std::size_t>(cfg.num_heads));
    for (int h = 0; h < cfg.num_heads; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * head_dim;
      Var<Scalar> qh = col_block(q, off, head_dim);
      Var<Scalar> kh = col_block(k, off, head_dim);
      Var<Scalar> vh = col_block(v, off, head_dim);
      Var<Scalar> scores = scale(matmul_nt(qh, kh), att_scale);
      heads.push_back(matmul(softmax_rows(scores), vh));
    }
    Var<Scalar> ctx = concat_cols(std::span<const Var<Scalar>>(heads));
    Var<Scalar> att_out = add_rowvec(matmul(ctx, model.at(layer_tensor_name(l, "wo"))),
                                     model.at(layer_tensor_name(l, "bo")));
    x = add(x, att_out);

    // pre-norm feed-forward block
    Var<Scalar> normed2 = layer_norm_rows(x, model.at(layer_tensor_name(l, "ln2_g")),
                                          model.at(layer_tensor_name(l, "ln2_b")), eps);
    Var<Scalar> h1 = gelu(add_rowvec(matmul(normed2, model.at(layer_tensor_name(l, "ffn_w1"))),
                                     model.at(layer_tensor_name(l, "ffn_b1"))));
    Var<Scalar> ffn_out = add_rowvec(matmul(h1, model.at(layer_tensor_name(l, "ffn_w2"))),
                                     model.at(layer_tensor_name(l, "ffn_b2")));
    x = add(x, ffn_out);

    if (l + 1 < cfg.num_layers) {
      acts.layers.push_back(x);
    } else {
      // fold the final layer norm into the top activation: this is H
      acts.layers.push_back(layer_norm_rows(x, model.at("ln_f_g"), model.at("ln_f_b"), eps));
    }
  }
  return acts;
}

// LM head over (a subset of) hidden-state rows: adds the language and script
// rows when the respective flags are on, then applies the affine projection.
template <typename Scalar>
Var<Scalar> lm_head(const BoundModel<Scalar>& model, Var<Scalar> hidden, int lang_id,
                    int script_id) {
  const ModelConfig& cfg = model.params->config;
  if (lang_id < 0 || lang_id >= cfg.num_languages)
    throw ValueError("lm head: lang_id " + std::to_string(lang_id) + " out of range");
  if (script_id < 0 || script_id >= cfg.num_scripts)
    throw ValueError("lm head: script_id " + std::to_string(script_id) + " out of range");

  Var<Scalar> o = hidden;
  if (cfg.use_lang_emb) {
    if (!model.has("lang_emb"))
      throw DataError("lm head: checkpoint lacks lang_emb but use_lang_emb is set");
    o = add_rowvec(o, gather_rows(model.at("lang_emb"), std::vector<int>{lang_id}));
  }
  if (cfg.use_script_emb) {
    if (!model.has("script_emb"))
      throw DataError("lm head: checkpoint lacks script_emb but use_script_emb is set");
    o = add_rowvec(o, gather_rows(model.at("script_emb"), std::vector<int>{script_id}));
  }
  Var<Scalar> logits = cfg.tie_head ? matmul_nt(o, model.at("tok_emb"))
                                    : matmul(o, model.at("head_w"));
  return add_rowvec(logits, model.at("head_b"));
}

// Full-sequence masked-LM forward pass: encode then project every position.
template <typename Scalar>
Var<Scalar> lm_forward(const BoundModel<Scalar>& model, std::span<const int> token_ids,
                       int lang_id, int script_id) {
  const Activations<Scalar> acts = encode(model, token_ids);
  return lm_head(model, acts.final_hidden(), lang_id, script_id);
}

// Convenience plain-matrix wrappers (no gradients).

template <typename Scalar>
Mat<Scalar> hidden_at_layer(const ModelParams<Scalar>& params, std::span<const int> token_ids,
                            int layer_index) {
  if (layer_index < 0 || layer_index > params.config.num_layers)
    throw ValueError("hidden_at_layer: layer index " + std::to_string(layer_index) +
                     " out of range [0, " + std::to_string(params.config.num_layers) + "]");
  Graph<Scalar> graph;
  const BoundModel<Scalar> bound = bind_model(graph, params, false);
  const Activations<Scalar> acts = encode(bound, token_ids);
  return acts.layers[static_cast<std::size_t>(layer_index)].value();
}

template <typename Scalar>
Mat<Scalar> lm_logits(const ModelParams<Scalar>& params, std::span<const int> token_ids,
                      int lang_id, int script_id) {
  Graph<Scalar> graph;
  const BoundModel<Scalar> bound = bind_model(graph, params, false);
  return lm_forward(bound, token_ids, lang_id, script_id).value();
}

}  // namespace langsamp
