#include "langsamp/config.hpp"

#include <algorithm>
#include <fstream>

namespace langsamp {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* key) { return it.key() == key; });
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

VocabSettings parse_vocab(const nlohmann::json& j) {
  check_keys(j, {"max_size", "min_count"}, "vocab settings");
  VocabSettings v;
  v.max_size = j.value("max_size", v.max_size);
  v.min_count = j.value("min_count", v.min_count);
  if (v.max_size < Vocab::kNumSpecials + 1)
    throw ConfigError("vocab settings: max_size leaves no room for regular tokens");
  if (v.min_count < 1) throw ConfigError("vocab settings: min_count must be positive");
  return v;
}

ModelConfig parse_model(const nlohmann::json& j) {
  // vocab_size / num_languages / num_scripts / seed are derived from the
  // corpus and the top-level seed; accepting them here would invite drift.
  check_keys(j,
             {"hidden_dim", "num_layers", "num_heads", "ffn_dim", "max_seq_len", "use_lang_emb",
              "use_script_emb", "tie_head", "init_std", "layer_norm_eps"},
             "model config");
  ModelConfig mc;
  mc.hidden_dim = j.value("hidden_dim", mc.hidden_dim);
  mc.num_layers = j.value("num_layers", mc.num_layers);
  mc.num_heads = j.value("num_heads", mc.num_heads);
  mc.ffn_dim = j.value("ffn_dim", mc.ffn_dim);
  mc.max_seq_len = j.value("max_seq_len", mc.max_seq_len);
  mc.use_lang_emb = j.value("use_lang_emb", mc.use_lang_emb);
  mc.use_script_emb = j.value("use_script_emb", mc.use_script_emb);
  mc.tie_head = j.value("tie_head", mc.tie_head);
  mc.init_std = j.value("init_std", mc.init_std);
  mc.layer_norm_eps = j.value("layer_norm_eps", mc.layer_norm_eps);
  return mc;
}

EvalSettings parse_eval(const nlohmann::json& j) {
  check_keys(j, {"layer", "max_pairs", "top_k", "pca_dims"}, "eval settings");
  EvalSettings e;
  e.layer = j.value("layer", e.layer);
  e.max_pairs = j.value("max_pairs", e.max_pairs);
  e.top_k = j.value("top_k", e.top_k);
  e.pca_dims = j.value("pca_dims", e.pca_dims);
  if (e.max_pairs < 1) throw ConfigError("eval settings: max_pairs must be positive");
  if (e.top_k < 1) throw ConfigError("eval settings: top_k must be positive");
  if (e.pca_dims < 1) throw ConfigError("eval settings: pca_dims must be positive");
  return e;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"corpus_dir", "output_dir", "seed", "vocab", "model", "train", "eval"},
             "run config");
  if (!j.contains("corpus_dir")) throw ConfigError("run config: corpus_dir is required");
  if (!j.contains("output_dir")) throw ConfigError("run config: output_dir is required");

  RunConfig rc;
  rc.echo = j;
  rc.corpus_dir = resolve(base_dir, j.at("corpus_dir").get<std::string>());
  rc.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  rc.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("vocab")) rc.vocab = parse_vocab(j.at("vocab"));
  if (j.contains("model")) rc.model = parse_model(j.at("model"));
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"steps", "micro_batch", "grad_accumulation", "checkpoint_every", "lr", "beta1",
                "beta2", "eps", "weight_decay", "mask_rate", "mask_prob", "random_prob",
                "keep_prob", "val_fraction", "val_max_instances", "val_every", "patience",
                "freeze_aux_tables", "zero_aux_tables", "chunk_len", "temperature"},
               "train config");
    rc.train = TrainConfig::from_json(t);
    rc.has_train = true;
  }
  if (j.contains("eval")) rc.eval = parse_eval(j.at("eval"));

  rc.model.seed = rc.seed;
  rc.train.seed = rc.seed;
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config file " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config file " + file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

int RunConfig::eval_layer(const ModelConfig& mc) const {
  if (eval.layer == -1) return mc.num_layers;
  if (eval.layer < 0 || eval.layer > mc.num_layers)
    throw ConfigError("eval settings: layer must lie in [0, num_layers] or be -1");
  return eval.layer;
}

}  // namespace langsamp
