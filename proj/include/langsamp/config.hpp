#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>

#include "json.hpp"
#include "langsamp/model.hpp"
#include "langsamp/trainer.hpp"

namespace langsamp {

// Rejects any key of j that is not in allowed; `where` names the context in
// the error ("unknown key 'x' in ...").
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where);

struct VocabSettings {
  int max_size = 8192;
  int min_count = 1;
};

struct EvalSettings {
  int layer = -1;  // -1 selects the final layer once the model is known
  int max_pairs = 100;
  int top_k = 10;
  int pca_dims = 2;
};

// One experiment described by a JSON file. Parsing is strict: unknown keys
// abort. Relative paths are resolved against the config file's directory.
// The file's JSON is kept verbatim in `echo` so reports can embed exactly
// what the user wrote (resolved absolute paths never leak into artifacts).
struct RunConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  VocabSettings vocab;
  ModelConfig model;  // vocab_size / num_languages / num_scripts filled from the corpus
  TrainConfig train;
  bool has_train = false;
  EvalSettings eval;
  nlohmann::json echo;

  static RunConfig load(const std::filesystem::path& file);
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

  // Picks the pooling layer: explicit setting, or the model's final layer.
  int eval_layer(const ModelConfig& mc) const;
};

}  // namespace langsamp
