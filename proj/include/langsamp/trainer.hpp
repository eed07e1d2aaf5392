#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "langsamp/adamw.hpp"
#include "langsamp/corpus.hpp"
#include "langsamp/grad_check.hpp"
#include "langsamp/masking.hpp"
#include "langsamp/model.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

// Optimization-loop settings. One window of micro_batch * grad_accumulation
// instances is drawn and masked per effective step; the optimizer steps once
// per window. Validation uses a fixed held-out slice masked once up front, so
// the validation loss is a pure function of the parameters.
struct TrainConfig {
  long steps = 0;
  int micro_batch = 32;
  int grad_accumulation = 8;
  long checkpoint_every = 5000;
  std::uint64_t seed = 0;

  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;

  MaskPolicy mask;
  double val_fraction = 0.1;
  int val_max_instances = 64;
  long val_every = 10;
  long patience = 0;  // checkpoints without val improvement before stopping; 0 disables

  bool freeze_aux_tables = false;  // exclude lang/script tables from updates
  bool zero_aux_tables = false;    // zero the tables after init (degenerate-equivalence runs)

  int chunk_len = 512;
  double temperature = 0.3;

  void validate() const;
  AdamWOptions<float> optimizer_options() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Differentiable MLM objective over a slice of masked instances: the sum of
// cross-entropies at all masked positions scaled by 1 / total_masked, so the
// per-window micro-batch losses add up to the window mean.
template <typename Scalar>
Var<Scalar> mlm_loss_var(const BoundModel<Scalar>& model,
                         std::span<const MaskedInstance> instances, long total_masked) {
  if (instances.empty()) throw ValueError("mlm loss: empty instance slice");
  if (total_masked < 1) throw ValueError("mlm loss: empty total mask set");
  std::vector<Var<Scalar>> losses;
  losses.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto acts = encode(model, std::span<const int>(inst.input_ids));
    const auto picked = gather_rows(acts.final_hidden(), inst.mask_positions);
    const auto logits = lm_head(model, picked, inst.lang_id, inst.script_id);
    losses.push_back(cross_entropy_sum(logits, inst.target_ids));
  }
  return scale(sum_vars(std::span<const Var<Scalar>>(losses)),
               Scalar(1) / static_cast<Scalar>(total_masked));
}

// Mean cross-entropy over all masked positions of a batch (forward only,
// one small graph per instance to keep memory flat).
template <typename Scalar>
double mlm_loss(const ModelParams<Scalar>& params, const MaskedBatch& batch) {
  const long total = batch.total_masked();
  if (total < 1) throw ValueError("mlm loss: empty total mask set");
  double sum = 0.0;
  for (const auto& inst : batch.instances) {
    Graph<Scalar> graph;
    const auto bound = bind_model(graph, params, false);
    const auto acts = encode(bound, std::span<const int>(inst.input_ids));
    const auto picked = gather_rows(acts.final_hidden(), inst.mask_positions);
    const auto logits = lm_head(bound, picked, inst.lang_id, inst.script_id);
    sum += static_cast<double>(cross_entropy_sum(logits, inst.target_ids).value()(0, 0));
  }
  return sum / static_cast<double>(total);
}

// Central-difference check of the full MLM gradient, every parameter tensor
// included. 64-bit only: finite differences need the headroom.
inline GradCheckReport model_grad_check(ModelParams<double>& params, const MaskedBatch& batch,
                                        double h) {
  Graph<double> graph;
  const auto bound = bind_model(graph, params, true);
  auto loss = mlm_loss_var(bound, std::span<const MaskedInstance>(batch.instances),
                           batch.total_masked());
  graph.backward(loss.id);

  std::vector<Matd> grads;
  grads.reserve(bound.vars.size());
  for (const auto& var : bound.vars) grads.push_back(var.grad());

  std::vector<GradCheckTarget<double>> targets;
  targets.reserve(params.names.size());
  for (std::size_t i = 0; i < params.names.size(); ++i)
    targets.push_back({params.names[i], &params.values[i], &grads[i]});

  const auto loss_value = [&]() { return mlm_loss(params, batch); };
  return grad_check<double>(loss_value, targets, h);
}

struct TrainResult {
  ModelParams<float> params;
  long final_step = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::filesystem::path last_checkpoint;
  bool stopped_early = false;
};

// Fresh training run: initializes parameters, truncates the metrics log and
// writes `ckpt_<step>.lsmp` containers under output_dir.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const CorpusData& corpus, const std::filesystem::path& output_dir);

// Continues a checkpointed run to its configured step count. The corpus must
// be rebuilt from the same data; the checkpoint carries everything else
// (parameters, optimizer moments, sampler cursors, RNG streams), making the
// resumed trajectory bit-identical to an uninterrupted one.
TrainResult resume_training(const std::filesystem::path& checkpoint_path,
                            const CorpusData& corpus, const std::filesystem::path& output_dir);

struct AblationRow {
  std::string variant;
  long param_count = 0;
  double heldout_loss = 0.0;
  double retrieval_top1 = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
};

// Trains the four table-flag variants (vanilla, w-lang, w-script, w-both) on
// identical seeds and batch streams and scores each on held-out MLM loss and
// parallel-corpus retrieval (0 when fewer than two languages).
AblationReport ablation_run(const std::filesystem::path& corpus_dir, const CorpusData& corpus,
                            const ModelConfig& base_model, const TrainConfig& train_config,
                            int eval_layer, long max_pairs,
                            const std::filesystem::path& output_dir);

struct FinetuneOptions {
  double lr = 1e-5;
  int epochs = 40;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  double accuracy = 0.0;
  int epochs_run = 0;
  Matf head_w;
  Matf head_b;
};

// Linear classifier over the CLS position of the encoder output, trained
// end-to-end with AdamW. The path consumes token ids only — it runs
// unchanged on checkpoints whose language/script tables were stripped.
FinetuneResult finetune_classifier(ModelParams<float> params, const Vocab& vocab,
                                   const std::vector<std::pair<std::string, int>>& examples,
                                   int num_classes, const FinetuneOptions& options);

}  // namespace langsamp
