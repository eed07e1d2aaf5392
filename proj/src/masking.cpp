#include "langsamp/masking.hpp"

#include <cmath>
#include <string>

namespace langsamp {

void MaskPolicy::validate() const {
  if (!(mask_rate > 0.0) || !(mask_rate < 1.0))
    throw ValueError("mask policy: mask_rate must lie in (0, 1)");
  for (double p : {mask_prob, random_prob, keep_prob})
    if (p < 0.0 || p > 1.0)
      throw ValueError("mask policy: action probabilities must lie in [0, 1]");
  if (std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9)
    throw ValueError("mask policy: action probabilities must sum to 1");
}

long MaskedBatch::total_masked() const {
  long total = 0;
  for (const MaskedInstance& inst : instances)
    total += static_cast<long>(inst.mask_positions.size());
  return total;
}

namespace {

bool is_protected(int id) {
  return id == Vocab::kPad || id == Vocab::kCls || id == Vocab::kSep;
}

}  // namespace

MaskedBatch mask_tokens(std::span<const TrainingInstance> batch, const MaskPolicy& policy,
                        int vocab_size, Rng& rng) {
  policy.validate();
  if (batch.empty()) throw ValueError("mask_tokens: empty batch");
  if (vocab_size <= Vocab::kNumSpecials)
    throw DataError("mask_tokens: vocabulary has no regular tokens to sample replacements from");

  MaskedBatch out;
  out.instances.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingInstance& inst = batch[b];
    MaskedInstance masked;
    masked.input_ids = inst.token_ids;
    masked.lang_id = inst.lang_id;
    masked.script_id = inst.script_id;

    std::vector<int> maskable;
    for (std::size_t i = 0; i < inst.token_ids.size(); ++i)
      if (!is_protected(inst.token_ids[i])) maskable.push_back(static_cast<int>(i));
    if (maskable.empty())
      throw DataError("mask_tokens: instance " + std::to_string(b) +
                      " has no maskable positions");

    std::vector<int> selected;
    for (int pos : maskable)
      if (rng.uniform01() < policy.mask_rate) selected.push_back(pos);
    if (selected.empty())  // guarantee at least one prediction target
      selected.push_back(maskable[static_cast<std::size_t>(
          rng.uniform_int(static_cast<long>(maskable.size())))]);

    for (int pos : selected) {
      const auto p = static_cast<std::size_t>(pos);
      masked.mask_positions.push_back(pos);
      masked.target_ids.push_back(inst.token_ids[p]);
      const double u = rng.uniform01();
      if (u < policy.mask_prob) {
        masked.input_ids[p] = Vocab::kMask;
        out.action_counts[0] += 1;
      } else if (u < policy.mask_prob + policy.random_prob) {
        masked.input_ids[p] =
            Vocab::kNumSpecials +
            static_cast<int>(rng.uniform_int(vocab_size - Vocab::kNumSpecials));
        out.action_counts[1] += 1;
      } else {
        out.action_counts[2] += 1;  // kept unchanged
      }
    }
    out.instances.push_back(std::move(masked));
  }
  return out;
}

}  // namespace langsamp
