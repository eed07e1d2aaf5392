#pragma once

#include <array>
#include <span>
#include <vector>

#include "langsamp/corpus.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

// BERT-style dynamic masking policy: select ~mask_rate of the maskable
// positions, then replace 80% with MASK, 10% with a random regular token and
// keep 10% unchanged. PAD/CLS/SEP are never selected.
struct MaskPolicy {
  double mask_rate = 0.15;
  double mask_prob = 0.8;
  double random_prob = 0.1;
  double keep_prob = 0.1;

  void validate() const;
};

struct MaskedInstance {
  std::vector<int> input_ids;
  std::vector<int> mask_positions;  // ascending
  std::vector<int> target_ids;      // original ids, aligned with mask_positions
  int lang_id = 0;
  int script_id = 0;
};

struct MaskedBatch {
  std::vector<MaskedInstance> instances;
  // how often each replacement action fired, for distribution checks:
  // [0] MASK substitution, [1] random token, [2] kept unchanged
  std::array<long, 3> action_counts{0, 0, 0};

  long total_masked() const;
};

// Applies the policy to every instance, consuming the RNG stream in instance
// order so that a window masked in one call equals the same instances masked
// across consecutive calls. An instance with at least one maskable position
// always receives at least one prediction target.
MaskedBatch mask_tokens(std::span<const TrainingInstance> batch, const MaskPolicy& policy,
                        int vocab_size, Rng& rng);

}  // namespace langsamp
