#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "langsamp/registry.hpp"
#include "langsamp/types.hpp"
#include "langsamp/vocab.hpp"

namespace langsamp {

// One fixed-length monolingual training chunk. Mixing of languages happens
// at the batch level only; a chunk always carries a single (lang, script).
struct TrainingInstance {
  std::vector<int> token_ids;
  int lang_id = 0;
  int script_id = 0;
};

// Non-empty lines of a text file, in order.
std::vector<std::string> read_sentences(const std::filesystem::path& file);

// Packs sentences into chunks of exactly chunk_len ids: a single leading CLS,
// then each sentence followed by SEP, split greedily; the final partial chunk
// is right-padded with PAD. Every corpus token lands in exactly one chunk.
std::vector<TrainingInstance> make_chunks(const Vocab& vocab,
                                          std::span<const std::string> sentences, int lang_id,
                                          int script_id, int chunk_len);

// Temperature flattening of a count distribution: w_i = c_i^T / sum_j c_j^T.
// Lower temperatures upweight low-resource entries.
std::vector<double> temperature_weights(std::span<const double> counts, double temperature);

// One categorical draw over corpus entries; returns the entry index.
int sample_entry(std::span<const double> weights, Rng& rng);

// Same draw mapped to the entry's (lang_id, script_id).
std::pair<int, int> sample_language_script(const LanguageScriptRegistry& registry,
                                           std::span<const double> weights, Rng& rng);

// Fully materialized corpus: registry, vocabulary, and per-entry chunk lists.
struct CorpusData {
  LanguageScriptRegistry registry;
  Vocab vocab;
  int chunk_len = 0;
  std::vector<std::vector<TrainingInstance>> entry_chunks;

  std::vector<double> token_counts() const;
};

CorpusData build_corpus_data(const std::filesystem::path& dir, Vocab vocab, int chunk_len);

// Draws training instances entry-by-entry: a temperature-weighted categorical
// pick of the entry, then the entry's next chunk in order, with wrap-around
// recycling once an entry is exhausted. Cursor and RNG state round-trip so a
// resumed run continues the exact stream.
class BatchSampler {
 public:
  BatchSampler(const std::vector<std::vector<TrainingInstance>>* entry_chunks,
               std::vector<double> weights, std::uint64_t seed);

  const TrainingInstance& next_instance();
  std::vector<TrainingInstance> next_batch(int batch_size);

  const std::vector<std::uint64_t>& cursors() const { return cursors_; }
  std::string rng_state() const { return rng_.save_state(); }
  void restore(std::vector<std::uint64_t> cursors, const std::string& rng_blob);

 private:
  const std::vector<std::vector<TrainingInstance>>* entry_chunks_;
  std::vector<double> weights_;
  std::vector<std::uint64_t> cursors_;
  Rng rng_;
};

}  // namespace langsamp
