#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "langsamp/model.hpp"
#include "langsamp/registry.hpp"
#include "langsamp/types.hpp"
#include "langsamp/vocab.hpp"

namespace langsamp {

// Analysis suite over trained models: layer-pooled sentence embeddings,
// top-k retrieval, centroid-subtracted pairwise cosine similarity and its
// percentage improvement, donor selection from language-embedding rows, and
// PCA projection. All math runs in double precision.

struct SimilarityMatrix {
  std::vector<std::string> labels;
  Matd values;              // symmetric, unit diagonal
  long skipped_pairs = 0;   // zero-norm centered pairs dropped from a mean
  nlohmann::json to_json() const;
};

struct ImprovementMatrix {
  std::vector<std::string> labels;
  Matd values;  // percentage change, diagonal 0
  std::vector<std::pair<int, int>> undefined_cells;  // |base| below 1e-9
  nlohmann::json to_json() const;
};

struct DonorResult {
  std::string donor;
  double similarity = 0.0;
  std::vector<std::pair<std::string, double>> table;  // registry order
  nlohmann::json to_json() const;
};

struct PcaResult {
  Matd coordinates;                          // K x out_dims
  Matd components;                           // D x out_dims principal axes
  Eigen::VectorXd explained_variance_ratios;  // length min(K-1, D)
  nlohmann::json to_json() const;
};

// Mean of the layer-`layer` hidden rows over non-PAD positions. The encoder
// consumes token ids only — no language or script information.
Matd sentence_embedding(const ModelParams<double>& params, std::span<const int> token_ids,
                        int layer);

// One embedding row per sentence, computed across the worker pool; row order
// follows the input order regardless of thread count.
Matd embed_sentences(const ModelParams<double>& params,
                     const std::vector<std::vector<int>>& sentences, int layer);

// Fraction of queries whose aligned gold target ranks in the cosine top k
// (descending similarity, ties broken by lower target index).
double retrieval_topk(const Matd& queries, const Matd& targets, int k);

// Entry (A, B): mean cosine over aligned sentence pairs after subtracting
// each language's centroid. `per_language[i]` holds language i's n x D
// embeddings, aligned by row across languages.
SimilarityMatrix centered_pairwise_cosine(const std::vector<Matd>& per_language,
                                          const std::vector<std::string>& labels);

// Entrywise 100 * (model - base) / |base| with zero diagonal; cells whose
// baseline magnitude is below 1e-9 are reported undefined, not substituted.
ImprovementMatrix similarity_improvement(const SimilarityMatrix& base,
                                         const SimilarityMatrix& model);

// Most cosine-similar donor row to the target row, target excluded, ties
// broken by registry order. Codes accept either "tha" or "tha_Thai".
DonorResult donor_select(const Matd& lang_emb, const std::vector<std::string>& lang_codes,
                         const std::string& target, const std::vector<std::string>& donors);

// Mean-center rows, project onto the top `out_dims` right-singular vectors;
// each component's largest-magnitude loading is made positive.
PcaResult pca_project(const Matd& vectors, int out_dims);

// Fixed 800x600 scatter plot of 2-d coordinates with text labels.
std::string svg_scatter(const Matd& coordinates, const std::vector<std::string>& labels);

// Line-aligned multilingual corpus for retrieval/similarity evaluation:
// sentences[lang][i] across languages translate each other. Sentences are
// encoded with the vocabulary and truncated to max_seq_len; all files must
// agree on the line count and lines must be non-empty.
struct ParallelCorpus {
  LanguageScriptRegistry registry;
  std::vector<std::vector<std::vector<int>>> sentences;  // [lang][line] -> ids
  long aligned_count = 0;
};

ParallelCorpus load_parallel_corpus(const std::filesystem::path& dir, const Vocab& vocab,
                                    long max_pairs, int max_seq_len);

}  // namespace langsamp
