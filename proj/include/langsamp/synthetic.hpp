#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "langsamp/types.hpp"

namespace langsamp {

// Parameters of the synthetic parallel corpus: every language renders the
// same latent lemma sequences through its own surface bijection, so the
// files are exactly line-aligned translations of one another. The first
// num_anchors lemmas — the most frequent ones by construction — render to
// the same surface token in every language, playing the role numerals and
// punctuation play in real multilingual corpora.
struct SyntheticSpec {
  int num_languages = 4;
  int num_scripts = 2;
  int num_lemmas = 200;
  int num_anchors = 20;
  int num_sentences = 2000;
  int min_sentence_len = 4;
  int max_sentence_len = 12;
  std::uint64_t seed = 0;

  void validate() const;
};

// Script assigned to a language: contiguous groups, e.g. 4 languages over
// 2 scripts gives {0, 0, 1, 1}.
int script_of_language(const SyntheticSpec& spec, int lang_id);

// Language/script codes as they appear in corpus file names.
std::string language_code(const SyntheticSpec& spec, int lang_id);
std::string script_code(const SyntheticSpec& spec, int script_id);

// The latent corpus: lemma-id sequences drawn by a short random walk over
// the lemma inventory with skewed restarts, shared by all languages.
std::vector<std::vector<int>> latent_sentences(const SyntheticSpec& spec);

// Per-language lemma -> surface-index bijection (a seeded permutation).
std::vector<int> surface_permutation(const SyntheticSpec& spec, int lang_id);

// Surface form of one lemma in one language: anchors become the shared
// token "z<lemma>"; any other lemma becomes e.g. "c41" when language 2's
// permutation maps it to 41.
std::string surface_token(const SyntheticSpec& spec, int lang_id, int lemma);

// Writes one file per language into dir and returns the paths in registry
// order (sorted by file name). Line i of every file is the same latent
// sentence rendered through that language's bijection.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          const SyntheticSpec& spec);

}  // namespace langsamp
