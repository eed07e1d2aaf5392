#include "langsamp/synthetic.hpp"

#include <algorithm>
#include <fstream>

namespace langsamp {

void SyntheticSpec::validate() const {
  if (num_languages < 1 || num_languages > 25)
    throw ConfigError("synthetic: num_languages must lie in [1, 25]");
  if (num_scripts < 1 || num_scripts > num_languages)
    throw ConfigError("synthetic: num_scripts must lie in [1, num_languages]");
  if (num_lemmas < 2) throw ConfigError("synthetic: need at least 2 lemmas");
  if (num_anchors < 0 || num_anchors > num_lemmas)
    throw ConfigError("synthetic: num_anchors must lie in [0, num_lemmas]");
  if (num_sentences < 1) throw ConfigError("synthetic: need at least 1 sentence");
  if (min_sentence_len < 1 || max_sentence_len < min_sentence_len)
    throw ConfigError("synthetic: sentence length bounds must satisfy 1 <= min <= max");
}

int script_of_language(const SyntheticSpec& spec, int lang_id) {
  spec.validate();
  if (lang_id < 0 || lang_id >= spec.num_languages)
    throw ValueError("synthetic: language id out of range");
  return lang_id * spec.num_scripts / spec.num_languages;
}

std::string language_code(const SyntheticSpec& spec, int lang_id) {
  spec.validate();
  if (lang_id < 0 || lang_id >= spec.num_languages)
    throw ValueError("synthetic: language id out of range");
  std::string code = "lng" + std::to_string(lang_id);
  if (lang_id < 10) code.insert(3, "0");  // keep lexicographic == numeric order
  return code;
}

std::string script_code(const SyntheticSpec& spec, int script_id) {
  spec.validate();
  if (script_id < 0 || script_id >= spec.num_scripts)
    throw ValueError("synthetic: script id out of range");
  return std::string("Scr") + static_cast<char>('a' + script_id);
}

std::vector<std::vector<int>> latent_sentences(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "latent"));

  // Skewed restart distribution gives the lemma inventory a long-tailed
  // frequency profile; the +/-5 walk gives sentences local structure.
  std::vector<double> restart(static_cast<std::size_t>(spec.num_lemmas));
  for (std::size_t i = 0; i < restart.size(); ++i) restart[i] = 1.0 / (2.0 + double(i));

  const int span = std::min(5, spec.num_lemmas - 1);
  std::vector<std::vector<int>> sentences(static_cast<std::size_t>(spec.num_sentences));
  for (auto& sentence : sentences) {
    const long len =
        spec.min_sentence_len + rng.uniform_int(spec.max_sentence_len - spec.min_sentence_len + 1);
    int cur = rng.categorical(restart);
    sentence.reserve(static_cast<std::size_t>(len));
    for (long k = 0; k < len; ++k) {
      sentence.push_back(cur);
      if (rng.uniform01() < 0.1) {
        cur = rng.categorical(restart);
      } else {
        const long step = 1 + rng.uniform_int(span);
        const int sign = rng.uniform01() < 0.5 ? -1 : 1;
        cur = ((cur + sign * static_cast<int>(step)) % spec.num_lemmas + spec.num_lemmas) %
              spec.num_lemmas;
      }
    }
  }
  return sentences;
}

std::vector<int> surface_permutation(const SyntheticSpec& spec, int lang_id) {
  spec.validate();
  if (lang_id < 0 || lang_id >= spec.num_languages)
    throw ValueError("synthetic: language id out of range");
  Rng rng(derive_seed(spec.seed, "surface_" + std::to_string(lang_id)));
  std::vector<int> perm(static_cast<std::size_t>(spec.num_lemmas));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (std::size_t i = perm.size(); i > 1; --i)  // Fisher-Yates
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(static_cast<long>(i)))]);
  return perm;
}

std::string surface_token(const SyntheticSpec& spec, int lang_id, int lemma) {
  if (lemma < 0 || lemma >= spec.num_lemmas)
    throw ValueError("synthetic: lemma id out of range");
  if (lemma < spec.num_anchors) {
    if (lang_id < 0 || lang_id >= spec.num_languages)
      throw ValueError("synthetic: language id out of range");
    return "z" + std::to_string(lemma);
  }
  const auto perm = surface_permutation(spec, lang_id);
  return std::string(1, static_cast<char>('a' + lang_id)) +
         std::to_string(perm[static_cast<std::size_t>(lemma)]);
}

std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          const SyntheticSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  const auto sentences = latent_sentences(spec);

  std::vector<std::filesystem::path> files;
  for (int l = 0; l < spec.num_languages; ++l) {
    const auto perm = surface_permutation(spec, l);
    const char prefix = static_cast<char>('a' + l);
    std::string text;
    for (const auto& sentence : sentences) {
      for (std::size_t k = 0; k < sentence.size(); ++k) {
        if (k > 0) text += ' ';
        const int lemma = sentence[k];
        if (lemma < spec.num_anchors) {
          text += 'z';
          text += std::to_string(lemma);
        } else {
          text += prefix;
          text += std::to_string(perm[static_cast<std::size_t>(lemma)]);
        }
      }
      text += '\n';
    }
    const auto file =
        dir / (language_code(spec, l) + "_" + script_code(spec, script_of_language(spec, l)) +
               ".txt");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("synthetic: cannot write " + file.string());
    out << text;
    files.push_back(file);
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace langsamp
