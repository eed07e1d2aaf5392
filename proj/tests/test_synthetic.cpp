#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "langsamp/corpus.hpp"
#include "langsamp/evaluation.hpp"
#include "langsamp/synthetic.hpp"
#include "support.hpp"

using namespace langsamp;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_languages = 4;
  spec.num_scripts = 2;
  spec.num_lemmas = 20;
  spec.num_anchors = 4;
  spec.num_sentences = 50;
  spec.min_sentence_len = 4;
  spec.max_sentence_len = 9;
  spec.seed = 5;
  return spec;
}

std::vector<std::string> file_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> tokens;
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace

TEST_CASE("spec validation rejects degenerate settings") {
  SyntheticSpec bad = small_spec();
  bad.num_languages = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec();
  bad.num_scripts = 5;  // more scripts than languages
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec();
  bad.num_lemmas = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec();
  bad.num_anchors = bad.num_lemmas + 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec();
  bad.min_sentence_len = 6;
  bad.max_sentence_len = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("languages map onto contiguous script groups") {
  const SyntheticSpec spec = small_spec();
  CHECK(script_of_language(spec, 0) == 0);
  CHECK(script_of_language(spec, 1) == 0);
  CHECK(script_of_language(spec, 2) == 1);
  CHECK(script_of_language(spec, 3) == 1);
  CHECK(language_code(spec, 0) == "lng00");
  CHECK(language_code(spec, 3) == "lng03");
  CHECK(script_code(spec, 0) == "Scra");
  CHECK(script_code(spec, 1) == "Scrb");
  CHECK_THROWS_AS(script_of_language(spec, 4), ValueError);
  CHECK_THROWS_AS(language_code(spec, -1), ValueError);
  CHECK_THROWS_AS(script_code(spec, 2), ValueError);
}

TEST_CASE("latent sentences are deterministic, bounded and in range") {
  const SyntheticSpec spec = small_spec();
  const auto a = latent_sentences(spec);
  const auto b = latent_sentences(spec);
  CHECK(a == b);
  REQUIRE(a.size() == 50);
  for (const auto& sentence : a) {
    CHECK(sentence.size() >= 4);
    CHECK(sentence.size() <= 9);
    for (int lemma : sentence) {
      CHECK(lemma >= 0);
      CHECK(lemma < spec.num_lemmas);
    }
  }
  SyntheticSpec other = spec;
  other.seed = 6;
  CHECK(latent_sentences(other) != a);
}

TEST_CASE("surface permutations are per-language bijections") {
  const SyntheticSpec spec = small_spec();
  std::vector<int> reference(static_cast<std::size_t>(spec.num_lemmas));
  std::iota(reference.begin(), reference.end(), 0);

  std::vector<std::vector<int>> perms;
  for (int l = 0; l < spec.num_languages; ++l) {
    auto perm = surface_permutation(spec, l);
    auto sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == reference);
    perms.push_back(std::move(perm));
  }
  CHECK(perms[0] != perms[1]);
  CHECK(perms[1] != perms[2]);

  CHECK(surface_token(spec, 2, 7) ==
        "c" + std::to_string(perms[2][7]));
  // anchors share one surface form across all languages
  CHECK(surface_token(spec, 0, 2) == "z2");
  CHECK(surface_token(spec, 3, 2) == "z2");
  CHECK_THROWS_AS(surface_token(spec, 0, spec.num_lemmas), ValueError);
}

TEST_CASE("written files are line-aligned renderings of the same latent corpus") {
  testutil::TempDir dir("synth");
  const SyntheticSpec spec = small_spec();
  const auto files = write_synthetic_corpus(dir.path(), spec);
  REQUIRE(files.size() == 4);
  CHECK(files[0].filename() == "lng00_Scra.txt");
  CHECK(files[1].filename() == "lng01_Scra.txt");
  CHECK(files[2].filename() == "lng02_Scrb.txt");
  CHECK(files[3].filename() == "lng03_Scrb.txt");

  const auto latent = latent_sentences(spec);
  for (int l = 0; l < 4; ++l) {
    const auto perm = surface_permutation(spec, l);
    std::map<std::string, int> to_lemma;
    for (int m = 0; m < spec.num_lemmas; ++m)
      to_lemma[m < spec.num_anchors
                   ? "z" + std::to_string(m)
                   : std::string(1, char('a' + l)) + std::to_string(perm[m])] = m;

    const auto lines = file_lines(files[static_cast<std::size_t>(l)]);
    REQUIRE(lines.size() == latent.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto tokens = split_tokens(lines[i]);
      REQUIRE(tokens.size() == latent[i].size());
      for (std::size_t k = 0; k < tokens.size(); ++k)
        CHECK(to_lemma.at(tokens[k]) == latent[i][k]);
    }
  }

  // regenerating produces byte-identical files
  testutil::TempDir again("synth");
  write_synthetic_corpus(again.path(), spec);
  CHECK(testutil::read_file(files[0]) ==
        testutil::read_file(again.path() / "lng00_Scra.txt"));
}

TEST_CASE("the synthetic corpus flows through the loading pipeline") {
  testutil::TempDir dir("synth");
  SyntheticSpec spec = small_spec();
  spec.num_sentences = 120;
  write_synthetic_corpus(dir.path(), spec);

  Vocab vocab = Vocab::build_from_directory(dir.path(), 4096, 1);
  CHECK(vocab.size() > 4 * 10);  // each language contributes its own surface tokens

  const auto corpus = build_corpus_data(dir.path(), vocab, 32);
  CHECK(corpus.registry.num_languages() == 4);
  CHECK(corpus.registry.num_scripts() == 2);
  for (const auto& chunks : corpus.entry_chunks) CHECK(!chunks.empty());

  const auto parallel = load_parallel_corpus(dir.path(), corpus.vocab, 50, 64);
  CHECK(parallel.aligned_count == 50);
  REQUIRE(parallel.sentences.size() == 4);
  for (const auto& lang : parallel.sentences) CHECK(lang.size() == 50);
}

TEST_CASE("the full-size corpus is fast to generate and well formed") {
  testutil::TempDir dir("synth");
  SyntheticSpec spec;  // defaults: 4 x 2, 200 lemmas, 2000 sentences
  spec.seed = 1;
  const auto files = write_synthetic_corpus(dir.path(), spec);
  REQUIRE(files.size() == 4);
  const auto lines = file_lines(files[0]);
  CHECK(lines.size() == 2000);

  // every lemma should surface somewhere in 2000 sentences
  const auto latent = latent_sentences(spec);
  std::vector<int> seen(200, 0);
  for (const auto& sentence : latent)
    for (int lemma : sentence) seen[static_cast<std::size_t>(lemma)] = 1;
  CHECK(std::accumulate(seen.begin(), seen.end(), 0) == 200);
}
