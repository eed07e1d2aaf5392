#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "langsamp/checkpoint.hpp"
#include "langsamp/trainer.hpp"
#include "support.hpp"

using namespace langsamp;

namespace {

// Writes languages of line-aligned sentences built from short runs of
// consecutive surface tokens, so there is bigram structure to learn.
void write_test_corpus(const std::filesystem::path& dir, int num_languages, int num_sentences,
                       std::uint64_t seed) {
  const char* scripts[2] = {"Scra", "Scrb"};
  Rng rng(seed);
  std::vector<std::vector<long>> lines(static_cast<std::size_t>(num_sentences));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const long start = static_cast<long>(i % 20);  // cycle starts so t0..t22 always occur
    const long len = 4 + rng.uniform_int(5);
    for (long k = 0; k < len; ++k) lines[i].push_back((start + k) % 24);
  }
  for (int l = 0; l < num_languages; ++l) {
    const std::string prefix = "l" + std::to_string(l) + "t";
    std::string text;
    for (const auto& line : lines) {
      for (std::size_t k = 0; k < line.size(); ++k) {
        if (k > 0) text += ' ';
        text += prefix + std::to_string(line[k]);
      }
      text += '\n';
    }
    testutil::write_file(dir / ("lng" + std::to_string(l) + "_" + scripts[l % 2] + ".txt"),
                         text);
  }
}

CorpusData load_test_corpus(const std::filesystem::path& dir, int chunk_len) {
  Vocab vocab = Vocab::build_from_directory(dir, 256, 1);
  return build_corpus_data(dir, std::move(vocab), chunk_len);
}

ModelConfig tiny_model(const CorpusData& corpus, int chunk_len) {
  ModelConfig mc;
  mc.vocab_size = corpus.vocab.size();
  mc.hidden_dim = 16;
  mc.num_layers = 1;
  mc.num_heads = 2;
  mc.ffn_dim = 24;
  mc.max_seq_len = chunk_len;
  mc.num_languages = corpus.registry.num_languages();
  mc.num_scripts = corpus.registry.num_scripts();
  mc.seed = 3;
  return mc;
}

TrainConfig tiny_train(long steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.micro_batch = 4;
  tc.grad_accumulation = 2;
  tc.checkpoint_every = 1000;
  tc.seed = 17;
  tc.lr = 1e-3;
  tc.val_every = 5;
  tc.val_max_instances = 8;
  tc.chunk_len = 16;
  return tc;
}

std::vector<nlohmann::json> read_metrics(const std::filesystem::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::vector<nlohmann::json> records;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) records.push_back(nlohmann::json::parse(line));
  return records;
}

MaskedBatch mask_some(const CorpusData& corpus, int count, std::uint64_t seed) {
  std::vector<TrainingInstance> instances;
  for (const auto& chunks : corpus.entry_chunks)
    for (const auto& chunk : chunks) {
      if (static_cast<int>(instances.size()) < count) instances.push_back(chunk);
    }
  REQUIRE(static_cast<int>(instances.size()) == count);
  Rng rng(seed);
  MaskPolicy policy;
  return mask_tokens(instances, policy, corpus.vocab.size(), rng);
}

}  // namespace

TEST_CASE("train config validates and round-trips") {
  TrainConfig tc = tiny_train(10);
  tc.validate();
  const TrainConfig back = TrainConfig::from_json(tc.to_json());
  CHECK(back.to_json() == tc.to_json());

  TrainConfig bad = tiny_train(0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_train(5);
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_train(5);
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_train(5);
  bad.mask.mask_prob = 0.5;  // split no longer sums to 1
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("untrained loss sits at ln V") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 11);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const auto batch = mask_some(corpus, 6, 91);
  const double ln_v = std::log(static_cast<double>(corpus.vocab.size()));

  // zero init forces exactly uniform logits
  ModelConfig zero = tiny_model(corpus, 16);
  zero.init_std = 0.0;
  const auto params_zero = init_params<float>(zero);
  CHECK(mlm_loss(params_zero, batch) == doctest::Approx(ln_v).epsilon(1e-6));

  // default init stays within 10% of ln V across seeds
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull, 9ull, 10ull}) {
    ModelConfig mc = tiny_model(corpus, 16);
    mc.seed = seed;
    const auto params = init_params<float>(mc);
    const double loss = mlm_loss(params, batch);
    CHECK(loss > 0.9 * ln_v);
    CHECK(loss < 1.1 * ln_v);
  }
}

TEST_CASE("mean loss is invariant to duplication and instance order") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 30, 7);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const auto params = init_params<double>(tiny_model(corpus, 16));
  const auto batch = mask_some(corpus, 5, 123);

  const double base = mlm_loss(params, batch);

  MaskedBatch doubled = batch;
  for (const auto& inst : batch.instances) doubled.instances.push_back(inst);
  CHECK(mlm_loss(params, doubled) == doctest::Approx(base).epsilon(1e-9));

  MaskedBatch reversed = batch;
  std::reverse(reversed.instances.begin(), reversed.instances.end());
  CHECK(mlm_loss(params, reversed) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("whole-pipeline gradients pass the finite-difference check") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 24, 5);
  const auto corpus = load_test_corpus(dir.path(), 16);
  ModelConfig mc = tiny_model(corpus, 16);
  mc.hidden_dim = 8;
  mc.ffn_dim = 12;
  mc.init_std = 0.1;
  auto params = init_params<double>(mc);
  const auto batch = mask_some(corpus, 2, 321);

  const auto report = model_grad_check(params, batch, 3e-5);
  INFO("worst tensor ", report.worst_tensor, " rel ", report.max_rel_error);
  CHECK(report.max_rel_error <= 1e-5);
  CHECK(report.checked == params.parameter_count());
}

TEST_CASE("training reduces the loss across seeds") {
  for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
    testutil::TempDir dir("train");
    write_test_corpus(dir.path() , 2, 60, 13);
    const auto corpus = load_test_corpus(dir.path(), 16);
    TrainConfig tc = tiny_train(50);
    tc.seed = seed;
    const auto result = train(tiny_model(corpus, 16), tc, corpus, dir.path() / "out");

    const auto metrics = read_metrics(dir.path() / "out" / "metrics.jsonl");
    REQUIRE(metrics.size() == 50);
    CHECK(metrics.back().at("train_loss").get<double>() <
          metrics.front().at("train_loss").get<double>());
    CHECK(result.final_step == 50);
    CHECK(std::filesystem::exists(result.last_checkpoint));
  }
}

TEST_CASE("gradient accumulation matches the single-graph window") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 50, 19);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const ModelConfig mc = tiny_model(corpus, 16);

  TrainConfig split = tiny_train(5);
  split.micro_batch = 4;
  split.grad_accumulation = 2;
  TrainConfig whole = tiny_train(5);
  whole.micro_batch = 8;
  whole.grad_accumulation = 1;

  const auto a = train(mc, split, corpus, dir.path() / "a");
  const auto b = train(mc, whole, corpus, dir.path() / "b");

  REQUIRE(a.params.names == b.params.names);
  for (std::size_t i = 0; i < a.params.values.size(); ++i) {
    const double diff =
        (a.params.values[i] - b.params.values[i]).cwiseAbs().maxCoeff();
    INFO("tensor ", a.params.names[i]);
    CHECK(diff < 1e-4);
  }
}

TEST_CASE("identical config and seed reproduce metrics and checkpoints exactly") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 23);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const ModelConfig mc = tiny_model(corpus, 16);
  TrainConfig tc = tiny_train(8);
  tc.checkpoint_every = 4;

  train(mc, tc, corpus, dir.path() / "a");
  train(mc, tc, corpus, dir.path() / "b");

  CHECK(testutil::read_file(dir.path() / "a" / "metrics.jsonl") ==
        testutil::read_file(dir.path() / "b" / "metrics.jsonl"));
  CHECK(testutil::read_file(dir.path() / "a" / "ckpt_4.lsmp") ==
        testutil::read_file(dir.path() / "b" / "ckpt_4.lsmp"));
  CHECK(testutil::read_file(dir.path() / "a" / "ckpt_8.lsmp") ==
        testutil::read_file(dir.path() / "b" / "ckpt_8.lsmp"));
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted trajectory") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 29);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const ModelConfig mc = tiny_model(corpus, 16);
  TrainConfig tc = tiny_train(6);
  tc.checkpoint_every = 3;
  tc.val_every = 2;

  const auto full = train(mc, tc, corpus, dir.path() / "full");
  train(mc, tc, corpus, dir.path() / "half");  // same run, but we restart from step 3
  const auto resumed =
      resume_training(dir.path() / "half" / "ckpt_3.lsmp", corpus, dir.path() / "resumed");

  CHECK(resumed.final_step == 6);
  CHECK(testutil::read_file(dir.path() / "full" / "ckpt_6.lsmp") ==
        testutil::read_file(dir.path() / "resumed" / "ckpt_6.lsmp"));

  const auto all = read_metrics(dir.path() / "full" / "metrics.jsonl");
  const auto tail = read_metrics(dir.path() / "resumed" / "metrics.jsonl");
  REQUIRE(all.size() == 6);
  REQUIRE(tail.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(tail[i] == all[i + 3]);

  CHECK(full.final_val_loss == resumed.final_val_loss);

  // resume needs the same corpus
  testutil::TempDir other("train");
  write_test_corpus(other.path(), 3, 20, 31);
  const auto other_corpus = load_test_corpus(other.path(), 16);
  CHECK_THROWS_AS(
      resume_training(dir.path() / "half" / "ckpt_3.lsmp", other_corpus, dir.path() / "x"),
      ConfigError);
}

TEST_CASE("exploding updates abort with the failing step named") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 30, 37);
  const auto corpus = load_test_corpus(dir.path(), 16);
  TrainConfig tc = tiny_train(10);
  tc.lr = 1e25;
  try {
    train(tiny_model(corpus, 16), tc, corpus, dir.path() / "out");
    FAIL("expected a numeric failure");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("early stopping halts a stalled run at a checkpoint boundary") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 41);
  const auto corpus = load_test_corpus(dir.path(), 16);
  TrainConfig tc = tiny_train(40);
  tc.lr = 1e-30;  // updates vanish in float arithmetic, so val loss never improves
  tc.checkpoint_every = 2;
  tc.patience = 2;
  const auto result = train(tiny_model(corpus, 16), tc, corpus, dir.path() / "out");
  CHECK(result.stopped_early);
  CHECK(result.final_step == 4);
  CHECK(result.final_step % 2 == 0);
  CHECK(std::filesystem::exists(result.last_checkpoint));
}

TEST_CASE("ablation emits four rows with exact parameter deltas") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 43);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const ModelConfig mc = tiny_model(corpus, 16);
  const auto report =
      ablation_run(dir.path(), corpus, mc, tiny_train(4), 1, 16, dir.path() / "ablate");

  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].variant == "vanilla");
  CHECK(report.rows[1].variant == "w-lang");
  CHECK(report.rows[2].variant == "w-script");
  CHECK(report.rows[3].variant == "w-both");

  const long l = mc.num_languages, s = mc.num_scripts, d = mc.hidden_dim;
  CHECK(report.rows[1].param_count - report.rows[0].param_count == l * d);
  CHECK(report.rows[2].param_count - report.rows[0].param_count == s * d);
  CHECK(report.rows[3].param_count - report.rows[0].param_count == (l + s) * d);

  for (const auto& row : report.rows) {
    CHECK(std::isfinite(row.heldout_loss));
    CHECK(row.retrieval_top1 >= 0.0);
    CHECK(row.retrieval_top1 <= 1.0);
  }
  const auto j = report.to_json();
  CHECK(j.at("rows").size() == 4);
}

TEST_CASE("with zeroed frozen tables all four ablation variants coincide") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 1, 40, 47);  // L = S = 1
  const auto corpus = load_test_corpus(dir.path(), 16);
  const ModelConfig mc = tiny_model(corpus, 16);
  REQUIRE(mc.num_languages == 1);
  REQUIRE(mc.num_scripts == 1);

  TrainConfig tc = tiny_train(5);
  tc.freeze_aux_tables = true;
  tc.zero_aux_tables = true;
  const auto report = ablation_run(dir.path(), corpus, mc, tc, 1, 16, dir.path() / "ablate");
  REQUIRE(report.rows.size() == 4);
  for (int i = 1; i < 4; ++i)
    CHECK(report.rows[static_cast<std::size_t>(i)].heldout_loss ==
          doctest::Approx(report.rows[0].heldout_loss).epsilon(1e-6));
}

TEST_CASE("finetuning separates two synthetic classes and ignores stripped tables") {
  testutil::TempDir dir("train");
  write_test_corpus(dir.path(), 2, 40, 53);
  const auto corpus = load_test_corpus(dir.path(), 16);
  const auto params = init_params<float>(tiny_model(corpus, 16));

  // linearly separable: class 0 uses low tokens, class 1 uses high tokens
  std::vector<std::pair<std::string, int>> examples;
  for (int i = 0; i < 8; ++i) {
    examples.emplace_back("l0t" + std::to_string(i % 4) + " l0t" + std::to_string((i + 1) % 4),
                          0);
    examples.emplace_back(
        "l1t" + std::to_string(10 + i % 4) + " l1t" + std::to_string(10 + (i + 1) % 4), 1);
  }

  FinetuneOptions options;
  options.lr = 5e-3;
  options.epochs = 40;
  options.batch_size = 8;
  const auto result = finetune_classifier(params, corpus.vocab, examples, 2, options);
  CHECK(result.accuracy == 1.0);
  CHECK(result.epochs_run <= 40);

  // the exact same path runs on a parameter set without the tables
  ModelParams<float> stripped;
  stripped.config = params.config;
  for (std::size_t i = 0; i < params.names.size(); ++i)
    if (params.names[i] != "lang_emb" && params.names[i] != "script_emb")
      stripped.add(params.names[i], params.values[i]);
  const auto bare = finetune_classifier(stripped, corpus.vocab, examples, 2, options);
  CHECK(bare.accuracy == 1.0);

  // determinism
  const auto again = finetune_classifier(params, corpus.vocab, examples, 2, options);
  CHECK(again.accuracy == result.accuracy);
  CHECK(again.epochs_run == result.epochs_run);
  CHECK((again.head_w.array() == result.head_w.array()).all());

  CHECK_THROWS_AS(finetune_classifier(params, corpus.vocab, {}, 2, options), ValueError);
  CHECK_THROWS_AS(finetune_classifier(params, corpus.vocab, {{"l0t1", 2}}, 2, options),
                  ValueError);
}
