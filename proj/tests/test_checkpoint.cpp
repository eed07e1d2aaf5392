#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "langsamp/checkpoint.hpp"
#include "langsamp/model.hpp"
#include "support.hpp"

using namespace langsamp;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 17;
  c.hidden_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.max_seq_len = 10;
  c.num_languages = 3;
  c.num_scripts = 2;
  c.seed = 21;
  return c;
}

AdamWState<float> dummy_optimizer(const ModelParams<float>& params) {
  std::vector<const Matf*> ptrs;
  for (const auto& v : params.values) ptrs.push_back(&v);
  auto state = AdamWState<float>::zeros_like(ptrs, AdamWOptions<float>{});
  state.step_count = 12;
  for (auto& m : state.m) m.setConstant(0.25f);
  for (auto& v : state.v) v.setConstant(0.5f);
  return state;
}

}  // namespace

TEST_CASE("crc32 matches the reference check value") {
  const std::string check = "123456789";
  CHECK(crc32({reinterpret_cast<const unsigned char*>(check.data()), check.size()}) ==
        0xCBF43926u);
  CHECK(crc32({}) == 0u);
}

TEST_CASE("save, load, save is byte-identical") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  const auto optim = dummy_optimizer(params);
  nlohmann::json meta{{"step", 40}, {"last_val_loss", 2.875}, {"lang_codes", {"deu", "eng"}}};

  const auto a_path = dir.path() / "a.lsmp";
  const auto b_path = dir.path() / "b.lsmp";
  write_checkpoint(make_model_checkpoint(params, meta, &optim), a_path);

  const auto loaded = load_model_checkpoint(a_path);
  CHECK(loaded.meta.at("step") == 40);
  CHECK(loaded.meta.at("last_val_loss") == 2.875);
  REQUIRE(loaded.has_optimizer);
  CHECK(loaded.optim_step_count == 12);

  AdamWState<float> optim2;
  optim2.step_count = loaded.optim_step_count;
  optim2.m = loaded.optim_m;
  optim2.v = loaded.optim_v;
  nlohmann::json meta2 = loaded.meta;
  meta2.erase("optim_step_count");
  write_checkpoint(make_model_checkpoint(loaded.params, meta2, &optim2), b_path);

  CHECK(testutil::read_file(a_path) == testutil::read_file(b_path));
}

TEST_CASE("forward pass is bit-exact across a round trip") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  const std::vector<int> ids{2, 9, 14, 3};
  const Matf before = lm_logits(params, ids, 1, 0);

  const auto path = dir.path() / "m.lsmp";
  write_checkpoint(make_model_checkpoint(params, nlohmann::json::object()), path);
  const auto loaded = load_model_checkpoint(path);
  CHECK_FALSE(loaded.has_optimizer);
  REQUIRE(loaded.params.names == params.names);
  const Matf after = lm_logits(loaded.params, ids, 1, 0);
  CHECK((before.array() == after.array()).all());
}

TEST_CASE("one corrupted payload byte is reported with the tensor name") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  const auto path = dir.path() / "m.lsmp";
  write_checkpoint(make_model_checkpoint(params, nlohmann::json::object()), path);

  std::string blob = testutil::read_file(path);
  blob[blob.size() - 1] = static_cast<char>(blob[blob.size() - 1] ^ 0x40);  // last tensor: head_b
  testutil::write_file(path, blob);

  try {
    read_checkpoint(path);
    FAIL("expected a checksum error");
  } catch (const IoError& e) {
    const std::string what = e.what();
    CHECK(what.find("checksum mismatch") != std::string::npos);
    CHECK(what.find("head_b") != std::string::npos);
  }
}

TEST_CASE("bad magic and truncation are rejected") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  const auto path = dir.path() / "m.lsmp";
  write_checkpoint(make_model_checkpoint(params, nlohmann::json::object()), path);
  const std::string blob = testutil::read_file(path);

  testutil::write_file(path, "NOTLSMP1" + blob.substr(8));
  CHECK_THROWS_AS(read_checkpoint(path), IoError);

  testutil::write_file(path, blob.substr(0, blob.size() - 3));  // clip payload
  CHECK_THROWS_AS(read_checkpoint(path), IoError);

  testutil::write_file(path, blob.substr(0, 10));  // clip header
  CHECK_THROWS_AS(read_checkpoint(path), IoError);

  CHECK_THROWS_AS(read_checkpoint(dir.path() / "absent.lsmp"), IoError);
}

TEST_CASE("stripped language and script tables still load") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  auto file = make_model_checkpoint(params, nlohmann::json::object());
  std::erase_if(file.tensors, [](const RawTensor& t) {
    return t.name == "model/lang_emb" || t.name == "model/script_emb";
  });
  const auto path = dir.path() / "stripped.lsmp";
  write_checkpoint(file, path);

  const auto loaded = load_model_checkpoint(path);
  CHECK_FALSE(loaded.params.has("lang_emb"));
  CHECK_FALSE(loaded.params.has("script_emb"));
  CHECK(loaded.params.has("tok_emb"));

  // the encoder is indifferent; only the MLM head misses the tables
  const std::vector<int> ids{2, 5, 7};
  const Matf h = hidden_at_layer(loaded.params, ids, 2);
  const Matf h_full = hidden_at_layer(params, ids, 2);
  CHECK((h.array() == h_full.array()).all());
  CHECK_THROWS_AS(lm_logits(loaded.params, ids, 0, 0), DataError);
}

TEST_CASE("missing backbone tensors and unknown names are rejected") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());

  auto missing = make_model_checkpoint(params, nlohmann::json::object());
  std::erase_if(missing.tensors, [](const RawTensor& t) { return t.name == "model/ln_f_g"; });
  const auto p1 = dir.path() / "missing.lsmp";
  write_checkpoint(missing, p1);
  try {
    load_model_checkpoint(p1);
    FAIL("expected a missing-tensor error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("ln_f_g") != std::string::npos);
  }

  auto unknown = make_model_checkpoint(params, nlohmann::json::object());
  unknown.tensors.push_back(to_raw<float>("model/bogus", Matf(Matf::Zero(1, 1))));
  const auto p2 = dir.path() / "unknown.lsmp";
  write_checkpoint(unknown, p2);
  CHECK_THROWS_AS(load_model_checkpoint(p2), IoError);

  auto misshapen = make_model_checkpoint(params, nlohmann::json::object());
  for (auto& t : misshapen.tensors)
    if (t.name == "model/head_b") t = to_raw<float>("model/head_b", Matf(Matf::Zero(1, 3)));
  const auto p3 = dir.path() / "shape.lsmp";
  write_checkpoint(misshapen, p3);
  CHECK_THROWS_AS(load_model_checkpoint(p3), IoError);
}

TEST_CASE("partial optimizer state is rejected") {
  testutil::TempDir dir("ckpt");
  const auto params = init_params<float>(small_config());
  const auto optim = dummy_optimizer(params);
  auto file = make_model_checkpoint(params, nlohmann::json::object(), &optim);
  std::erase_if(file.tensors, [](const RawTensor& t) { return t.name == "optim/v/tok_emb"; });
  const auto path = dir.path() / "partial.lsmp";
  write_checkpoint(file, path);
  CHECK_THROWS_AS(load_model_checkpoint(path), IoError);
}

TEST_CASE("raw round trip preserves doubles and rejects dtype mismatches") {
  Matd m(2, 3);
  m << 1.0, -2.5, 3.25, 0.0, 1e-300, -7.125;
  const RawTensor t = to_raw<double>("x", m);
  CHECK(t.dtype == "f64");
  const Matd back = from_raw<double>(t);
  CHECK((back.array() == m.array()).all());
  CHECK_THROWS_AS(from_raw<float>(t), IoError);
}
