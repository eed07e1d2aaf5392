#include "langsamp/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "langsamp/checkpoint.hpp"
#include "langsamp/evaluation.hpp"

namespace langsamp {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be positive");
  if (micro_batch < 1 || grad_accumulation < 1)
    throw ConfigError("train: micro_batch and grad_accumulation must be positive");
  if (checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("train: val_fraction must lie in [0, 1)");
  if (val_max_instances < 1) throw ConfigError("train: val_max_instances must be positive");
  if (val_every < 1) throw ConfigError("train: val_every must be positive");
  if (patience < 0) throw ConfigError("train: patience must be nonnegative");
  if (chunk_len < 8) throw ConfigError("train: chunk_len must be at least 8");
  if (!(temperature > 0.0 && temperature <= 1.0))
    throw ConfigError("train: temperature must lie in (0, 1]");
  mask.validate();
  optimizer_options().validate();
}

AdamWOptions<float> TrainConfig::optimizer_options() const {
  AdamWOptions<float> opt;
  opt.lr = static_cast<float>(lr);
  opt.beta1 = static_cast<float>(beta1);
  opt.beta2 = static_cast<float>(beta2);
  opt.eps = static_cast<float>(eps);
  opt.weight_decay = static_cast<float>(weight_decay);
  return opt;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"micro_batch", micro_batch},
          {"grad_accumulation", grad_accumulation},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"weight_decay", weight_decay},
          {"mask_rate", mask.mask_rate},
          {"mask_prob", mask.mask_prob},
          {"random_prob", mask.random_prob},
          {"keep_prob", mask.keep_prob},
          {"val_fraction", val_fraction},
          {"val_max_instances", val_max_instances},
          {"val_every", val_every},
          {"patience", patience},
          {"freeze_aux_tables", freeze_aux_tables},
          {"zero_aux_tables", zero_aux_tables},
          {"chunk_len", chunk_len},
          {"temperature", temperature}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.micro_batch = j.value("micro_batch", c.micro_batch);
  c.grad_accumulation = j.value("grad_accumulation", c.grad_accumulation);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.mask.mask_rate = j.value("mask_rate", c.mask.mask_rate);
  c.mask.mask_prob = j.value("mask_prob", c.mask.mask_prob);
  c.mask.random_prob = j.value("random_prob", c.mask.random_prob);
  c.mask.keep_prob = j.value("keep_prob", c.mask.keep_prob);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.val_max_instances = j.value("val_max_instances", c.val_max_instances);
  c.val_every = j.value("val_every", c.val_every);
  c.patience = j.value("patience", c.patience);
  c.freeze_aux_tables = j.value("freeze_aux_tables", c.freeze_aux_tables);
  c.zero_aux_tables = j.value("zero_aux_tables", c.zero_aux_tables);
  c.chunk_len = j.value("chunk_len", c.chunk_len);
  c.temperature = j.value("temperature", c.temperature);
  c.validate();
  return c;
}

namespace {

struct CorpusSplit {
  std::vector<std::vector<TrainingInstance>> train_chunks;  // parallel to entries
  std::vector<TrainingInstance> val_instances;
};

// Per-entry tail chunks become validation data, capped globally; every entry
// keeps at least one training chunk. If the fraction rounds to nothing
// everywhere, the first chunk of each entry doubles as a validation probe.
CorpusSplit split_corpus(const CorpusData& corpus, const TrainConfig& tc) {
  CorpusSplit split;
  long cap = tc.val_max_instances;
  for (const auto& chunks : corpus.entry_chunks) {
    const auto n = static_cast<long>(chunks.size());
    long v = std::min<long>(n - 1, static_cast<long>(std::floor(tc.val_fraction * n)));
    v = std::max<long>(0, std::min(v, cap));
    split.train_chunks.emplace_back(chunks.begin(), chunks.end() - v);
    for (long i = n - v; i < n; ++i) split.val_instances.push_back(chunks[i]);
    cap -= v;
  }
  if (split.val_instances.empty()) {
    long cap2 = tc.val_max_instances;
    for (const auto& chunks : corpus.entry_chunks) {
      if (cap2 == 0) break;
      split.val_instances.push_back(chunks.front());
      --cap2;
    }
  }
  return split;
}

std::string step_filename(long step) { return "ckpt_" + std::to_string(step) + ".lsmp"; }

// Everything one optimization run needs, fresh or resumed.
struct Run {
  const ModelConfig model_config;
  const TrainConfig config;
  const CorpusData* corpus;
  std::filesystem::path output_dir;

  CorpusSplit split;
  MaskedBatch val_batch;
  ModelParams<float> params;
  AdamWState<float> optim;
  std::vector<std::uint8_t> frozen;
  BatchSampler sampler;
  Rng mask_rng;

  long step = 0;
  double last_train_loss = 0.0;
  double last_val_loss = 0.0;
  long last_val_step = 0;
  double best_val = 0.0;
  long best_step = 0;
  long stall = 0;

  Run(ModelConfig mc, TrainConfig tc, const CorpusData& data,
      std::filesystem::path out_dir)
      : model_config(std::move(mc)),
        config(std::move(tc)),
        corpus(&data),
        output_dir(std::move(out_dir)),
        split(split_corpus(data, config)),
        sampler(&split.train_chunks,
                temperature_weights(data.token_counts(), config.temperature),
                derive_seed(config.seed, "sampler")),
        mask_rng(derive_seed(config.seed, "mask")) {
    model_config.validate();
    config.validate();
    if (model_config.vocab_size != corpus->vocab.size())
      throw ConfigError("train: model vocab_size " + std::to_string(model_config.vocab_size) +
                        " does not match the vocabulary (" +
                        std::to_string(corpus->vocab.size()) + ")");
    if (model_config.num_languages != corpus->registry.num_languages() ||
        model_config.num_scripts != corpus->registry.num_scripts())
      throw ConfigError("train: model language/script counts do not match the corpus");
    if (model_config.max_seq_len < config.chunk_len)
      throw ConfigError("train: chunk_len exceeds the model's max_seq_len");
    if (corpus->chunk_len != config.chunk_len)
      throw ConfigError("train: corpus was chunked with a different chunk_len");

    Rng val_rng(derive_seed(config.seed, "val"));
    val_batch = mask_tokens(split.val_instances, config.mask, model_config.vocab_size, val_rng);
  }

  std::vector<Matf*> param_ptrs() {
    std::vector<Matf*> ptrs;
    ptrs.reserve(params.values.size());
    for (auto& v : params.values) ptrs.push_back(&v);
    return ptrs;
  }

  void init_fresh() {
    params = init_params<float>(model_config);
    if (config.zero_aux_tables) {
      if (params.has("lang_emb")) params.at("lang_emb").setZero();
      if (params.has("script_emb")) params.at("script_emb").setZero();
    }
    std::vector<const Matf*> cptrs;
    for (const auto& v : params.values) cptrs.push_back(&v);
    optim = AdamWState<float>::zeros_like(cptrs, config.optimizer_options());
    mark_frozen();
    last_val_loss = mlm_loss(params, val_batch);
    last_val_step = 0;
    best_val = last_val_loss;
    best_step = 0;
    stall = 0;
  }

  void mark_frozen() {
    frozen.assign(params.values.size(), 0);
    if (config.freeze_aux_tables) {
      for (std::size_t i = 0; i < params.names.size(); ++i)
        if (params.names[i] == "lang_emb" || params.names[i] == "script_emb") frozen[i] = 1;
    }
  }

  void write_checkpoint_file() {
    nlohmann::json meta;
    meta["step"] = step;
    meta["train_config"] = config.to_json();
    meta["lang_codes"] = corpus->registry.lang_codes();
    meta["script_codes"] = corpus->registry.script_codes();
    meta["cursors"] = sampler.cursors();
    meta["rng_sampler"] = sampler.rng_state();
    meta["rng_mask"] = mask_rng.save_state();
    meta["last_train_loss"] = last_train_loss;
    meta["last_val_loss"] = last_val_loss;
    meta["last_val_step"] = last_val_step;
    meta["best_val"] = best_val;
    meta["best_step"] = best_step;
    meta["stall"] = stall;
    write_checkpoint(make_model_checkpoint(params, std::move(meta), &optim),
                     output_dir / step_filename(step));
  }

  TrainResult finish(bool stopped_early) {
    TrainResult result;
    result.params = params;
    result.final_step = step;
    result.final_train_loss = last_train_loss;
    result.final_val_loss = last_val_loss;
    result.last_checkpoint = output_dir / step_filename(step);
    result.stopped_early = stopped_early;
    return result;
  }

  TrainResult loop(bool fresh) {
    std::filesystem::create_directories(output_dir);
    std::ofstream metrics(output_dir / "metrics.jsonl",
                          fresh ? std::ios::trunc : std::ios::app);
    if (!metrics)
      throw IoError("cannot open metrics log in " + output_dir.string());

    const int window_size = config.micro_batch * config.grad_accumulation;
    std::vector<Matf> accum;
    accum.reserve(params.values.size());
    for (const auto& v : params.values) accum.push_back(Matf::Zero(v.rows(), v.cols()));
    std::vector<const Matf*> accum_ptrs;
    for (const auto& a : accum) accum_ptrs.push_back(&a);
    const auto ptrs = param_ptrs();

    bool stopped_early = false;
    while (step < config.steps) {
      ++step;

      std::vector<TrainingInstance> window;
      window.reserve(static_cast<std::size_t>(window_size));
      for (int i = 0; i < window_size; ++i) window.push_back(sampler.next_instance());
      const MaskedBatch masked =
          mask_tokens(window, config.mask, model_config.vocab_size, mask_rng);
      const long total_masked = masked.total_masked();

      for (auto& a : accum) a.setZero();
      double train_loss = 0.0;
      try {
        for (int m = 0; m < config.grad_accumulation; ++m) {
          Graph<float> graph;
          const auto bound = bind_model(graph, params, true);
          const std::span<const MaskedInstance> slice(
              masked.instances.data() + static_cast<std::size_t>(m) * config.micro_batch,
              static_cast<std::size_t>(config.micro_batch));
          auto loss = mlm_loss_var(bound, slice, total_masked);
          train_loss += static_cast<double>(loss.value()(0, 0));
          graph.backward(loss.id);
          for (std::size_t t = 0; t < accum.size(); ++t) accum[t] += bound.vars[t].grad();
        }
      } catch (const NumericError& e) {
        throw NumericError("training step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(train_loss))
        throw NumericError("non-finite training loss at step " + std::to_string(step));
      adamw_step(std::span<Matf* const>(ptrs), std::span<const Matf* const>(accum_ptrs), optim,
                 frozen);
      last_train_loss = train_loss;

      if (step % config.val_every == 0 || step == config.steps) {
        last_val_loss = mlm_loss(params, val_batch);
        last_val_step = step;
      }
      metrics << nlohmann::json{{"step", step},
                                {"train_loss", train_loss},
                                {"val_loss", last_val_loss},
                                {"lr", config.lr}}
                     .dump()
              << '\n';
      metrics.flush();

      const bool boundary = step % config.checkpoint_every == 0;
      if (boundary) {
        if (last_val_step != step) {
          last_val_loss = mlm_loss(params, val_batch);
          last_val_step = step;
        }
        if (last_val_loss < best_val) {
          best_val = last_val_loss;
          best_step = step;
          stall = 0;
        } else {
          ++stall;
        }
        write_checkpoint_file();
        if (config.patience > 0 && stall >= config.patience) {
          stopped_early = true;
          break;
        }
      }
      if (step == config.steps && !boundary) write_checkpoint_file();
    }
    return finish(stopped_early);
  }
};

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const CorpusData& corpus, const std::filesystem::path& output_dir) {
  Run run(model_config, train_config, corpus, output_dir);
  run.init_fresh();
  return run.loop(true);
}

TrainResult resume_training(const std::filesystem::path& checkpoint_path,
                            const CorpusData& corpus, const std::filesystem::path& output_dir) {
  const ModelCheckpoint loaded = load_model_checkpoint(checkpoint_path);
  if (!loaded.has_optimizer)
    throw IoError("cannot resume: checkpoint has no optimizer state (" +
                  checkpoint_path.string() + ")");
  const TrainConfig tc = TrainConfig::from_json(loaded.meta.at("train_config"));

  Run run(loaded.params.config, tc, corpus, output_dir);
  const auto lang_codes = loaded.meta.at("lang_codes").get<std::vector<std::string>>();
  const auto script_codes = loaded.meta.at("script_codes").get<std::vector<std::string>>();
  if (lang_codes != corpus.registry.lang_codes() ||
      script_codes != corpus.registry.script_codes())
    throw DataError("cannot resume: corpus languages differ from the checkpoint's");

  run.params = loaded.params;
  run.optim.step_count = loaded.optim_step_count;
  run.optim.m = loaded.optim_m;
  run.optim.v = loaded.optim_v;
  run.optim.hyper = tc.optimizer_options();
  run.mark_frozen();
  run.sampler.restore(loaded.meta.at("cursors").get<std::vector<std::uint64_t>>(),
                      loaded.meta.at("rng_sampler").get<std::string>());
  run.mask_rng.load_state(loaded.meta.at("rng_mask").get<std::string>());
  run.step = loaded.meta.at("step").get<long>();
  run.last_train_loss = loaded.meta.at("last_train_loss").get<double>();
  run.last_val_loss = loaded.meta.at("last_val_loss").get<double>();
  run.last_val_step = loaded.meta.at("last_val_step").get<long>();
  run.best_val = loaded.meta.at("best_val").get<double>();
  run.best_step = loaded.meta.at("best_step").get<long>();
  run.stall = loaded.meta.at("stall").get<long>();
  return run.loop(false);
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows)
    rows_json.push_back({{"variant", row.variant},
                         {"param_count", row.param_count},
                         {"heldout_loss", row.heldout_loss},
                         {"retrieval_top1", row.retrieval_top1}});
  return {{"rows", std::move(rows_json)}};
}

AblationReport ablation_run(const std::filesystem::path& corpus_dir, const CorpusData& corpus,
                            const ModelConfig& base_model, const TrainConfig& train_config,
                            int eval_layer, long max_pairs,
                            const std::filesystem::path& output_dir) {
  if (eval_layer < 0 || eval_layer > base_model.num_layers)
    throw ConfigError("ablate: eval_layer out of range");

  // shared evaluation data: the corpus read as line-aligned parallel text
  std::optional<ParallelCorpus> parallel;
  if (corpus.registry.num_languages() >= 2)
    parallel = load_parallel_corpus(corpus_dir, corpus.vocab, max_pairs,
                                    base_model.max_seq_len);

  const struct {
    const char* name;
    bool lang, script;
  } variants[4] = {
      {"vanilla", false, false}, {"w-lang", true, false},
      {"w-script", false, true}, {"w-both", true, true}};

  AblationReport report;
  for (const auto& variant : variants) {
    ModelConfig mc = base_model;
    mc.use_lang_emb = variant.lang;
    mc.use_script_emb = variant.script;
    const TrainResult result = train(mc, train_config, corpus, output_dir / variant.name);

    AblationRow row;
    row.variant = variant.name;
    row.param_count = result.params.parameter_count();
    row.heldout_loss = result.final_val_loss;
    if (parallel) {
      const ModelParams<double> eval_params = result.params.cast<double>();
      std::vector<Matd> embeddings;
      for (const auto& sentences : parallel->sentences)
        embeddings.push_back(embed_sentences(eval_params, sentences, eval_layer));
      double total = 0.0;
      long pairs = 0;
      for (std::size_t q = 0; q < embeddings.size(); ++q)
        for (std::size_t t = 0; t < embeddings.size(); ++t) {
          if (q == t) continue;
          total += retrieval_topk(embeddings[q], embeddings[t], 1);
          ++pairs;
        }
      row.retrieval_top1 = total / static_cast<double>(pairs);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

FinetuneResult finetune_classifier(ModelParams<float> params, const Vocab& vocab,
                                   const std::vector<std::pair<std::string, int>>& examples,
                                   int num_classes, const FinetuneOptions& options) {
  if (examples.empty()) throw ValueError("finetune: empty training set");
  if (num_classes < 2) throw ValueError("finetune: need at least 2 classes");
  if (options.epochs < 1 || options.batch_size < 1)
    throw ValueError("finetune: epochs and batch_size must be positive");
  if (vocab.size() != params.config.vocab_size)
    throw ConfigError("finetune: vocabulary does not match the checkpoint");

  // [CLS] tokens [SEP], truncated to the model's window
  std::vector<std::vector<int>> inputs;
  std::vector<int> labels;
  for (const auto& [text, label] : examples) {
    if (label < 0 || label >= num_classes)
      throw ValueError("finetune: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    std::vector<int> ids = vocab.encode(text);
    if (ids.empty()) throw DataError("finetune: example encodes to no tokens: " + text);
    const std::size_t budget = static_cast<std::size_t>(params.config.max_seq_len) - 2;
    if (ids.size() > budget) ids.resize(budget);
    std::vector<int> wrapped;
    wrapped.reserve(ids.size() + 2);
    wrapped.push_back(Vocab::kCls);
    wrapped.insert(wrapped.end(), ids.begin(), ids.end());
    wrapped.push_back(Vocab::kSep);
    inputs.push_back(std::move(wrapped));
    labels.push_back(label);
  }

  Rng rng(derive_seed(options.seed, "finetune"));
  const int d = params.config.hidden_dim;
  Matf head_w(d, num_classes);
  for (Eigen::Index i = 0; i < head_w.size(); ++i)
    head_w.data()[i] = static_cast<float>(rng.normal() * 0.02);
  Matf head_b = Matf::Zero(1, num_classes);

  AdamWOptions<float> opt;
  opt.lr = static_cast<float>(options.lr);
  std::vector<const Matf*> cptrs;
  for (const auto& v : params.values) cptrs.push_back(&v);
  cptrs.push_back(&head_w);
  cptrs.push_back(&head_b);
  auto optim = AdamWState<float>::zeros_like(cptrs, opt);

  std::vector<Matf*> ptrs;
  for (auto& v : params.values) ptrs.push_back(&v);
  ptrs.push_back(&head_w);
  ptrs.push_back(&head_b);

  const auto classify = [&](const std::vector<int>& ids) {
    Graph<float> graph;
    const auto bound = bind_model(graph, params, false);
    const auto acts = encode(bound, std::span<const int>(ids));
    const Matf h = acts.final_hidden().value();
    const Matf logits = (h.row(0) * head_w) + head_b;
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    return static_cast<int>(best);
  };
  const auto accuracy_now = [&]() {
    long correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (classify(inputs[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(inputs.size());
  };

  FinetuneResult result;
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(i))]);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      Graph<float> graph;
      const auto bound = bind_model(graph, params, true);
      auto head_w_var = leaf(graph, head_w, true);
      auto head_b_var = leaf(graph, head_b, true);
      std::vector<Var<float>> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ids = inputs[order[i]];
        const auto acts = encode(bound, std::span<const int>(ids));
        const auto cls = gather_rows(acts.final_hidden(), std::vector<int>{0});
        const auto logits = add_rowvec(matmul(cls, head_w_var), head_b_var);
        losses.push_back(cross_entropy_sum(logits, std::vector<int>{labels[order[i]]}));
      }
      auto loss = scale(sum_vars(std::span<const Var<float>>(losses)),
                        1.0f / static_cast<float>(end - start));
      if (!std::isfinite(loss.value()(0, 0)))
        throw NumericError("non-finite fine-tuning loss in epoch " + std::to_string(epoch + 1));
      graph.backward(loss.id);

      std::vector<Matf> grads;
      grads.reserve(ptrs.size());
      for (const auto& var : bound.vars) grads.push_back(var.grad());
      grads.push_back(head_w_var.grad());
      grads.push_back(head_b_var.grad());
      std::vector<const Matf*> grad_ptrs;
      for (const auto& g : grads) grad_ptrs.push_back(&g);
      adamw_step(std::span<Matf* const>(ptrs), std::span<const Matf* const>(grad_ptrs), optim);
    }

    result.epochs_run = epoch + 1;
    result.accuracy = accuracy_now();
    if (result.accuracy == 1.0) break;
  }
  result.head_w = head_w;
  result.head_b = head_b;
  return result;
}

}  // namespace langsamp
