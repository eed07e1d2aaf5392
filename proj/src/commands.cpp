#include "langsamp/commands.hpp"

#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "langsamp/checkpoint.hpp"
#include "langsamp/config.hpp"
#include "langsamp/evaluation.hpp"
#include "langsamp/trainer.hpp"

namespace langsamp {

namespace fs = std::filesystem;

namespace {

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void ensure_parent(const fs::path& file) {
  if (!file.parent_path().empty()) fs::create_directories(file.parent_path());
}

void write_json_file(const fs::path& file, const nlohmann::json& j) {
  ensure_parent(file);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

void write_text_file(const fs::path& file, const std::string& text) {
  ensure_parent(file);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
}

nlohmann::json make_report(const std::string& kind, const RunConfig* rc, bool stamp) {
  nlohmann::json j{{"kind", kind}};
  if (rc) j["config"] = rc->echo;
  if (stamp) j["generated_at"] = iso_timestamp();
  return j;
}

Vocab require_vocab(const RunConfig& rc) {
  const fs::path file = rc.output_dir / "vocab.json";
  if (!fs::exists(file))
    throw DataError("no vocabulary at " + file.string() + "; run build-vocab first");
  return Vocab::load(file);
}

ModelConfig resolve_model(const RunConfig& rc, const CorpusData& corpus) {
  ModelConfig mc = rc.model;
  mc.vocab_size = corpus.vocab.size();
  mc.num_languages = corpus.registry.num_languages();
  mc.num_scripts = corpus.registry.num_scripts();
  mc.validate();
  return mc;
}

TrainConfig require_train(const RunConfig& rc) {
  if (!rc.has_train) throw ConfigError("run config: this subcommand needs a train section");
  return rc.train;
}

// ---- subcommand bodies --------------------------------------------------

void cmd_build_vocab(const RunConfig& rc, bool stamp) {
  const Vocab vocab = Vocab::build_from_directory(
      rc.corpus_dir, static_cast<std::size_t>(rc.vocab.max_size), rc.vocab.min_count);
  const auto registry = LanguageScriptRegistry::from_directory(rc.corpus_dir);
  fs::create_directories(rc.output_dir);
  vocab.save(rc.output_dir / "vocab.json");
  registry.save(rc.output_dir / "registry.json");

  nlohmann::json report = make_report("build-vocab", &rc, stamp);
  report["vocab_size"] = vocab.size();
  report["num_languages"] = registry.num_languages();
  report["num_scripts"] = registry.num_scripts();
  report["registry"] = registry.to_json();
  write_json_file(rc.output_dir / "vocab_report.json", report);
  std::cerr << "built vocabulary of " << vocab.size() << " tokens over "
            << registry.entries().size() << " corpus files\n";
}

void cmd_train(const RunConfig& rc, const std::string& resume, bool stamp) {
  const Vocab vocab = require_vocab(rc);
  const fs::path out = rc.output_dir / "train";

  TrainResult result;
  if (resume.empty()) {
    const TrainConfig tc = require_train(rc);
    const CorpusData corpus = build_corpus_data(rc.corpus_dir, vocab, tc.chunk_len);
    const ModelConfig mc = resolve_model(rc, corpus);
    result = train(mc, tc, corpus, out);
  } else {
    // the checkpoint carries the authoritative train config for a bit-exact
    // continuation; the run config only supplies corpus and output plumbing
    const auto loaded = load_model_checkpoint(resume);
    if (!loaded.meta.contains("train_config"))
      throw DataError("cannot resume: checkpoint has no train_config metadata");
    const TrainConfig tc = TrainConfig::from_json(loaded.meta.at("train_config"));
    const CorpusData corpus = build_corpus_data(rc.corpus_dir, vocab, tc.chunk_len);
    result = resume_training(resume, corpus, out);
  }

  nlohmann::json report = make_report("train", &rc, stamp);
  report["final_step"] = result.final_step;
  report["final_train_loss"] = result.final_train_loss;
  report["final_val_loss"] = result.final_val_loss;
  report["last_checkpoint"] = result.last_checkpoint.filename().string();
  report["stopped_early"] = result.stopped_early;
  if (!resume.empty()) report["resumed_from"] = resume;
  write_json_file(out / "train_report.json", report);
  std::cerr << "trained to step " << result.final_step << ", val loss "
            << result.final_val_loss << "\n";
}

void cmd_ablate(const RunConfig& rc, bool stamp) {
  const Vocab vocab = require_vocab(rc);
  const TrainConfig tc = require_train(rc);
  const CorpusData corpus = build_corpus_data(rc.corpus_dir, vocab, tc.chunk_len);
  const ModelConfig mc = resolve_model(rc, corpus);
  const int layer = rc.eval_layer(mc);
  const fs::path out = rc.output_dir / "ablate";

  const AblationReport ablation =
      ablation_run(rc.corpus_dir, corpus, mc, tc, layer, rc.eval.max_pairs, out);

  nlohmann::json report = make_report("ablate", &rc, stamp);
  report["eval_layer"] = layer;
  report["max_pairs"] = rc.eval.max_pairs;
  report["rows"] = ablation.to_json().at("rows");
  write_json_file(out / "ablation_report.json", report);
  std::cerr << "ablation finished: " << ablation.rows.size() << " variants\n";
}

// Shared state for the evaluation subcommands: a loaded checkpoint plus
// per-entry sentence embeddings over the parallel corpus.
struct EvalBundle {
  ModelCheckpoint ckpt;
  ParallelCorpus parallel;
  std::vector<std::string> labels;
  std::vector<Matd> embeddings;
  int layer = 0;
};

EvalBundle load_eval_bundle(const RunConfig& rc, const std::string& checkpoint) {
  EvalBundle bundle;
  bundle.ckpt = load_model_checkpoint(checkpoint);
  const Vocab vocab = require_vocab(rc);
  if (bundle.ckpt.params.config.vocab_size != vocab.size())
    throw DataError("checkpoint vocabulary size " +
                    std::to_string(bundle.ckpt.params.config.vocab_size) +
                    " does not match the stored vocabulary (" + std::to_string(vocab.size()) +
                    ")");
  bundle.parallel = load_parallel_corpus(rc.corpus_dir, vocab, rc.eval.max_pairs,
                                         bundle.ckpt.params.config.max_seq_len);
  bundle.layer = rc.eval_layer(bundle.ckpt.params.config);
  const auto params = bundle.ckpt.params.template cast<double>();
  for (std::size_t e = 0; e < bundle.parallel.sentences.size(); ++e) {
    bundle.labels.push_back(bundle.parallel.registry.entries()[e].label());
    bundle.embeddings.push_back(embed_sentences(params, bundle.parallel.sentences[e], bundle.layer));
  }
  if (bundle.embeddings.size() < 2)
    throw DataError("evaluation needs at least two corpus languages");
  return bundle;
}

void cmd_eval_retrieval(const RunConfig& rc, const std::string& checkpoint, int k, bool stamp) {
  const EvalBundle bundle = load_eval_bundle(rc, checkpoint);
  const int top_k = k > 0 ? k : rc.eval.top_k;

  nlohmann::json pairs = nlohmann::json::array();
  double mean = 0;
  long count = 0;
  for (std::size_t q = 0; q < bundle.embeddings.size(); ++q)
    for (std::size_t t = 0; t < bundle.embeddings.size(); ++t) {
      if (q == t) continue;
      const double acc = retrieval_topk(bundle.embeddings[q], bundle.embeddings[t], top_k);
      pairs.push_back({{"query", bundle.labels[q]},
                       {"target", bundle.labels[t]},
                       {"accuracy", acc}});
      mean += acc;
      ++count;
    }

  nlohmann::json report = make_report("eval-retrieval", &rc, stamp);
  report["checkpoint"] = checkpoint;
  report["k"] = top_k;
  report["layer"] = bundle.layer;
  report["aligned_count"] = bundle.parallel.aligned_count;
  report["pairs"] = std::move(pairs);
  report["mean_accuracy"] = mean / static_cast<double>(count);
  write_json_file(rc.output_dir / "retrieval_report.json", report);
  std::cerr << "retrieval top-" << top_k << " mean accuracy "
            << mean / static_cast<double>(count) << "\n";
}

void cmd_eval_similarity(const RunConfig& rc, const std::string& checkpoint, bool stamp) {
  const EvalBundle bundle = load_eval_bundle(rc, checkpoint);
  const SimilarityMatrix sim = centered_pairwise_cosine(bundle.embeddings, bundle.labels);

  nlohmann::json report = make_report("eval-similarity", &rc, stamp);
  report["checkpoint"] = checkpoint;
  report["layer"] = bundle.layer;
  report["aligned_count"] = bundle.parallel.aligned_count;
  report["similarity"] = sim.to_json();
  write_json_file(rc.output_dir / "similarity_report.json", report);
  std::cerr << "similarity matrix over " << bundle.labels.size() << " languages written\n";
}

SimilarityMatrix similarity_from_report(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open similarity report " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed similarity report " + file.string() + ": " + e.what());
  }
  if (!j.contains("similarity"))
    throw DataError(file.string() + " is not an eval-similarity report");
  const auto& s = j.at("similarity");
  SimilarityMatrix sim;
  sim.labels = s.at("labels").get<std::vector<std::string>>();
  const auto& rows = s.at("values");
  const auto n = static_cast<Eigen::Index>(sim.labels.size());
  sim.values = Matd::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) sim.values(r, c) = rows.at(r).at(c).get<double>();
  sim.skipped_pairs = s.value("skipped_pairs", 0L);
  return sim;
}

void cmd_eval_improvement(const RunConfig& rc, const std::string& base_file,
                          const std::string& model_file, bool stamp) {
  const SimilarityMatrix base = similarity_from_report(base_file);
  const SimilarityMatrix model = similarity_from_report(model_file);
  const ImprovementMatrix improvement = similarity_improvement(base, model);

  nlohmann::json report = make_report("eval-improvement", &rc, stamp);
  report["base"] = base_file;
  report["model"] = model_file;
  report["improvement"] = improvement.to_json();
  write_json_file(rc.output_dir / "improvement_report.json", report);
  std::cerr << "improvement matrix over " << improvement.labels.size() << " languages written\n";
}

// Language-embedding table plus row labels out of a checkpoint.
std::pair<Matd, std::vector<std::string>> table_with_labels(const ModelCheckpoint& ckpt,
                                                            const std::string& table) {
  std::string tensor, meta_key;
  if (table == "lang") {
    tensor = "lang_emb";
    meta_key = "lang_codes";
  } else if (table == "script") {
    tensor = "script_emb";
    meta_key = "script_codes";
  } else {
    throw ConfigError("table must be 'lang' or 'script'");
  }
  if (!ckpt.params.has(tensor))
    throw DataError("checkpoint has no " + tensor + " table (stripped or disabled)");
  if (!ckpt.meta.contains(meta_key))
    throw DataError("checkpoint metadata lacks " + meta_key);
  const auto labels = ckpt.meta.at(meta_key).get<std::vector<std::string>>();
  const Matd rows = ckpt.params.at(tensor).template cast<double>();
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows())
    throw DataError("checkpoint " + meta_key + " does not match the " + tensor + " row count");
  return {rows, labels};
}

void cmd_donor(const std::string& checkpoint, const std::string& target,
               const std::vector<std::string>& donors, const std::string& output, bool stamp) {
  const auto ckpt = load_model_checkpoint(checkpoint);
  const auto [rows, labels] = table_with_labels(ckpt, "lang");
  const DonorResult result = donor_select(rows, labels, target, donors);

  std::cout << "donor " << result.donor << " similarity " << result.similarity << "\n";
  for (const auto& [code, sim] : result.table)
    std::cout << "  " << code << " " << sim << "\n";

  if (!output.empty()) {
    nlohmann::json report = make_report("donor", nullptr, stamp);
    report["checkpoint"] = checkpoint;
    report["target"] = target;
    report["donors"] = donors;
    report["result"] = result.to_json();
    write_json_file(output, report);
  }
}

void cmd_pca(const RunConfig& rc, const std::string& checkpoint, const std::string& table,
             bool stamp) {
  const auto ckpt = load_model_checkpoint(checkpoint);
  const auto [rows, labels] = table_with_labels(ckpt, table);
  // a K-row table supports at most min(K-1, D) components
  const int dims = static_cast<int>(
      std::min<Eigen::Index>(rc.eval.pca_dims, std::min(rows.rows() - 1, rows.cols())));
  if (dims < 1) throw DataError("pca needs at least two table rows");
  const PcaResult pca = pca_project(rows, dims);

  nlohmann::json report = make_report("pca", &rc, stamp);
  report["checkpoint"] = checkpoint;
  report["table"] = table;
  report["dims"] = dims;
  report["labels"] = labels;
  report["pca"] = pca.to_json();
  write_json_file(rc.output_dir / ("pca_" + table + "_report.json"), report);
  if (dims == 2)
    write_text_file(rc.output_dir / ("pca_" + table + ".svg"),
                    svg_scatter(pca.coordinates, labels));
  std::cerr << "pca projection of " << labels.size() << " rows written\n";
}

void cmd_inspect(const std::string& checkpoint) {
  std::cout << manifest_text(inspect_checkpoint(checkpoint));
}

}  // namespace

CheckpointManifest inspect_checkpoint(const fs::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  CheckpointManifest manifest;
  manifest.path = path;
  manifest.config = file.config;
  manifest.meta = file.meta;
  for (const auto& tensor : file.tensors)
    manifest.tensors.push_back({tensor.name, tensor.dtype, tensor.rows, tensor.cols});
  return manifest;
}

std::string manifest_text(const CheckpointManifest& manifest) {
  std::ostringstream os;
  os << "checkpoint " << manifest.path.filename().string() << "\n";
  if (manifest.meta.contains("step")) os << "step " << manifest.meta.at("step") << "\n";
  os << "tensors " << manifest.tensors.size() << "\n";
  for (const auto& t : manifest.tensors)
    os << "  " << t.name << "  " << t.dtype << "  [" << t.rows << ", " << t.cols << "]\n";
  return os.str();
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"multilingual MLM pretraining with language and script embeddings"};
  app.require_subcommand(1);
  bool stamp = false;
  app.add_flag("--stamp", stamp, "include wall-clock metadata in reports");

  std::string config_file, checkpoint, resume, base_file, model_file, target, output;
  std::string table = "lang";
  std::vector<std::string> donors;
  int k = 0;

  auto* sc_vocab = app.add_subcommand("build-vocab", "build vocabulary and registry");
  sc_vocab->add_option("--config", config_file, "run config JSON")->required();

  auto* sc_train = app.add_subcommand("train", "train a model");
  sc_train->add_option("--config", config_file, "run config JSON")->required();
  sc_train->add_option("--resume", resume, "checkpoint to continue from");

  auto* sc_ablate = app.add_subcommand("ablate", "train all four embedding variants");
  sc_ablate->add_option("--config", config_file, "run config JSON")->required();

  auto* sc_retrieval = app.add_subcommand("eval-retrieval", "cross-lingual retrieval accuracy");
  sc_retrieval->add_option("--config", config_file, "run config JSON")->required();
  sc_retrieval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  sc_retrieval->add_option("--k", k, "retrieval depth (default: eval.top_k)");

  auto* sc_similarity = app.add_subcommand("eval-similarity", "centered cosine similarity");
  sc_similarity->add_option("--config", config_file, "run config JSON")->required();
  sc_similarity->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();

  auto* sc_improvement =
      app.add_subcommand("eval-improvement", "percentage change between similarity reports");
  sc_improvement->add_option("--config", config_file, "run config JSON")->required();
  sc_improvement->add_option("--base", base_file, "baseline similarity report")->required();
  sc_improvement->add_option("--model", model_file, "model similarity report")->required();

  auto* sc_donor = app.add_subcommand("donor", "closest language-embedding donor");
  sc_donor->add_option("--checkpoint", checkpoint, "checkpoint with a language table")
      ->required();
  sc_donor->add_option("--target", target, "target language code")->required();
  sc_donor->add_option("--donors", donors, "candidate donor codes")
      ->required()
      ->delimiter(',');
  sc_donor->add_option("--output", output, "optional JSON report path");

  auto* sc_pca = app.add_subcommand("pca", "project an embedding table");
  sc_pca->add_option("--config", config_file, "run config JSON")->required();
  sc_pca->add_option("--checkpoint", checkpoint, "checkpoint to project")->required();
  sc_pca->add_option("--table", table, "lang or script")
      ->check(CLI::IsMember({"lang", "script"}));

  auto* sc_inspect = app.add_subcommand("inspect", "print checkpoint tensors");
  sc_inspect->add_option("checkpoint", checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand(sc_inspect)) {
      cmd_inspect(checkpoint);
    } else if (app.got_subcommand(sc_donor)) {
      cmd_donor(checkpoint, target, donors, output, stamp);
    } else {
      const RunConfig rc = RunConfig::load(config_file);
      if (app.got_subcommand(sc_vocab)) {
        cmd_build_vocab(rc, stamp);
      } else if (app.got_subcommand(sc_train)) {
        cmd_train(rc, resume, stamp);
      } else if (app.got_subcommand(sc_ablate)) {
        cmd_ablate(rc, stamp);
      } else if (app.got_subcommand(sc_retrieval)) {
        cmd_eval_retrieval(rc, checkpoint, k, stamp);
      } else if (app.got_subcommand(sc_similarity)) {
        cmd_eval_similarity(rc, checkpoint, stamp);
      } else if (app.got_subcommand(sc_improvement)) {
        cmd_eval_improvement(rc, base_file, model_file, stamp);
      } else if (app.got_subcommand(sc_pca)) {
        cmd_pca(rc, checkpoint, table, stamp);
      }
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace langsamp
