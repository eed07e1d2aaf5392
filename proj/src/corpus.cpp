#include "langsamp/corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace langsamp {

std::vector<std::string> read_sentences(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open corpus file: " + file.string());
  std::vector<std::string> sentences;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) sentences.push_back(line);
  return sentences;
}

std::vector<TrainingInstance> make_chunks(const Vocab& vocab,
                                          std::span<const std::string> sentences, int lang_id,
                                          int script_id, int chunk_len) {
  if (chunk_len < 8) throw ValueError("make_chunks: chunk_len must be at least 8");
  if (lang_id < 0 || script_id < 0)
    throw ValueError("make_chunks: lang_id and script_id must be nonnegative");

  std::vector<int> stream;
  stream.push_back(Vocab::kCls);
  for (const std::string& sentence : sentences) {
    const std::vector<int> ids = vocab.encode(sentence);
    if (ids.empty()) continue;  // whitespace-only line
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(Vocab::kSep);
  }
  if (stream.size() == 1) return {};  // no sentences, nothing to chunk

  std::vector<TrainingInstance> chunks;
  for (std::size_t start = 0; start < stream.size(); start += chunk_len) {
    TrainingInstance inst;
    inst.lang_id = lang_id;
    inst.script_id = script_id;
    const std::size_t end = std::min(stream.size(), start + chunk_len);
    inst.token_ids.assign(stream.begin() + start, stream.begin() + end);
    inst.token_ids.resize(static_cast<std::size_t>(chunk_len), Vocab::kPad);
    chunks.push_back(std::move(inst));
  }
  return chunks;
}

std::vector<double> temperature_weights(std::span<const double> counts, double temperature) {
  if (counts.empty()) throw ValueError("temperature_weights: empty count vector");
  if (!(temperature > 0.0) || temperature > 1.0)
    throw ValueError("temperature_weights: temperature must lie in (0, 1]");
  std::vector<double> weights(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] > 0.0))
      throw ValueError("temperature_weights: counts must be positive (entry " +
                       std::to_string(i) + ")");
    weights[i] = std::pow(counts[i], temperature);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  return weights;
}

int sample_entry(std::span<const double> weights, Rng& rng) {
  return rng.categorical(weights);
}

std::pair<int, int> sample_language_script(const LanguageScriptRegistry& registry,
                                           std::span<const double> weights, Rng& rng) {
  if (weights.size() != registry.entries().size())
    throw ShapeError("sample_language_script: one weight per registry entry required");
  const RegistryEntry& e = registry.entries()[static_cast<std::size_t>(sample_entry(weights, rng))];
  return {e.lang_id, e.script_id};
}

std::vector<double> CorpusData::token_counts() const {
  std::vector<double> counts;
  counts.reserve(registry.entries().size());
  for (const RegistryEntry& e : registry.entries())
    counts.push_back(static_cast<double>(e.token_count));
  return counts;
}

CorpusData build_corpus_data(const std::filesystem::path& dir, Vocab vocab, int chunk_len) {
  CorpusData data;
  data.registry = LanguageScriptRegistry::from_directory(dir);
  data.vocab = std::move(vocab);
  data.chunk_len = chunk_len;
  data.entry_chunks.reserve(data.registry.entries().size());
  for (const RegistryEntry& e : data.registry.entries()) {
    const auto sentences = read_sentences(dir / e.filename());
    data.entry_chunks.push_back(
        make_chunks(data.vocab, sentences, e.lang_id, e.script_id, chunk_len));
  }
  return data;
}

BatchSampler::BatchSampler(const std::vector<std::vector<TrainingInstance>>* entry_chunks,
                           std::vector<double> weights, std::uint64_t seed)
    : entry_chunks_(entry_chunks), weights_(std::move(weights)), rng_(seed) {
  if (entry_chunks_ == nullptr) throw ValueError("BatchSampler: null chunk list");
  if (weights_.size() != entry_chunks_->size())
    throw ShapeError("BatchSampler: one weight per entry required");
  for (std::size_t i = 0; i < weights_.size(); ++i)
    if (weights_[i] > 0.0 && (*entry_chunks_)[i].empty())
      throw DataError("BatchSampler: entry " + std::to_string(i) +
                      " has positive weight but no chunks");
  cursors_.assign(entry_chunks_->size(), 0);
}

const TrainingInstance& BatchSampler::next_instance() {
  const auto entry = static_cast<std::size_t>(rng_.categorical(weights_));
  const auto& chunks = (*entry_chunks_)[entry];
  const TrainingInstance& inst = chunks[static_cast<std::size_t>(cursors_[entry])];
  cursors_[entry] = (cursors_[entry] + 1) % chunks.size();  // wrap-around recycling
  return inst;
}

std::vector<TrainingInstance> BatchSampler::next_batch(int batch_size) {
  if (batch_size < 1) throw ValueError("BatchSampler: batch_size must be positive");
  std::vector<TrainingInstance> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) batch.push_back(next_instance());
  return batch;
}

void BatchSampler::restore(std::vector<std::uint64_t> cursors, const std::string& rng_blob) {
  if (cursors.size() != entry_chunks_->size())
    throw ShapeError("BatchSampler::restore: cursor count mismatch");
  for (std::size_t i = 0; i < cursors.size(); ++i)
    if (!(*entry_chunks_)[i].empty() && cursors[i] >= (*entry_chunks_)[i].size())
      throw ValueError("BatchSampler::restore: cursor out of range for entry " +
                       std::to_string(i));
  cursors_ = std::move(cursors);
  rng_.load_state(rng_blob);
}

}  // namespace langsamp
