#include "langsamp/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "langsamp/registry.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

const std::array<std::string, Vocab::kNumSpecials>& Vocab::special_surfaces() {
  static const std::array<std::string, kNumSpecials> surfaces = {"<pad>", "<unk>", "<cls>",
                                                                 "<sep>", "<mask>"};
  return surfaces;
}

Vocab Vocab::build(std::span<const std::string> sentences, std::size_t max_size,
                   long min_frequency) {
  if (max_size <= kNumSpecials)
    throw ValueError("vocab: max_size must exceed the " + std::to_string(kNumSpecials) +
                     " reserved special tokens");
  if (min_frequency < 1) throw ValueError("vocab: min_frequency must be at least 1");

  std::unordered_map<std::string, long> counts;
  long total_tokens = 0;
  for (const std::string& sentence : sentences) {
    std::istringstream split(sentence);
    std::string token;
    while (split >> token) {
      ++counts[token];
      ++total_tokens;
    }
  }
  if (total_tokens == 0) throw DataError("vocab: empty corpus (no tokens)");

  const auto& specials = special_surfaces();
  std::vector<std::pair<std::string, long>> ranked;
  ranked.reserve(counts.size());
  for (auto& [token, count] : counts) {
    if (count < min_frequency) continue;
    if (std::find(specials.begin(), specials.end(), token) != specials.end()) continue;
    ranked.emplace_back(token, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.max_size_ = max_size;
  v.min_frequency_ = min_frequency;
  v.tokens_.assign(specials.begin(), specials.end());
  const std::size_t budget = max_size - kNumSpecials;
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i)
    v.tokens_.push_back(ranked[i].first);
  v.rebuild_index();
  return v;
}

Vocab Vocab::build_from_directory(const std::filesystem::path& dir, std::size_t max_size,
                                  long min_frequency) {
  const auto registry = LanguageScriptRegistry::from_directory(dir);
  std::vector<std::string> sentences;
  for (const RegistryEntry& e : registry.entries()) {
    std::ifstream in(dir / e.filename());
    if (!in) throw IoError("cannot open corpus file: " + (dir / e.filename()).string());
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) sentences.push_back(line);
  }
  return build(sentences, max_size, min_frequency);
}

void Vocab::rebuild_index() {
  index_.clear();
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i)
    index_.emplace(tokens_[i], static_cast<int>(i));
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw ValueError("vocab: token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(std::string_view surface) const {
  const auto it = index_.find(std::string(surface));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream split{std::string(text)};
  std::string token;
  while (split >> token) ids.push_back(id(token));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json regular = nlohmann::json::array();
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) regular.push_back(tokens_[i]);
  return {{"max_size", max_size_}, {"min_frequency", min_frequency_}, {"tokens", regular}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array())
    throw IoError("vocab json: expected an object with a 'tokens' array");
  Vocab v;
  v.max_size_ = j.value("max_size", std::size_t{0});
  v.min_frequency_ = j.value("min_frequency", 1L);
  const auto& specials = special_surfaces();
  v.tokens_.assign(specials.begin(), specials.end());
  for (const auto& t : j["tokens"]) {
    const std::string token = t.get<std::string>();
    if (std::find(specials.begin(), specials.end(), token) != specials.end())
      throw IoError("vocab json: special surface listed as a regular token: " + token);
    v.tokens_.push_back(token);
  }
  v.rebuild_index();
  if (v.index_.size() + kNumSpecials != v.tokens_.size())
    throw IoError("vocab json: duplicate tokens");
  return v;
}

void Vocab::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write vocab file: " + file.string());
  out << to_json().dump(2) << '\n';
}

Vocab Vocab::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open vocab file: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("vocab file " + file.string() + " is not valid json: " + e.what());
  }
  return from_json(j);
}

}  // namespace langsamp
