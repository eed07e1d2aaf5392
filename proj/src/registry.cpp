#include "langsamp/registry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "langsamp/types.hpp"

namespace langsamp {

namespace {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::pair<std::string, std::string> parse_corpus_filename(const std::string& name) {
  const std::string suffix = ".txt";
  if (name.size() <= suffix.size() || !name.ends_with(suffix))
    throw DataError("malformed corpus filename (expected <lang>_<script>.txt): " + name);
  const std::string stem = name.substr(0, name.size() - suffix.size());
  const std::size_t sep = stem.find('_');
  if (sep == std::string::npos || sep != stem.rfind('_') || sep == 0 || sep + 1 == stem.size())
    throw DataError("malformed corpus filename (expected <lang>_<script>.txt): " + name);
  return {stem.substr(0, sep), stem.substr(sep + 1)};
}

LanguageScriptRegistry LanguageScriptRegistry::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::string> names;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    const std::string name = item.path().filename().string();
    if (name.starts_with('.')) continue;  // editor/VCS droppings
    if (!item.is_regular_file())
      throw DataError("corpus directory entry is not a regular file: " + name);
    names.push_back(name);
  }
  if (names.empty()) throw DataError("empty corpus directory: " + dir.string());
  std::sort(names.begin(), names.end());

  std::vector<RegistryEntry> entries;
  entries.reserve(names.size());
  for (const std::string& name : names) {
    auto [lang, script] = parse_corpus_filename(name);
    RegistryEntry e;
    e.lang = std::move(lang);
    e.script = std::move(script);
    std::ifstream in(dir / name);
    if (!in) throw IoError("cannot open corpus file: " + (dir / name).string());
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream split(line);
      std::string token;
      long tokens_in_line = 0;
      while (split >> token) ++tokens_in_line;
      if (tokens_in_line > 0) {
        e.sentence_count += 1;
        e.token_count += tokens_in_line;
      }
    }
    entries.push_back(std::move(e));
  }
  return from_entries(std::move(entries));
}

LanguageScriptRegistry LanguageScriptRegistry::from_entries(std::vector<RegistryEntry> entries) {
  LanguageScriptRegistry reg;
  reg.entries_ = std::move(entries);
  reg.index_entries();
  return reg;
}

void LanguageScriptRegistry::index_entries() {
  if (entries_.empty()) throw DataError("registry requires at least one corpus entry");
  lang_codes_.clear();
  script_codes_.clear();
  std::map<std::string, int> lang_ids, script_ids;
  std::map<std::string, std::string> seen;  // lowercased label -> original
  for (RegistryEntry& e : entries_) {
    if (e.lang.empty() || e.script.empty())
      throw DataError("registry entry with empty language or script code");
    const std::string key = to_lower(e.label());
    auto [it, inserted] = seen.emplace(key, e.label());
    if (!inserted)
      throw DataError("duplicate corpus entry after case normalization: " + e.label() +
                      " vs " + it->second);
    const std::string lang_key = to_lower(e.lang);
    if (auto lit = lang_ids.find(lang_key); lit != lang_ids.end()) {
      e.lang_id = lit->second;
    } else {
      e.lang_id = static_cast<int>(lang_codes_.size());
      lang_ids.emplace(lang_key, e.lang_id);
      lang_codes_.push_back(e.lang);
    }
    const std::string script_key = to_lower(e.script);
    if (auto sit = script_ids.find(script_key); sit != script_ids.end()) {
      e.script_id = sit->second;
    } else {
      e.script_id = static_cast<int>(script_codes_.size());
      script_ids.emplace(script_key, e.script_id);
      script_codes_.push_back(e.script);
    }
  }
}

int LanguageScriptRegistry::lang_id(const std::string& code) const {
  for (std::size_t i = 0; i < lang_codes_.size(); ++i)
    if (lang_codes_[i] == code) return static_cast<int>(i);
  throw DataError("unknown language code: " + code);
}

int LanguageScriptRegistry::script_id(const std::string& code) const {
  for (std::size_t i = 0; i < script_codes_.size(); ++i)
    if (script_codes_[i] == code) return static_cast<int>(i);
  throw DataError("unknown script code: " + code);
}

bool LanguageScriptRegistry::has_lang(const std::string& code) const {
  return std::find(lang_codes_.begin(), lang_codes_.end(), code) != lang_codes_.end();
}

nlohmann::json LanguageScriptRegistry::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const RegistryEntry& e : entries_) {
    entries.push_back({{"lang", e.lang},
                       {"script", e.script},
                       {"sentences", e.sentence_count},
                       {"tokens", e.token_count}});
  }
  return {{"entries", entries}};
}

LanguageScriptRegistry LanguageScriptRegistry::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array())
    throw IoError("registry json: expected an object with an 'entries' array");
  std::vector<RegistryEntry> entries;
  for (const auto& je : j["entries"]) {
    RegistryEntry e;
    e.lang = je.at("lang").get<std::string>();
    e.script = je.at("script").get<std::string>();
    e.sentence_count = je.at("sentences").get<long>();
    e.token_count = je.at("tokens").get<long>();
    entries.push_back(std::move(e));
  }
  return from_entries(std::move(entries));
}

void LanguageScriptRegistry::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write registry file: " + file.string());
  out << to_json().dump(2) << '\n';
}

LanguageScriptRegistry LanguageScriptRegistry::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open registry file: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("registry file " + file.string() + " is not valid json: " + e.what());
  }
  return from_json(j);
}

}  // namespace langsamp
