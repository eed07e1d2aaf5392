#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace langsamp {

// One corpus file: a (language, script) pair with its size statistics.
struct RegistryEntry {
  std::string lang;
  std::string script;
  long sentence_count = 0;
  long token_count = 0;
  int lang_id = 0;
  int script_id = 0;

  std::string label() const { return lang + "_" + script; }
  std::string filename() const { return label() + ".txt"; }
};

// Maps corpus files named <lang>_<script>.txt to dense language and script
// ids. A language may appear under several scripts (and vice versa); ids are
// assigned in first-seen order over the filename-sorted entry list, so they
// are stable for a given directory contents.
class LanguageScriptRegistry {
 public:
  LanguageScriptRegistry() = default;

  static LanguageScriptRegistry from_directory(const std::filesystem::path& dir);
  static LanguageScriptRegistry from_entries(std::vector<RegistryEntry> entries);

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  int num_languages() const { return static_cast<int>(lang_codes_.size()); }
  int num_scripts() const { return static_cast<int>(script_codes_.size()); }

  // Codes indexed by id; `lang_codes()[e.lang_id] == e.lang`.
  const std::vector<std::string>& lang_codes() const { return lang_codes_; }
  const std::vector<std::string>& script_codes() const { return script_codes_; }

  int lang_id(const std::string& code) const;    // throws DataError when unknown
  int script_id(const std::string& code) const;
  bool has_lang(const std::string& code) const;

  nlohmann::json to_json() const;
  static LanguageScriptRegistry from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& file) const;
  static LanguageScriptRegistry load(const std::filesystem::path& file);

 private:
  void index_entries();  // assigns ids and checks for duplicates

  std::vector<RegistryEntry> entries_;
  std::vector<std::string> lang_codes_;
  std::vector<std::string> script_codes_;
};

// Splits a corpus filename of the form <lang>_<script>.txt; throws DataError
// naming the offender otherwise.
std::pair<std::string, std::string> parse_corpus_filename(const std::string& name);

}  // namespace langsamp
