#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace langsamp {

// Whitespace-token vocabulary with five reserved specials at fixed ids.
// Special surfaces are never produced by encode(): a literal "<mask>" in
// running text maps to UNK like any other unknown token.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  static const std::array<std::string, kNumSpecials>& special_surfaces();

  Vocab() = default;

  // Frequency-ranked build: tokens below min_frequency are dropped, survivors
  // are ordered by (count desc, token asc) and truncated so that the total
  // size including specials does not exceed max_size.
  static Vocab build(std::span<const std::string> sentences, std::size_t max_size,
                     long min_frequency);
  static Vocab build_from_directory(const std::filesystem::path& dir, std::size_t max_size,
                                    long min_frequency);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  int id(std::string_view surface) const;  // kUnk for unknown or special surfaces

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& file) const;
  static Vocab load(const std::filesystem::path& file);

 private:
  void rebuild_index();

  std::vector<std::string> tokens_;  // specials first, then regular tokens
  std::unordered_map<std::string, int> index_;  // regular tokens only
  std::size_t max_size_ = 0;
  long min_frequency_ = 1;
};

}  // namespace langsamp
