#include <cstdlib>
#include <string>

#include "langsamp/types.hpp"

namespace langsamp {

int worker_count() {
  static const int cached = [] {
    const char* env = std::getenv("LANGSAMP_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    try {
      const int n = std::stoi(env);
      if (n < 1) return 1;
      const int hw = static_cast<int>(std::thread::hardware_concurrency());
      return hw > 0 ? std::min(n, hw) : n;
    } catch (const std::exception&) {
      throw ConfigError("LANGSAMP_THREADS must be a positive integer");
    }
  }();
  return cached;
}

}  // namespace langsamp
