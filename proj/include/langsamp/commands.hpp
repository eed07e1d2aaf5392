#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace langsamp {

// Header-level view of a checkpoint container: everything `inspect` prints.
struct CheckpointManifest {
  std::filesystem::path path;
  nlohmann::json config;
  nlohmann::json meta;
  struct TensorInfo {
    std::string name;
    std::string dtype;
    long rows = 0;
    long cols = 0;
  };
  std::vector<TensorInfo> tensors;
};

CheckpointManifest inspect_checkpoint(const std::filesystem::path& path);
std::string manifest_text(const CheckpointManifest& manifest);

// Full command-line entry point. Returns the process exit code: 0 success,
// 1 usage error, 2 data/config error, 3 numeric failure. Diagnostics go to
// the error stream; results go to files under the config's output_dir.
int run_cli(int argc, const char* const* argv);

}  // namespace langsamp
