#pragma once

// Toolkit defaults loaded from one INI file ([tile], [format], [pack], [ring],
// [svlm], [mixture], [needle] sections). Command-line flags override them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omt/anyres.hpp"
#include "omt/packer.hpp"
#include "omt/prompt.hpp"

namespace omt::cli {

struct ToolkitConfig {
  anyres::TilerConfig tile;

  prompt::FormatVariant format = prompt::FormatVariant::F4;
  std::string block_separator;

  packing::ContextSchedule context;

  std::size_t ring_workers = 4;
  double ring_tolerance = 1e-9;
  double rope_theta = 5.0e7;

  double svlm_keep_ratio = 0.6;

  std::uint64_t seed = 42;

  std::int64_t needle_trials = 5;
  std::size_t needle_concurrency = 1;
  std::string needle_adapter = "none";  // none | oracle | random | subprocess
  std::string needle_command;
  int frame_width = 64;
  int frame_height = 48;

  void validate() const;
};

// OMTOOLKIT_CONFIG if set, else ./omtoolkit.ini when it exists.
std::optional<std::filesystem::path> default_config_path();

// Throws ConfigError on unknown keys, bad values, or defaults that fail module validation.
ToolkitConfig load_config(const std::filesystem::path& path);
ToolkitConfig load_config_or_default(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace omt::cli
