#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "omt/error.hpp"
#include "omt/svlm.hpp"

namespace omt::cli {

namespace pt = boost::property_tree;

void ToolkitConfig::validate() const {
  tile.validate();
  context.validate();
  svlm::SelectionConfig{svlm_keep_ratio}.validate();
  detail::require_config(ring_workers >= 1, "ring.workers must be >= 1");
  detail::require_config(ring_tolerance > 0.0, "ring.tolerance must be positive");
  detail::require_config(rope_theta > 1.0, "ring.rope_theta must be > 1");
  detail::require_config(needle_trials >= 1, "needle.trials must be >= 1");
  detail::require_config(needle_concurrency >= 1, "needle.concurrency must be >= 1");
  static const std::set<std::string> adapters{"none", "oracle", "random", "subprocess"};
  detail::require_config(adapters.count(needle_adapter) == 1, "needle.adapter must be none, oracle, random or subprocess");
  detail::require_config(needle_adapter != "subprocess" || !needle_command.empty(),
                         "needle.adapter = subprocess needs needle.command");
  detail::require_config(frame_width >= 8 && frame_height >= 8, "needle frame size must be at least 8x8");
}

std::optional<std::filesystem::path> default_config_path() {
  if (const char* env = std::getenv("OMTOOLKIT_CONFIG"); env && *env) return std::filesystem::path(env);
  if (std::filesystem::exists("omtoolkit.ini")) return std::filesystem::path("omtoolkit.ini");
  return std::nullopt;
}

namespace {

template <class T>
T as(const std::string& key, const std::string& raw) {
  std::istringstream in(raw);
  T v{};
  in >> v;
  if (!in.fail() && !in.eof()) in >> std::ws;
  if (in.fail() || !in.eof()) throw ConfigError("bad value for " + key + ": '" + raw + "'");
  return v;
}

template <>
bool as<bool>(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError("bad value for " + key + ": '" + raw + "'");
}

std::vector<std::size_t> as_list(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(as<std::size_t>(key, item));
  return out;
}

}  // namespace

ToolkitConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("cannot read config: " + std::string(e.what()));
  }

  ToolkitConfig c;
  using Setter = void (*)(ToolkitConfig&, const std::string&, const std::string&);
  static const std::map<std::string, Setter> setters{
      {"tile.base_tile_px", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.tile.base_tile_px = as<int>(k, v); }},
      {"tile.max_tiles", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.tile.max_tiles = as<int>(k, v); }},
      {"tile.tokens_per_tile", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.tile.tokens_per_tile = as<int>(k, v); }},
      {"tile.thumbnail", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.tile.thumbnail_enabled = as<bool>(k, v); }},
      {"format.variant", [](ToolkitConfig& c, const std::string& k, const std::string& v) {
         try {
           c.format = prompt::parse_format(v);
         } catch (const InputError&) {
           throw ConfigError("bad value for " + k + ": '" + v + "'");
         }
       }},
      {"format.block_separator", [](ToolkitConfig& c, const std::string&, const std::string& v) {
         c.block_separator = v == "\\n" ? "\n" : v;
       }},
      {"pack.stages", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.context.stages = as_list(k, v); }},
      {"ring.workers", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.ring_workers = as<std::size_t>(k, v); }},
      {"ring.tolerance", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.ring_tolerance = as<double>(k, v); }},
      {"ring.rope_theta", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.rope_theta = as<double>(k, v); }},
      {"svlm.keep_ratio", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.svlm_keep_ratio = as<double>(k, v); }},
      {"mixture.seed", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.seed = as<std::uint64_t>(k, v); }},
      {"needle.trials", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.needle_trials = as<std::int64_t>(k, v); }},
      {"needle.concurrency", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.needle_concurrency = as<std::size_t>(k, v); }},
      {"needle.adapter", [](ToolkitConfig& c, const std::string&, const std::string& v) { c.needle_adapter = v; }},
      {"needle.command", [](ToolkitConfig& c, const std::string&, const std::string& v) { c.needle_command = v; }},
      {"needle.frame_width", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.frame_width = as<int>(k, v); }},
      {"needle.frame_height", [](ToolkitConfig& c, const std::string& k, const std::string& v) { c.frame_height = as<int>(k, v); }},
  };

  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end()) throw ConfigError("unknown config key " + full);
      it->second(c, full, value.data());
    }
  }
  c.validate();
  return c;
}

ToolkitConfig load_config_or_default(const std::optional<std::filesystem::path>& explicit_path) {
  const auto path = explicit_path ? explicit_path : default_config_path();
  if (!path) return {};
  if (!std::filesystem::exists(*path)) throw ConfigError("config file not found: " + path->string());
  return load_config(*path);
}

}  // namespace omt::cli
