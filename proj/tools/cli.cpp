#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "golden_io.hpp"
#include "json.hpp"
#include "omt/omt.hpp"
#include "png_io.hpp"
#include "subprocess_adapter.hpp"

namespace omt::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ------------------------------------------------------------------ parsing

std::int64_t parse_count(const std::string& raw) {
  detail::require_input(!raw.empty(), "empty count");
  double scale = 1.0;
  std::string s = raw;
  switch (s.back()) {
    case 'K': case 'k': scale = 1e3; s.pop_back(); break;
    case 'M': case 'm': scale = 1e6; s.pop_back(); break;
    case 'B': case 'b': case 'G': case 'g': scale = 1e9; s.pop_back(); break;
    default: break;
  }
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  detail::require_input(ec == std::errc() && p == s.data() + s.size() && v >= 0.0, "bad count '" + raw + "'");
  const double scaled = v * scale;
  detail::require_input(std::abs(scaled - std::round(scaled)) < 1e-6, "count '" + raw + "' is not an integer");
  return static_cast<std::int64_t>(std::llround(scaled));
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  detail::require_input(ec == std::errc() && p == s.data() + s.size(), "bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::int64_t> parse_count_list(const std::string& s) {
  std::vector<std::int64_t> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_count(item));
  detail::require_input(!out.empty(), "empty list");
  return out;
}

std::vector<double> parse_real_list(const std::string& s) {
  const auto items = split(s, ',');
  std::vector<double> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] != "...") {
      out.push_back(parse_real(items[i]));
      continue;
    }
    detail::require_input(out.size() >= 2 && i + 1 < items.size(), "'...' needs two values before and one after");
    const double a = out[out.size() - 2], b = out.back(), c = parse_real(items[i + 1]);
    const double step = b - a;
    detail::require_input(step > 0.0 && c > b, "'...' needs an increasing run");
    const double steps = (c - a) / step;
    const auto n = std::llround(steps);
    detail::require_input(std::abs(steps - static_cast<double>(n)) < 1e-9, "'...' end is not on the step grid");
    const double a0 = out[out.size() - 2];
    out.pop_back();
    out.pop_back();
    for (long long k = 0; k <= n; ++k) {
      out.push_back((a0 * static_cast<double>(n - k) + c * static_cast<double>(k)) / static_cast<double>(n));
    }
    ++i;
  }
  detail::require_input(!out.empty(), "empty list");
  return out;
}

std::vector<std::int64_t> parse_ladder(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos || s.find("...") != std::string::npos) return parse_count_list(s);
  const auto lo = parse_count(s.substr(0, dots)), hi = parse_count(s.substr(dots + 2));
  detail::require_input(lo > 0 && hi >= lo, "bad range '" + s + "'");
  std::vector<std::int64_t> out;
  for (std::int64_t v = lo; v <= hi; v *= 2) out.push_back(v);
  detail::require_input(out.back() == hi, "range end " + std::to_string(hi) + " is not a doubling of the start");
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// --------------------------------------------------------------------- files

namespace {

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void write_text(const fs::path& p, const std::string& text) { open_out(p) << text; }

void write_json(const fs::path& p, const ojson& j) { open_out(p) << j.dump(2) << '\n'; }

template <class Fn>
void for_each_jsonl(const fs::path& p, Fn&& fn) {
  std::ifstream in(p);
  detail::require_input(static_cast<bool>(in), "cannot open " + p.string());
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  detail::require_input(static_cast<bool>(in), "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension(suffix);
  return out;
}

Image drop_alpha(const Image& img) {
  if (img.channels == 3) return img;
  Image rgb(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) std::copy_n(img.at(x, y), 3, rgb.at(x, y));
  }
  return rgb;
}

// -------------------------------------------------------------- state

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::optional<std::string> out;
};

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string require_out(const Globals& g) {
  detail::require_input(g.out.has_value() && !g.out->empty(), "--out is required");
  return *g.out;
}

void add_globals(CLI::App* app, Globals& g) {
  app->add_option("--seed", g.seed, "root seed for every random stream");
  app->add_option("--config", g.config, "INI config file (default: $OMTOOLKIT_CONFIG)");
  app->add_option("--out", g.out, "output file or directory");
}

// ---------------------------------------------------------------------- tile

struct TileArgs {
  std::string image;
  std::optional<int> base, max_tiles;
  bool no_thumbnail = false;
};

int run_tile(const TileArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path dir = require_out(g);
  anyres::TilerConfig tc = cfg.tile;
  if (a.base) tc.base_tile_px = *a.base;
  if (a.max_tiles) tc.max_tiles = *a.max_tiles;
  if (a.no_thumbnail) tc.thumbnail_enabled = false;
  tc.validate();

  const auto tiled = anyres::tile_image(drop_alpha(io::read_image(a.image)), tc);
  const auto& L = tiled.layout;
  fs::create_directories(dir);
  ojson files = ojson::array();
  for (std::size_t i = 0; i < tiled.tiles.size(); ++i) {
    char name[32];
    const bool thumb = L.has_thumbnail && i + 1 == tiled.tiles.size();
    if (thumb) {
      std::snprintf(name, sizeof name, "thumbnail.png");
    } else {
      std::snprintf(name, sizeof name, "tile_%02zu.png", i);
    }
    io::write_png(dir / name, tiled.tiles[i]);
    files.push_back(name);
  }
  ojson rects = ojson::array();
  for (const Rect& r : L.tile_rects) rects.push_back({r.x, r.y, r.w, r.h});
  ojson layout{{"grid", {{"rows", L.grid.rows}, {"cols", L.grid.cols}}},
               {"scaled", {L.scaled_size.width, L.scaled_size.height}},
               {"rects", rects},
               {"thumbnail", L.has_thumbnail},
               {"tokens", L.total_tokens},
               {"canvas", {L.canvas_size.width, L.canvas_size.height}},
               {"content", {L.content_rect.x, L.content_rect.y, L.content_rect.w, L.content_rect.h}},
               {"tiles", files}};
  write_json(dir / "layout.json", layout);
  out << "grid " << L.grid.rows << "x" << L.grid.cols << ", " << tiled.tiles.size() << " tiles, " << L.total_tokens
      << " tokens\n";
  return kExitOk;
}

// -------------------------------------------------------------------- format

struct FormatArgs {
  std::string manifest;
  std::optional<std::string> fmt;
  std::optional<std::string> separator;
};

int run_format(const FormatArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path out_path = require_out(g);
  const fs::path manifest = a.manifest;
  const auto doc = read_json(manifest);
  detail::require_input(doc.contains("media") && doc["media"].is_array(), "manifest needs a 'media' array");

  std::vector<prompt::MediaKind> kinds;
  std::vector<std::optional<anyres::TileLayout>> layouts;
  for (const auto& m : doc["media"]) {
    const auto kind = prompt::parse_media_kind(m.value("kind", "image"));
    kinds.push_back(kind);
    const anyres::TilerConfig tc = kind == prompt::MediaKind::frame ? [&] {
      auto v = anyres::TilerConfig::video_frame();
      v.base_tile_px = cfg.tile.base_tile_px;
      v.tokens_per_tile = cfg.tile.tokens_per_tile;
      return v;
    }() : cfg.tile;
    std::optional<anyres::TileLayout> layout;
    if (m.contains("width") && m.contains("height")) {
      layout = anyres::layout_image(m["width"].get<int>(), m["height"].get<int>(), tc);
    } else if (m.contains("path")) {
      fs::path p = m["path"].get<std::string>();
      if (p.is_relative()) p = manifest.parent_path() / p;
      if (fs::exists(p)) {
        const Image img = io::read_image(p);
        layout = anyres::layout_image(img.width, img.height, tc);
      }
    }
    layouts.push_back(layout);
  }

  std::vector<std::string> text(kinds.size() + 1);
  if (doc.contains("text")) text = doc["text"].get<std::vector<std::string>>();

  const auto fmt = a.fmt ? prompt::parse_format(*a.fmt) : cfg.format;
  prompt::RenderOptions opts{a.separator ? (*a.separator == "\\n" ? "\n" : *a.separator) : cfg.block_separator};
  WhitespaceTokenizer tok;
  const auto seq = prompt::render(prompt::make_items(kinds, layouts), text, fmt, tok, opts);
  write_text(out_path, seq.rendered);

  const bool complete = std::all_of(layouts.begin(), layouts.end(), [](const auto& l) { return l.has_value(); });
  if (complete) {
    const auto ids = prompt::expand_placeholders(seq, tok);
    open_out(with_suffix(out_path, ".ids.json")) << nlohmann::json(ids).dump() << '\n';
    out << prompt::to_string(fmt) << ": " << ids.size() << " tokens\n";
  } else {
    out << prompt::to_string(fmt) << ": rendered; token ids skipped (media without size)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- pack

struct PackArgs {
  std::string input;
  std::optional<std::size_t> target;
  std::optional<std::size_t> stage;
  std::string policy;
};

int run_pack(const PackArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path out_path = require_out(g);
  detail::require_input(!(a.target && a.stage), "give --target or --stage, not both");
  const std::size_t target = a.target ? *a.target : packing::schedule_stage(a.stage.value_or(0), cfg.context);
  packing::Packer packer(target, packing::parse_policy(a.policy));

  auto packs = open_out(out_path);
  std::size_t n_packs = 0, n_samples = 0;
  double fill = 0.0;
  auto emit = [&](const std::optional<packing::PackedSequence>& p) {
    if (!p) return;
    ojson members = ojson::array();
    for (const auto& m : p->members) members.push_back({{"id", m.id}, {"offset", m.offset}, {"len", m.length}});
    packs << ojson{{"target_len", p->target_len}, {"members", members}, {"fill_ratio", p->fill_ratio()}}.dump() << '\n';
    ++n_packs;
    fill += p->fill_ratio();
  };
  for_each_jsonl(a.input, [&](const nlohmann::json& j) {
    ++n_samples;
    emit(packer.push({j.at("id").get<std::string>(), j.at("token_ids").get<std::vector<TokenId>>()}));
  });
  emit(packer.flush());

  auto rejects = open_out(with_suffix(out_path, ".rejects.jsonl"));
  for (const auto& r : packer.rejections()) rejects << ojson{{"id", r.id}, {"len", r.length}}.dump() << '\n';
  out << n_samples << " samples -> " << n_packs << " packs of " << target << ", mean fill "
      << (n_packs ? fill / static_cast<double>(n_packs) : 0.0) << ", " << packer.rejections().size() << " rejected\n";
  return kExitOk;
}

// ---------------------------------------------------------------- ring-check

struct RingArgs {
  std::size_t seq = 64, dim = 8, heads = 1;
  std::optional<std::size_t> workers, block;
  std::size_t offset = 0;
  bool causal = false, parallel = false, rope = false;
};

int run_ring(const RingArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const std::uint64_t seed = g.seed.value_or(cfg.seed);
  detail::require_config(a.seq > 0 && a.dim > 0 && a.heads > 0, "seq, dim and heads must be positive");
  attention::RingConfig ring;
  ring.num_workers = a.workers.value_or(cfg.ring_workers);
  detail::require_config(ring.num_workers > 0, "workers must be positive");
  ring.block_size = a.block.value_or((a.seq + ring.num_workers - 1) / ring.num_workers);
  ring.start_offset = a.offset;
  ring.parallel = a.parallel;

  Rng rng = substream(seed, "ring-check");
  auto in = attention::random_input(a.seq, a.dim, a.heads, a.causal, rng);
  if (a.rope) {
    std::vector<std::int64_t> pos(a.seq);
    for (std::size_t i = 0; i < a.seq; ++i) pos[i] = static_cast<std::int64_t>(i);
    const RopeConfig rc{cfg.rope_theta, a.dim};
    for (std::size_t h = 0; h < a.heads; ++h) {
      in.q[h] = apply_rope(in.q[h], pos, rc);
      in.k[h] = apply_rope(in.k[h], pos, rc);
    }
  }
  const auto dense = attention::naive_attention(in);
  const auto result = attention::ring_attention(in, ring);
  const double err = attention::max_abs_error(result.output, dense);
  out << "max_abs_error " << format_real(err) << "\nmessages " << result.messages.size() << "\n";
  if (g.out) {
    io::write_golden(*g.out, dense.front(),
                     {{"seed", seed}, {"stream", "ring-check"}, {"seq", a.seq}, {"dim", a.dim}, {"causal", a.causal},
                      {"rope", a.rope}});
  }
  if (!(err <= cfg.ring_tolerance)) {
    throw VerificationFailure("ring attention error " + format_real(err) + " exceeds " + format_real(cfg.ring_tolerance));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- svlm

struct SvlmArgs {
  std::string batch;
  std::optional<std::string> ref, ref_corpus;
  std::optional<double> keep;
  std::size_t histogram = 0;
};

int run_svlm(const SvlmArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path out_path = require_out(g);
  detail::require_input(a.ref.has_value() != a.ref_corpus.has_value(), "give exactly one of --ref or --ref-corpus");
  const svlm::SelectionConfig sel{a.keep.value_or(cfg.svlm_keep_ratio)};
  sel.validate();

  svlm::ReferenceLossStore store;
  std::optional<svlm::BigramLossModel> bigram;
  if (a.ref) {
    for_each_jsonl(*a.ref, [&](const nlohmann::json& j) {
      store.add(j.at("sample_id").get<std::string>(), j.at("losses").get<std::vector<double>>());
    });
  } else {
    std::vector<std::vector<TokenId>> corpus;
    for_each_jsonl(*a.ref_corpus, [&](const nlohmann::json& j) { corpus.push_back(j.at("token_ids").get<std::vector<TokenId>>()); });
    bigram.emplace();
    bigram->fit(corpus);
  }

  std::vector<svlm::TokenLossRecord> batch;
  for_each_jsonl(a.batch, [&](const nlohmann::json& j) {
    const auto id = j.at("sample_id").get<std::string>();
    const auto pretrain = j.at("losses").get<std::vector<double>>();
    std::vector<svlm::TokenLossRecord> recs;
    if (bigram) {
      const auto ref = bigram->losses(j.at("token_ids").get<std::vector<TokenId>>());
      detail::require_input(ref.size() == pretrain.size(), "sample '" + id + "': token_ids and losses differ in length");
      for (std::size_t i = 0; i < ref.size(); ++i) recs.push_back(svlm::make_record(id, static_cast<std::int64_t>(i), pretrain[i], ref[i]));
    } else {
      recs = store.records(id, pretrain);
    }
    batch.insert(batch.end(), recs.begin(), recs.end());
  });
  svlm::select_tokens(batch, sel);

  auto mask = open_out(out_path);
  for (const auto& r : batch) {
    mask << ojson{{"sample_id", r.sample_id}, {"token_index", r.token_index}, {"kept", r.kept}, {"excess", r.excess_loss}}.dump()
         << '\n';
  }
  out << "kept " << svlm::keep_count(sel.keep_ratio, batch.size()) << " of " << batch.size()
      << " tokens, masked mean loss " << format_real(svlm::masked_mean_loss(batch)) << "\n";
  if (a.histogram > 0) {
    const auto h = svlm::excess_histogram(batch, a.histogram);
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << "[" << format_real(h.lo + width * static_cast<double>(b)) << ", "
          << format_real(b + 1 == h.counts.size() ? h.hi : h.lo + width * static_cast<double>(b + 1)) << ") "
          << h.counts[b] << "\n";
    }
  }
  return kExitOk;
}

// ------------------------------------------------------------------- mixture

struct MixtureArgs {
  std::string specs;
  std::string total;
  std::optional<std::string> portions;
  std::string mode = "cumulative";
  bool draws = false;
};

std::vector<mixture::DatasetSpec> read_specs(const fs::path& p) {
  auto doc = read_json(p);
  if (doc.is_object() && doc.contains("datasets")) doc = doc["datasets"];
  detail::require_input(doc.is_array(), "specs file must be a list of datasets");
  std::vector<mixture::DatasetSpec> out;
  try {
    for (const auto& d : doc) {
      const auto name = d.at("name").get<std::string>();
      const double fraction = d.at("fraction").get<double>();
      if (d.contains("sample_tokens")) {
        out.push_back({name, fraction, d["sample_tokens"].get<std::vector<std::int64_t>>()});
      } else {
        out.push_back(mixture::DatasetSpec::uniform(name, fraction, d.at("available_tokens").get<std::int64_t>(),
                                                    d.at("tokens_per_sample").get<std::int64_t>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int run_mixture(const MixtureArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path out_path = require_out(g);
  const std::uint64_t seed = g.seed.value_or(cfg.seed);
  const auto specs = read_specs(a.specs);
  const auto plan = mixture::build_mixture(specs, parse_count(a.total), seed);

  ojson datasets = ojson::array();
  std::vector<std::vector<std::size_t>> all_draws;
  for (const auto& d : plan.datasets) {
    ojson j{{"name", d.name},         {"fraction", d.fraction},   {"available_tokens", d.available},
            {"quota", d.quota},       {"repeat_factor", d.repeat_factor}, {"draw_count", d.draws.size()},
            {"emitted_tokens", d.emitted_tokens}};
    if (a.draws) j["draws"] = d.draws;
    datasets.push_back(j);
    all_draws.push_back(d.draws);
  }
  ojson doc{{"seed", seed}, {"total_answer_tokens", plan.total_answer_tokens}, {"datasets", datasets}};

  if (a.portions) {
    detail::require_config(a.mode == "cumulative" || a.mode == "disjoint", "--mode must be cumulative or disjoint");
    const auto mode = a.mode == "cumulative" ? mixture::PortionMode::cumulative : mixture::PortionMode::disjoint;
    const auto split = mixture::split_portions(plan, parse_count_list(*a.portions), mode);
    ojson portions = ojson::array();
    for (const auto& p : split.portions) {
      ojson shares = ojson::array();
      for (const auto& s : p.shares) {
        shares.push_back({{"name", s.name},
                          {"quota", s.quota},
                          {"cumulative_quota", s.cumulative_quota},
                          {"emitted_tokens", s.emitted_tokens},
                          {"cumulative_emitted", s.cumulative_emitted},
                          {"draw_begin", s.draw_begin},
                          {"draw_end", s.draw_end}});
      }
      portions.push_back({{"size", p.size}, {"checkpoint", p.checkpoint}, {"shares", shares}});
    }
    doc["portion_mode"] = a.mode;
    doc["portions"] = portions;
    doc["portion_assignment_digest"] = hex64(mixture::assignment_digest(split.draws));
  }
  doc["assignment_digest"] = hex64(mixture::assignment_digest(all_draws));
  write_json(out_path, doc);
  out << plan.datasets.size() << " datasets, " << plan.total_answer_tokens << " answer tokens, digest "
      << doc["assignment_digest"].get<std::string>() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ schedule

struct ScheduleArgs {
  std::string portion_steps;
  double base_lr = 2e-5;
  std::optional<std::int64_t> warmup;
  double branch_fraction = 0.10;
  std::string branch_base = "cumulative";
};

int run_schedule(const ScheduleArgs& a, const Globals& g, const ToolkitConfig&, std::ostream& out) {
  const fs::path out_path = require_out(g);
  const auto steps = parse_count_list(a.portion_steps);
  detail::require_config(a.branch_base == "cumulative" || a.branch_base == "per-portion",
                         "--branch-base must be cumulative or per-portion");
  schedule::LrSchedule s;
  s.base_lr = a.base_lr;
  s.warmup_steps = a.warmup.value_or(schedule::default_warmup(steps.front()));
  s.branch_fraction = a.branch_fraction;
  s.branch_base = a.branch_base == "cumulative" ? schedule::BranchBase::cumulative : schedule::BranchBase::per_portion;
  s.validate();

  auto csv = open_out(out_path);
  csv << "step,lr,phase,branch\n";
  for (const auto& e : schedule::schedule_events(steps, s)) {
    csv << e.step << ',' << format_real(e.lr) << ',' << schedule::to_string(e.phase) << ','
        << (e.branch ? std::to_string(*e.branch) : "") << '\n';
  }

  const auto branches = schedule::emit_branch_plan(steps, s);
  ojson br = ojson::array();
  for (const auto& b : branches) {
    br.push_back({{"portion", b.portion},
                  {"start", b.start},
                  {"length", b.length},
                  {"checkpoint", b.start + b.length},
                  {"data_steps", {b.data_begin_step, b.data_end_step}}});
  }
  ojson deps = ojson::array();
  for (const auto& d : schedule::dependency_chain(branches)) {
    deps.push_back({{"kind", d.kind}, {"index", d.index},
                    {"depends_on_checkpoint", d.depends_on_checkpoint ? ojson(*d.depends_on_checkpoint) : ojson(nullptr)}});
  }
  write_json(with_suffix(out_path, ".plan.json"),
             {{"base_lr", s.base_lr}, {"warmup_steps", s.warmup_steps}, {"branch_fraction", s.branch_fraction},
              {"branch_base", a.branch_base}, {"portion_steps", steps}, {"branches", br}, {"dependencies", deps}});
  out << branches.size() << " branches, trunk " << branches.back().start << " steps, warmup " << s.warmup_steps << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- needle

struct NeedleArgs {
  std::string context = "4096..524288";
  std::string frames = "13,27,55,111,222,444";
  std::string depths = "0,0.1,...,1.0";
  std::optional<std::int64_t> trials;
  std::optional<std::string> adapter, command;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> clips;
  double clip_fps = 1.0;
  bool no_frames = false;
  std::string answers;
  std::optional<std::string> truth;
};

ojson truth_json(const needle::GroundTruth& g) {
  return {{"id", g.id},       {"kind", needle::to_string(g.kind)}, {"row", g.row},
          {"depth", g.depth}, {"expected", g.expected},           {"insertion", g.insertion}};
}

needle::GroundTruth truth_from_json(const nlohmann::json& j) {
  needle::GroundTruth g;
  g.id = j.at("id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  detail::require_input(kind == "text" || kind == "tv", "unknown needle kind '" + kind + "'");
  g.kind = kind == "text" ? needle::NeedleKind::text : needle::NeedleKind::tv;
  g.row = j.at("row").get<std::int64_t>();
  g.depth = j.at("depth").get<double>();
  g.expected = j.at("expected").get<std::vector<std::string>>();
  g.insertion = j.value("insertion", std::int64_t{0});
  return g;
}

void write_grid(const fs::path& csv_path, const needle::EvalGrid& grid) {
  auto csv = open_out(csv_path);
  csv << grid.row_label;
  for (double d : grid.depths) csv << ',' << format_real(d);
  csv << '\n';
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    csv << grid.rows[r];
    for (std::size_t c = 0; c < grid.depths.size(); ++c) {
      csv << ',';
      if (const auto v = grid.cell(r, c)) csv << format_real(*v);
    }
    csv << '\n';
  }
  write_json(with_suffix(csv_path, ".json"), {{"row_label", grid.row_label},
                                              {"rows", grid.rows},
                                              {"depths", grid.depths},
                                              {"trials", grid.trials},
                                              {"successes", grid.successes},
                                              {"failed_trials", grid.failed_trials},
                                              {"mean_cell", grid.mean_cell()}});
}

void write_answers(const fs::path& p, const std::vector<needle::Answer>& answers) {
  auto f = open_out(p);
  for (const auto& a : answers) {
    ojson j{{"id", a.id}, {"output", a.output ? ojson(*a.output) : ojson(nullptr)}};
    if (!a.output) j["error"] = a.error;
    f << j.dump() << '\n';
  }
}

std::unique_ptr<needle::ModelAdapter> make_adapter(const std::string& kind, const std::string& command, std::uint64_t seed,
                                                   const needle::GroundTruthStore& truth, const needle::EmojiAtlas& atlas) {
  if (kind == "oracle") return std::make_unique<needle::OracleAdapter>(truth);
  if (kind == "random") return std::make_unique<needle::RandomAdapter>(substream_seed(seed, "adapter"), atlas);
  if (kind == "subprocess") {
    detail::require_config(!command.empty(), "--adapter subprocess needs --command");
    return std::make_unique<SubprocessAdapter>(command);
  }
  throw ConfigError("unknown adapter '" + kind + "'");
}

int finish_needle(const std::vector<needle::Trial>& trials, const fs::path& dir, const std::string& adapter_kind,
                  const std::string& command, std::size_t concurrency, std::uint64_t seed, const needle::EmojiAtlas& atlas,
                  const needle::RunOptions& base_opts, std::ostream& out) {
  {
    auto specs = open_out(dir / "specs.jsonl");
    for (const auto& t : trials) specs << truth_json(t.truth).dump() << '\n';
  }
  out << trials.size() << " specs written to " << (dir / "specs.jsonl").string() << "\n";
  if (adapter_kind == "none") return kExitOk;

  needle::GroundTruthStore truth;
  for (const auto& t : trials) truth.add(t.truth);
  const auto adapter = make_adapter(adapter_kind, command, seed, truth, atlas);
  needle::RunOptions opts = base_opts;
  opts.max_concurrency = concurrency;
  const auto result = needle::run_eval(trials, *adapter, opts);
  write_answers(dir / "answers.jsonl", result.answers);
  write_grid(dir / "grid.csv", result.grid);
  out << "mean cell score " << format_real(result.grid.mean_cell()) << ", failed trials " << result.grid.failed_trials
      << "\n";
  return kExitOk;
}

int run_needle_text(const NeedleArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path dir = require_out(g);
  const std::uint64_t seed = g.seed.value_or(cfg.seed);
  const auto contexts = parse_ladder(a.context);
  const auto depths = parse_real_list(a.depths);
  const auto trials_per_cell = a.trials.value_or(cfg.needle_trials);
  detail::require_config(trials_per_cell >= 1, "--trials must be >= 1");
  const std::string adapter = a.adapter.value_or(cfg.needle_adapter);

  std::vector<needle::TextNeedleSpec> specs;
  for (auto c : contexts) {
    for (std::size_t d = 0; d < depths.size(); ++d) {
      for (std::int64_t t = 0; t < trials_per_cell; ++t) {
        specs.push_back(needle::make_text_spec(
            "text-c" + std::to_string(c) + "-d" + std::to_string(d) + "-t" + std::to_string(t), c, depths[d], seed));
      }
    }
  }
  fs::create_directories(dir);
  const auto trials = needle::text_trials(specs, needle::essay_filler(substream_seed(seed, "needle/filler")));

  needle::RunOptions opts;
  if (adapter == "subprocess") {
    opts.persist = [dir](needle::NeedlePrompt& p) {
      const fs::path text = dir / "prompts" / (p.id + ".txt"), manifest = dir / "prompts" / (p.id + ".json");
      write_text(text, p.text);
      write_json(manifest, {{"id", p.id}, {"kind", "text"}, {"question", p.question}, {"prompt_path", fs::absolute(text).string()}});
      p.manifest_path = fs::absolute(manifest).string();
    };
  }
  const auto atlas = needle::EmojiAtlas::synthetic(8);
  return finish_needle(trials, dir, adapter, a.command.value_or(cfg.needle_command), a.concurrency.value_or(cfg.needle_concurrency),
                       seed, atlas, opts, out);
}

// Clip from a directory of numbered frame images, played back at fps.
needle::HaystackSegment directory_segment(const fs::path& dir, double fps, int width, int height) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  detail::require_input(!files.empty(), "no frames in " + dir.string());
  detail::require_input(fps > 0.0, "--clip-fps must be positive");
  std::sort(files.begin(), files.end());
  const double duration = static_cast<double>(files.size()) / fps;
  return {dir.string(), duration, [files, fps, width, height](double t) {
            const auto i = std::min(files.size() - 1, static_cast<std::size_t>(t * fps));
            return resize_bilinear(drop_alpha(io::read_image(files[i])), width, height);
          }};
}

int run_needle_tv(const NeedleArgs& a, const Globals& g, const ToolkitConfig& cfg, std::ostream& out) {
  const fs::path dir = require_out(g);
  const std::uint64_t seed = g.seed.value_or(cfg.seed);
  const auto frames = parse_count_list(a.frames);
  const auto depths = parse_real_list(a.depths);
  const auto trials_per_cell = a.trials.value_or(cfg.needle_trials);
  detail::require_config(trials_per_cell >= 1, "--trials must be >= 1");
  const std::string adapter = a.adapter.value_or(cfg.needle_adapter);
  detail::require_config(!(adapter == "subprocess" && a.no_frames), "the subprocess adapter reads frames from disk; drop --no-frames");
  const int w = cfg.frame_width, h = cfg.frame_height;

  std::vector<needle::TvNeedleSpec> specs;
  for (auto f : frames) {
    detail::require_input(f >= needle::kMinFrames && f <= needle::kMaxFrames, "frame counts must be in [13, 444]");
    for (std::size_t d = 0; d < depths.size(); ++d) {
      for (std::int64_t t = 0; t < trials_per_cell; ++t) {
        specs.push_back(needle::make_tv_spec("tv-f" + std::to_string(f) + "-d" + std::to_string(d) + "-t" + std::to_string(t),
                                             static_cast<int>(f), depths[d], seed));
      }
    }
  }

  std::optional<needle::HaystackVideo> clips;
  if (a.clips) {
    clips.emplace();
    for (const auto& c : split(*a.clips, ',')) clips->segments.push_back(directory_segment(c, a.clip_fps, w, h));
  }
  auto haystack_for = [&clips, seed, w, h](const needle::TvNeedleSpec& s) {
    const auto video = clips ? *clips : needle::synthetic_haystack(substream_seed(seed, "haystack/" + s.id), w, h);
    return video.sample(static_cast<std::size_t>(s.num_frames));
  };

  const auto atlas = needle::EmojiAtlas::synthetic(32);
  fs::create_directories(dir);
  if (!a.no_frames) {
    fs::create_directories(dir / "emoji_pool");
    for (const auto& e : atlas.entries) io::write_png(dir / "emoji_pool" / (e.name + ".png"), e.glyph);
    for (const auto& s : specs) {
      const auto inst = needle::gen_tv_needle(s, haystack_for(s), atlas);
      const fs::path sdir = dir / "tv" / s.id;
      fs::create_directories(sdir);
      for (std::size_t f = 0; f < inst.frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", f);
        io::write_png(sdir / name, inst.frames[f]);
      }
      write_json(sdir / "spec.json", {{"id", s.id},
                                      {"num_frames", s.num_frames},
                                      {"depth", s.depth},
                                      {"insertion_start", s.insertion_start},
                                      {"insertion_frames", {s.insertion_start, s.insertion_start + 1, s.insertion_start + 2}},
                                      {"emoji_ids", s.emoji_ids},
                                      {"emoji_names", inst.emoji_names},
                                      {"tokens_per_frame", s.tokens_per_frame},
                                      {"total_tokens", s.total_tokens()},
                                      {"question", std::string(needle::kTvQuestion)},
                                      {"frame_dir", fs::absolute(sdir).string()}});
    }
  }

  const auto trials = needle::tv_trials(specs, haystack_for, atlas);
  needle::RunOptions opts;
  if (adapter == "subprocess") {
    opts.persist = [dir](needle::NeedlePrompt& p) { p.manifest_path = fs::absolute(dir / "tv" / p.id / "spec.json").string(); };
  }
  return finish_needle(trials, dir, adapter, a.command.value_or(cfg.needle_command), a.concurrency.value_or(cfg.needle_concurrency),
                       seed, atlas, opts, out);
}

int run_needle_score(const NeedleArgs& a, const Globals& g, const ToolkitConfig&, std::ostream& out) {
  const fs::path out_path = require_out(g);
  const fs::path answers_path = a.answers;
  const fs::path truth_path = a.truth ? fs::path(*a.truth) : answers_path.parent_path() / "specs.jsonl";
  needle::GroundTruthStore truth;
  for_each_jsonl(truth_path, [&](const nlohmann::json& j) { truth.add(truth_from_json(j)); });
  std::vector<needle::Answer> answers;
  for_each_jsonl(answers_path, [&](const nlohmann::json& j) {
    needle::Answer ans{j.at("id").get<std::string>(), std::nullopt, j.value("error", "")};
    if (j.contains("output") && !j["output"].is_null()) ans.output = j["output"].get<std::string>();
    answers.push_back(std::move(ans));
  });
  const auto grid = needle::score(answers, truth);
  write_grid(out_path, grid);
  out << answers.size() << " answers scored, mean cell score " << format_real(grid.mean_cell()) << "\n";
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------------ dispatch

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-context multimodal training toolkit", "omt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  Globals g;
  add_globals(&app, g);

  TileArgs tile;
  auto* c_tile = app.add_subcommand("tile", "slice an image into an any-resolution tile grid");
  c_tile->add_option("--image", tile.image, "PNG or PPM input")->required();
  c_tile->add_option("--base", tile.base, "tile side in pixels");
  c_tile->add_option("--max-tiles", tile.max_tiles, "largest rows x cols product");
  c_tile->add_flag("--no-thumbnail", tile.no_thumbnail, "omit the global thumbnail tile");

  FormatArgs format;
  auto* c_format = app.add_subcommand("format", "render a multi-image / video prompt");
  c_format->add_option("--manifest", format.manifest, "JSON with 'media' and 'text'")->required();
  c_format->add_option("--fmt", format.fmt, "F0..F4");
  c_format->add_option("--separator", format.separator, "text after each media block (\\n for newline)");

  PackArgs pack;
  auto* c_pack = app.add_subcommand("pack", "pack samples into fixed-length sequences");
  c_pack->add_option("--in", pack.input, "samples.jsonl with {id, token_ids}")->required();
  c_pack->add_option("--target", pack.target, "sequence length");
  c_pack->add_option("--stage", pack.stage, "context schedule stage index (instead of --target)");
  c_pack->add_option("--policy", pack.policy, "oversize policy: reject or truncate")->required();

  RingArgs ring;
  auto* c_ring = app.add_subcommand("ring-check", "compare ring attention against dense attention");
  c_ring->add_option("--seq", ring.seq, "sequence length")->capture_default_str();
  c_ring->add_option("--dim", ring.dim, "head dimension")->capture_default_str();
  c_ring->add_option("--heads", ring.heads, "number of heads")->capture_default_str();
  c_ring->add_option("--workers", ring.workers, "ring size");
  c_ring->add_option("--block", ring.block, "rows per block (default: ceil(seq / workers))");
  c_ring->add_option("--offset", ring.offset, "initial block rotation")->capture_default_str();
  c_ring->add_flag("--causal", ring.causal, "causal mask");
  c_ring->add_flag("--parallel", ring.parallel, "one thread per worker");
  c_ring->add_flag("--rope", ring.rope, "rotate Q and K with RoPE first");

  SvlmArgs sv;
  auto* c_svlm = app.add_subcommand("svlm", "select training tokens by excess loss");
  c_svlm->add_option("--batch", sv.batch, "batch.jsonl with {sample_id, losses[, token_ids]}")->required();
  c_svlm->add_option("--ref", sv.ref, "ref.jsonl with {sample_id, losses}");
  c_svlm->add_option("--ref-corpus", sv.ref_corpus, "corpus.jsonl with {token_ids}; fits a bigram reference");
  c_svlm->add_option("--keep", sv.keep, "keep ratio in (0, 1]");
  c_svlm->add_option("--histogram", sv.histogram, "print an excess-loss histogram with N bins");

  MixtureArgs mix;
  auto* c_mix = app.add_subcommand("mixture", "plan an instruction-data mixture and its portions");
  c_mix->add_option("--specs", mix.specs, "datasets JSON")->required();
  c_mix->add_option("--total", mix.total, "answer tokens, e.g. 200M")->required();
  c_mix->add_option("--portions", mix.portions, "portion sizes, e.g. 10M,20M,40M");
  c_mix->add_option("--mode", mix.mode, "cumulative or disjoint")->capture_default_str();
  c_mix->add_flag("--draws", mix.draws, "include per-dataset draw lists");

  ScheduleArgs sch;
  auto* c_sch = app.add_subcommand("schedule", "learning-rate trunk and per-portion decay branches");
  c_sch->add_option("--portion-steps", sch.portion_steps, "steps per portion, e.g. 1000,1000")->required();
  c_sch->add_option("--base-lr", sch.base_lr, "constant learning rate")->capture_default_str();
  c_sch->add_option("--warmup", sch.warmup, "warmup steps (default: 3% of the first portion)");
  c_sch->add_option("--branch-fraction", sch.branch_fraction, "branch length as a fraction of its base")->capture_default_str();
  c_sch->add_option("--branch-base", sch.branch_base, "cumulative or per-portion")->capture_default_str();

  NeedleArgs nd;
  auto* c_needle = app.add_subcommand("needle", "needle-in-a-haystack generation and scoring");
  c_needle->require_subcommand(1);
  auto* c_text = c_needle->add_subcommand("text", "text needles in filler context");
  c_text->add_option("--context", nd.context, "context ladder, e.g. 4096..524288")->capture_default_str();
  auto* c_tv = c_needle->add_subcommand("tv", "three emojis on three consecutive video frames");
  c_tv->add_option("--frames", nd.frames, "frame counts")->capture_default_str();
  c_tv->add_option("--clips", nd.clips, "comma-separated frame directories used as the haystack");
  c_tv->add_option("--clip-fps", nd.clip_fps, "frame rate of --clips directories")->capture_default_str();
  c_tv->add_flag("--no-frames", nd.no_frames, "skip writing frame PNGs");
  for (auto* c : {c_text, c_tv}) {
    c->add_option("--depths", nd.depths, "depths in [0, 1]")->capture_default_str();
    c->add_option("--trials", nd.trials, "trials per cell");
    c->add_option("--adapter", nd.adapter, "none, oracle, random or subprocess");
    c->add_option("--command", nd.command, "shell command for the subprocess adapter");
    c->add_option("--concurrency", nd.concurrency, "adapter calls in flight");
  }
  auto* c_score = c_needle->add_subcommand("score", "score an answers file into a grid");
  c_score->add_option("--answers", nd.answers, "answers.jsonl with {id, output}")->required();
  c_score->add_option("--truth", nd.truth, "specs.jsonl (default: next to the answers)");

  for (auto* c : {c_tile, c_format, c_pack, c_ring, c_svlm, c_mix, c_sch, c_needle, c_text, c_tv, c_score}) add_globals(c, g);

  std::vector<std::string> argv_store{"omt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    const auto cfg = load_config_or_default(g.config ? std::optional<fs::path>(*g.config) : std::nullopt);
    if (c_tile->parsed()) return run_tile(tile, g, cfg, out);
    if (c_format->parsed()) return run_format(format, g, cfg, out);
    if (c_pack->parsed()) return run_pack(pack, g, cfg, out);
    if (c_ring->parsed()) return run_ring(ring, g, cfg, out);
    if (c_svlm->parsed()) return run_svlm(sv, g, cfg, out);
    if (c_mix->parsed()) return run_mixture(mix, g, cfg, out);
    if (c_sch->parsed()) return run_schedule(sch, g, cfg, out);
    if (c_text->parsed()) return run_needle_text(nd, g, cfg, out);
    if (c_tv->parsed()) return run_needle_tv(nd, g, cfg, out);
    if (c_score->parsed()) return run_needle_score(nd, g, cfg, out);
    err << app.help();
    return kExitValidation;
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace omt::cli
