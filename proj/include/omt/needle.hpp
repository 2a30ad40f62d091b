#pragma once

// Needle-in-a-haystack evaluation: text needles hidden in filler at a chosen
// depth, temporal visual needles (three emojis on three consecutive video
// frames), and scoring of model answers into a (context x depth) grid.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "omt/error.hpp"
#include "omt/image.hpp"
#include "omt/rng.hpp"
#include "omt/tokenizer.hpp"

namespace omt::needle {

inline constexpr int kTokensPerFrame = 576;
inline constexpr int kMinFrames = 13;
inline constexpr int kMaxFrames = 444;
inline constexpr std::size_t kEmojiPoolSize = 200;
inline constexpr std::size_t kEmojisPerNeedle = 3;

inline std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

// Position of a window of `width` units inside `length` units at fractional depth.
inline std::int64_t depth_offset(double depth, std::int64_t length, std::int64_t width) {
  detail::require_input(depth >= 0.0 && depth <= 1.0, "depth must be in [0, 1]");
  detail::require_input(length >= width, "window longer than the haystack");
  return round_half_up(depth * static_cast<double>(length - width));
}

// ---------------------------------------------------------------- text needle

// Maps a context position to one filler word. Random access so the same
// context can be regenerated at any length.
using FillerSource = std::function<std::string(std::int64_t position)>;

inline FillerSource essay_filler(std::uint64_t seed) {
  static constexpr std::array<std::string_view, 48> words{
      "the",    "river",  "runs",    "through", "a",      "quiet",   "valley", "where",  "old",    "stone",
      "bridges", "carry", "people",  "from",    "market", "towns",   "into",   "green",  "fields", "and",
      "long",   "summer", "evenings", "bring",  "light",  "over",    "roofs",  "while",  "birds",  "return",
      "to",     "their",  "nests",   "near",    "wide",   "gardens", "full",   "of",     "slow",   "bees",
      "under",  "pale",   "skies",   "that",    "turn",   "gold",    "at",     "dusk"};
  return [seed](std::int64_t pos) {
    Rng rng(seed ^ (static_cast<std::uint64_t>(pos) * 0xD1B54A32D192ED03ULL));
    std::string w(words[static_cast<std::size_t>(rng.next() % words.size())]);
    if (pos % 13 == 12) w += '.';
    return w;
  };
}

struct TextNeedleSpec {
  std::string id;
  std::int64_t context_tokens = 0;
  double depth = 0.0;
  std::string needle_text;
  std::string question;
  std::string expected_answer;
};

struct TextNeedleInstance {
  TextNeedleSpec spec;
  std::string prompt;              // context, newline, question
  std::int64_t needle_offset = 0;  // word index of the needle's first token
  std::int64_t needle_tokens = 0;
  std::int64_t context_token_count = 0;
};

inline TextNeedleInstance gen_text_needle(const TextNeedleSpec& spec, const FillerSource& filler) {
  const WhitespaceTokenizer tok;
  const auto n = static_cast<std::int64_t>(tok.count(spec.needle_text));
  const auto q = static_cast<std::int64_t>(tok.count(spec.question));
  detail::require_input(n > 0, "needle text is empty");
  detail::require_input(spec.context_tokens >= n + q, "context budget smaller than needle plus question");

  TextNeedleInstance inst;
  inst.spec = spec;
  inst.needle_tokens = n;
  inst.needle_offset = depth_offset(spec.depth, spec.context_tokens, n);
  std::vector<std::string_view> needle_words;
  for_each_word(spec.needle_text, [&](std::string_view w) { needle_words.push_back(w); });

  std::string& out = inst.prompt;
  out.reserve(static_cast<std::size_t>(spec.context_tokens) * 7);
  for (std::int64_t pos = 0; pos < spec.context_tokens; ++pos) {
    if (pos > 0) out += ' ';
    if (pos >= inst.needle_offset && pos < inst.needle_offset + n) {
      out += needle_words[static_cast<std::size_t>(pos - inst.needle_offset)];
    } else {
      out += filler(pos);
    }
  }
  inst.context_token_count = spec.context_tokens;
  out += '\n';
  out += spec.question;
  return inst;
}

// A seeded passphrase needle; the answer is unique per spec id.
inline TextNeedleSpec make_text_spec(std::string id, std::int64_t context_tokens, double depth, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 16> nouns{"amber", "cobalt", "falcon", "granite", "harbor", "indigo",
                                                          "juniper", "kestrel", "lantern", "meadow", "nickel",
                                                          "orchid", "pepper", "quartz", "saffron", "tundra"};
  Rng rng = substream(seed, "needle/text/" + id);
  std::string answer = std::string(nouns[static_cast<std::size_t>(rng.uniform_int(0, nouns.size() - 1))]) + "-" +
                       std::to_string(rng.uniform_int(100000, 999999));
  return {std::move(id), context_tokens, depth, "The secret passphrase is " + answer + " .",
          "What is the secret passphrase mentioned in the text?", answer};
}

// -------------------------------------------------------------- visual needle

struct Emoji {
  std::string name;
  Image glyph;  // RGBA
};

struct EmojiAtlas {
  std::vector<Emoji> entries;

  std::size_t size() const { return entries.size(); }

  // Procedural stand-ins: a colored disc with a per-id face pattern.
  static EmojiAtlas synthetic(int size_px = 32, std::size_t count = kEmojiPoolSize) {
    EmojiAtlas atlas;
    for (std::size_t id = 0; id < count; ++id) {
      Image g(size_px, size_px, 4, 0);
      const double hue = static_cast<double>(id) * 0.618033988749895;
      auto channel = [&](double phase) {
        const double v = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (hue + phase));
        return static_cast<std::uint8_t>(40 + std::lround(200 * v));
      };
      const std::array<std::uint8_t, 3> body{channel(0.0), channel(1.0 / 3), channel(2.0 / 3)};
      const double c = (size_px - 1) / 2.0, r = size_px / 2.0 - 0.5;
      const int pattern = static_cast<int>(id % 8);
      for (int y = 0; y < size_px; ++y) {
        for (int x = 0; x < size_px; ++x) {
          const double dx = (x - c) / r, dy = (y - c) / r;
          if (dx * dx + dy * dy > 1.0) continue;
          std::uint8_t* px = g.at(x, y);
          px[0] = body[0];
          px[1] = body[1];
          px[2] = body[2];
          px[3] = 255;
          const bool eye = (std::abs(dx + 0.35) < 0.12 || std::abs(dx - 0.35) < 0.12) && std::abs(dy + 0.3) < 0.12;
          const bool mouth = std::abs(dy - 0.35 - 0.05 * (pattern % 3)) < 0.08 && std::abs(dx) < 0.2 + 0.05 * (pattern / 2);
          if (eye || mouth) px[0] = px[1] = px[2] = static_cast<std::uint8_t>(20 * (id / 8 % 4));
        }
      }
      char name[32];
      std::snprintf(name, sizeof name, "emoji-%03zu", id);
      atlas.entries.push_back({name, std::move(g)});
    }
    return atlas;
  }
};

struct TvNeedleSpec {
  std::string id;
  int num_frames = kMinFrames;
  double depth = 0.0;
  std::array<std::size_t, kEmojisPerNeedle> emoji_ids{};
  std::int64_t insertion_start = 0;
  int tokens_per_frame = kTokensPerFrame;

  std::int64_t total_tokens() const { return static_cast<std::int64_t>(num_frames) * tokens_per_frame; }
};

inline TvNeedleSpec make_tv_spec(std::string id, int num_frames, double depth, std::uint64_t seed,
                                 std::size_t pool = kEmojiPoolSize) {
  detail::require_input(num_frames >= kMinFrames && num_frames <= kMaxFrames, "num_frames must be in [13, 444]");
  detail::require_input(pool >= kEmojisPerNeedle, "emoji pool too small");
  TvNeedleSpec s;
  s.id = std::move(id);
  s.num_frames = num_frames;
  s.depth = depth;
  s.insertion_start = depth_offset(depth, num_frames, kEmojisPerNeedle);
  Rng rng = substream(seed, "needle/tv/" + s.id);
  std::set<std::size_t> chosen;
  for (auto& e : s.emoji_ids) {
    do {
      e = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool) - 1));
    } while (!chosen.insert(e).second);
  }
  return s;
}

// Random-access frame supplier.
struct FrameProvider {
  std::size_t count = 0;
  std::function<Image(std::size_t)> frame;
};

struct HaystackSegment {
  std::string label;    // "synthetic:<n>" or a directory path
  double duration_s = 0.0;
  // Renders the segment at local time t in [0, duration_s).
  std::function<Image(double t)> render;
};

// Concatenated clips sampled into a fixed number of uniformly spaced frames.
struct HaystackVideo {
  std::vector<HaystackSegment> segments;

  double total_duration() const {
    double d = 0.0;
    for (const auto& s : segments) d += s.duration_s;
    return d;
  }

  FrameProvider sample(std::size_t num_frames) const {
    detail::require_input(!segments.empty(), "haystack has no segments");
    // Owns a copy of the segments.
    return {num_frames, [segs = segments, total = total_duration(), num_frames](std::size_t i) {
              double t = (static_cast<double>(i) + 0.5) * total / static_cast<double>(num_frames);
              for (const auto& seg : segs) {
                if (t < seg.duration_s || &seg == &segs.back()) {
                  return seg.render(std::min(t, std::nextafter(seg.duration_s, 0.0)));
                }
                t -= seg.duration_s;
              }
              return segs.back().render(0.0);
            }};
  }
};

namespace glyph {

// 3x5 digit glyphs, bit 2 = left column.
inline constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

inline void draw_number(Image& img, std::int64_t value, int x0, int y0, int scale) {
  const std::string digits = std::to_string(value);
  for (std::size_t k = 0; k < digits.size(); ++k) {
    const auto& g = kDigits[static_cast<std::size_t>(digits[k] - '0')];
    for (int gy = 0; gy < 5; ++gy) {
      for (int gx = 0; gx < 3; ++gx) {
        if (!((g[gy] >> (2 - gx)) & 1)) continue;
        for (int sy = 0; sy < scale; ++sy) {
          for (int sx = 0; sx < scale; ++sx) {
            const int x = x0 + (static_cast<int>(k) * 4 + gx) * scale + sx, y = y0 + gy * scale + sy;
            if (x < img.width && y < img.height) {
              std::uint8_t* p = img.at(x, y);
              p[0] = p[1] = p[2] = 255;
            }
          }
        }
      }
    }
  }
}

}  // namespace glyph

// Procedural clip: a drifting gradient scene with a moving block, stamped
// with the clip-local second.
inline HaystackSegment synthetic_segment(std::uint64_t seed, double duration_s, int width, int height) {
  Rng rng(seed);
  const double hue = rng.uniform(), speed = rng.uniform(0.2, 1.0);
  const int block = std::max(2, height / 6);
  auto render = [=](double t) {
    Image img(width, height, 3);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        std::uint8_t* p = img.at(x, y);
        const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
        p[0] = static_cast<std::uint8_t>(std::lround(255 * (0.5 + 0.5 * std::sin(6.28 * (hue + u + 0.01 * t)))));
        p[1] = static_cast<std::uint8_t>(std::lround(255 * (0.5 + 0.5 * std::sin(6.28 * (hue + v + 0.33)))));
        p[2] = static_cast<std::uint8_t>(std::lround(255 * (0.5 + 0.5 * std::sin(6.28 * (hue + u * v + 0.66)))));
      }
    }
    const int travel = std::max(1, width - block);
    const int bx = static_cast<int>(std::fmod(t * speed * 4.0, static_cast<double>(travel)));
    const int by = height / 3;
    for (int y = by; y < std::min(height, by + block); ++y) {
      for (int x = bx; x < std::min(width, bx + block); ++x) {
        std::uint8_t* p = img.at(x, y);
        p[0] = 250;
        p[1] = 250;
        p[2] = 40;
      }
    }
    glyph::draw_number(img, static_cast<std::int64_t>(t), 1, 1, std::max(1, height / 64));
    return img;
  };
  return {"synthetic:" + std::to_string(seed), duration_s, render};
}

// 10-16 synthetic clips of 60-120 s each, concatenated in seeded order.
inline HaystackVideo synthetic_haystack(std::uint64_t seed, int width, int height) {
  Rng rng = substream(seed, "needle/haystack");
  HaystackVideo video;
  const auto clips = rng.uniform_int(10, 16);
  for (std::int64_t i = 0; i < clips; ++i) {
    video.segments.push_back(synthetic_segment(rng.next(), rng.uniform(60.0, 120.0), width, height));
  }
  return video;
}

// Emoji box: bottom-right quadrant, side = 25% of frame height, centered in the quadrant.
inline Rect emoji_region(int frame_w, int frame_h) {
  const int side = std::max(1, static_cast<int>(round_half_up(0.25 * frame_h)));
  return {frame_w / 2 + (frame_w / 2 - side) / 2, frame_h / 2 + (frame_h / 2 - side) / 2, side, side};
}

struct TvNeedleInstance {
  TvNeedleSpec spec;
  std::vector<Image> frames;
  std::array<std::string, kEmojisPerNeedle> emoji_names;
};

inline TvNeedleInstance gen_tv_needle(const TvNeedleSpec& spec, const FrameProvider& source, const EmojiAtlas& atlas) {
  detail::require_input(source.count >= static_cast<std::size_t>(spec.num_frames), "frame source too short");
  detail::require_input(atlas.size() >= kEmojiPoolSize, "emoji atlas needs at least 200 entries");
  detail::require_input(spec.insertion_start >= 0 && spec.insertion_start + 2 < spec.num_frames,
                             "insertion window outside the video");
  TvNeedleInstance inst;
  inst.spec = spec;
  inst.frames.reserve(static_cast<std::size_t>(spec.num_frames));
  for (int f = 0; f < spec.num_frames; ++f) inst.frames.push_back(source.frame(static_cast<std::size_t>(f)));
  for (std::size_t k = 0; k < kEmojisPerNeedle; ++k) {
    detail::require_input(spec.emoji_ids[k] < atlas.size(), "emoji id outside atlas");
    const Emoji& e = atlas.entries[spec.emoji_ids[k]];
    inst.emoji_names[k] = e.name;
    Image& frame = inst.frames[static_cast<std::size_t>(spec.insertion_start) + k];
    const Rect r = emoji_region(frame.width, frame.height);
    alpha_blend(frame, resize_bilinear(e.glyph, r.w, r.h), r.x, r.y);
  }
  return inst;
}

// {13, 27, 55, 111, 222, 444}: halving down from 444 until 13.
inline std::vector<int> frame_ladder() {
  std::vector<int> ladder{kMaxFrames};
  while (ladder.back() > kMinFrames) ladder.push_back(std::max(kMinFrames, ladder.back() / 2));
  std::reverse(ladder.begin(), ladder.end());
  return ladder;
}

// ------------------------------------------------------------------- scoring

enum class NeedleKind { text, tv };

inline std::string_view to_string(NeedleKind k) { return k == NeedleKind::text ? "text" : "tv"; }

struct GroundTruth {
  std::string id;
  NeedleKind kind = NeedleKind::text;
  std::int64_t row = 0;  // context tokens (text) or frame count (tv)
  double depth = 0.0;
  std::vector<std::string> expected;  // all must appear in the answer
  std::int64_t insertion = 0;         // word offset (text) or first frame (tv)
};

inline GroundTruth truth_of(const TextNeedleSpec& s, std::int64_t needle_offset) {
  return {s.id, NeedleKind::text, s.context_tokens, s.depth, {s.expected_answer}, needle_offset};
}

inline GroundTruth truth_of(const TvNeedleSpec& s, const EmojiAtlas& atlas) {
  GroundTruth g{s.id, NeedleKind::tv, s.num_frames, s.depth, {}, s.insertion_start};
  for (auto e : s.emoji_ids) g.expected.push_back(e < atlas.size() ? atlas.entries[e].name : std::to_string(e));
  return g;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// 1 iff every expected item occurs in the output, ignoring case.
inline int score_trial(std::string_view output, const std::vector<std::string>& expected) {
  const std::string hay = lowercase(output);
  for (const auto& e : expected) {
    if (hay.find(lowercase(e)) == std::string::npos) return 0;
  }
  return 1;
}

struct EvalGrid {
  std::string row_label = "context_tokens";
  std::vector<std::int64_t> rows;
  std::vector<double> depths;
  std::vector<std::vector<std::int64_t>> successes;  // [row][depth]
  std::vector<std::vector<std::int64_t>> trials;
  std::int64_t failed_trials = 0;

  bool empty() const { return rows.empty(); }

  std::optional<double> cell(std::size_t r, std::size_t c) const {
    if (trials[r][c] == 0) return std::nullopt;
    return static_cast<double>(successes[r][c]) / static_cast<double>(trials[r][c]);
  }

  double mean_cell() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < depths.size(); ++c) {
        if (auto v = cell(r, c)) {
          s += *v;
          ++n;
        }
      }
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

struct Answer {
  std::string id;
  std::optional<std::string> output;  // nullopt when the adapter failed
  std::string error;
};

class GroundTruthStore {
 public:
  void add(GroundTruth g) {
    const std::string id = g.id;
    detail::require_input(by_id_.emplace(id, std::move(g)).second, "duplicate spec id '" + id + "'");
  }
  const GroundTruth& at(const std::string& id) const {
    const auto it = by_id_.find(id);
    detail::require_input(it != by_id_.end(), "unknown spec id '" + id + "'");
    return it->second;
  }
  bool empty() const { return by_id_.empty(); }
  const std::map<std::string, GroundTruth>& all() const { return by_id_; }

 private:
  std::map<std::string, GroundTruth> by_id_;
};

// Builds the grid axes from every known spec, then fills cells from answers.
inline EvalGrid score(const std::vector<Answer>& answers, const GroundTruthStore& truth) {
  EvalGrid grid;
  std::set<std::int64_t> rows;
  std::set<double> depths;
  for (const auto& [id, g] : truth.all()) {
    rows.insert(g.row);
    depths.insert(g.depth);
    if (g.kind == NeedleKind::tv) grid.row_label = "frames";
  }
  grid.rows.assign(rows.begin(), rows.end());
  grid.depths.assign(depths.begin(), depths.end());
  grid.successes.assign(grid.rows.size(), std::vector<std::int64_t>(grid.depths.size(), 0));
  grid.trials = grid.successes;
  for (const Answer& a : answers) {
    const GroundTruth& g = truth.at(a.id);
    if (!a.output) {
      ++grid.failed_trials;
      continue;
    }
    const auto r = static_cast<std::size_t>(std::lower_bound(grid.rows.begin(), grid.rows.end(), g.row) - grid.rows.begin());
    const auto c =
        static_cast<std::size_t>(std::lower_bound(grid.depths.begin(), grid.depths.end(), g.depth) - grid.depths.begin());
    ++grid.trials[r][c];
    grid.successes[r][c] += score_trial(*a.output, g.expected);
  }
  return grid;
}

// ------------------------------------------------------------------ running

struct NeedlePrompt {
  std::string id;
  NeedleKind kind = NeedleKind::text;
  std::string text;                  // full text prompt (text needle)
  std::string question;
  const std::vector<Image>* frames = nullptr;  // tv needle frames
  std::string manifest_path;         // set when artifacts are persisted
};

// Maps a prompt to one answer line. Implementations must be safe to call
// concurrently when run_eval is given a concurrency limit above 1.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  virtual std::string answer(const NeedlePrompt& prompt) = 0;
};

// Answers from the ground truth; closes the loop for harness self-tests.
class OracleAdapter : public ModelAdapter {
 public:
  explicit OracleAdapter(const GroundTruthStore& truth) : truth_(&truth) {}
  std::string answer(const NeedlePrompt& p) override {
    std::string out;
    for (const auto& e : truth_->at(p.id).expected) out += (out.empty() ? "" : " ") + e;
    return out;
  }

 private:
  const GroundTruthStore* truth_;
};

// Guesses: three distinct pool emojis for tv, a made-up passphrase for text.
class RandomAdapter : public ModelAdapter {
 public:
  RandomAdapter(std::uint64_t seed, const EmojiAtlas& atlas) : seed_(seed), atlas_(&atlas) {}
  std::string answer(const NeedlePrompt& p) override {
    Rng rng = substream(seed_, "adapter/random/" + p.id);
    if (p.kind == NeedleKind::text) {
      return make_text_spec(p.id + "/guess", 0, 0.0, rng.next()).expected_answer;
    }
    std::set<std::int64_t> picked;
    std::string out;
    while (picked.size() < kEmojisPerNeedle) {
      const auto e = rng.uniform_int(0, static_cast<std::int64_t>(atlas_->size()) - 1);
      if (picked.insert(e).second) out += (out.empty() ? "" : " ") + atlas_->entries[static_cast<std::size_t>(e)].name;
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  const EmojiAtlas* atlas_;
};

// One runnable trial: ground truth plus a deferred prompt builder so large
// instances are materialized only while being queried.
struct Trial {
  GroundTruth truth;
  std::function<void(const std::function<void(const NeedlePrompt&)>&)> with_prompt;
};

inline std::vector<Trial> text_trials(const std::vector<TextNeedleSpec>& specs, FillerSource filler) {
  std::vector<Trial> out;
  for (const auto& s : specs) {
    const WhitespaceTokenizer tok;
    const auto n = static_cast<std::int64_t>(tok.count(s.needle_text));
    out.push_back({truth_of(s, depth_offset(s.depth, s.context_tokens, n)),
                   [s, filler](const std::function<void(const NeedlePrompt&)>& fn) {
                     const auto inst = gen_text_needle(s, filler);
                     fn(NeedlePrompt{s.id, NeedleKind::text, inst.prompt, s.question, nullptr, {}});
                   }});
  }
  return out;
}

inline constexpr std::string_view kTvQuestion =
    "Three emojis appear on three consecutive frames of this video. Name them in order.";

// haystack_for(spec) supplies the frames for one spec.
inline std::vector<Trial> tv_trials(const std::vector<TvNeedleSpec>& specs,
                                    std::function<FrameProvider(const TvNeedleSpec&)> haystack_for,
                                    const EmojiAtlas& atlas) {
  std::vector<Trial> out;
  for (const auto& s : specs) {
    out.push_back({truth_of(s, atlas), [s, haystack_for, &atlas](const std::function<void(const NeedlePrompt&)>& fn) {
                     const auto inst = gen_tv_needle(s, haystack_for(s), atlas);
                     fn(NeedlePrompt{s.id, NeedleKind::tv, {}, std::string(kTvQuestion), &inst.frames, {}});
                   }});
  }
  return out;
}

struct RunOptions {
  std::size_t max_concurrency = 1;
  // Called with each prompt before the adapter sees it; may persist artifacts
  // and set manifest_path.
  std::function<void(NeedlePrompt&)> persist;
};

struct EvalResult {
  EvalGrid grid;
  std::vector<Answer> answers;  // sorted by spec id
  GroundTruthStore truth;
};

inline EvalResult run_eval(const std::vector<Trial>& trials, ModelAdapter& adapter, const RunOptions& opts = {}) {
  EvalResult result;
  for (const auto& t : trials) result.truth.add(t.truth);
  result.answers.resize(trials.size());

  auto run_one = [&](std::size_t i) {
    Answer& a = result.answers[i];
    a.id = trials[i].truth.id;
    try {
      trials[i].with_prompt([&](const NeedlePrompt& p) {
        NeedlePrompt prompt = p;
        if (opts.persist) opts.persist(prompt);
        a.output = adapter.answer(prompt);
      });
    } catch (const std::exception& e) {
      a.output.reset();
      a.error = e.what();
    }
  };

  const std::size_t limit = std::max<std::size_t>(1, opts.max_concurrency);
  for (std::size_t begin = 0; begin < trials.size(); begin += limit) {
    const std::size_t end = std::min(trials.size(), begin + limit);
    if (limit == 1) {
      run_one(begin);
      continue;
    }
    std::vector<std::future<void>> running;
    for (std::size_t i = begin; i < end; ++i) running.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : running) f.get();
  }

  std::sort(result.answers.begin(), result.answers.end(), [](const Answer& a, const Answer& b) { return a.id < b.id; });
  result.grid = score(result.answers, result.truth);
  return result;
}

}  // namespace omt::needle
