#pragma once

// Multi-image / video prompt rendering under the five delimiter formats
// F0..F4, and expansion of image sentinels into vision-token ids.
//
//   F0  <image>
//   F1  <im_start><image><im_end>
//   F2  image {i}: <image>
//   F3  image {i}: <im_start><image><im_end>
//   F4  image {i}: / frame {i}: <im_start><image><im_end>   (word follows media kind)

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "omt/anyres.hpp"
#include "omt/error.hpp"
#include "omt/tokenizer.hpp"

namespace omt::prompt {

inline constexpr std::string_view kImageSentinel = "<image>";
inline constexpr std::string_view kImStart = "<im_start>";
inline constexpr std::string_view kImEnd = "<im_end>";

enum class FormatVariant { F0, F1, F2, F3, F4 };

inline constexpr std::array<FormatVariant, 5> kAllFormats{FormatVariant::F0, FormatVariant::F1, FormatVariant::F2,
                                                          FormatVariant::F3, FormatVariant::F4};

inline std::string_view to_string(FormatVariant f) {
  static constexpr std::array<std::string_view, 5> names{"F0", "F1", "F2", "F3", "F4"};
  return names[static_cast<std::size_t>(f)];
}

inline FormatVariant parse_format(std::string_view s) {
  for (FormatVariant f : kAllFormats) {
    if (to_string(f) == s) return f;
  }
  throw InputError("unknown format variant: " + std::string(s));
}

enum class MediaKind { image, frame };

inline std::string_view to_string(MediaKind k) { return k == MediaKind::image ? "image" : "frame"; }

inline MediaKind parse_media_kind(std::string_view s) {
  if (s == "image") return MediaKind::image;
  if (s == "frame") return MediaKind::frame;
  throw InputError("unknown media kind: " + std::string(s));
}

struct MediaItem {
  MediaKind kind = MediaKind::image;
  int index = 1;  // 1-based, counted per kind
  std::optional<anyres::TileLayout> layout;
};

// Builds items with per-kind consecutive indices.
inline std::vector<MediaItem> make_items(const std::vector<MediaKind>& kinds,
                                         const std::vector<std::optional<anyres::TileLayout>>& layouts = {}) {
  detail::require_input(layouts.empty() || layouts.size() == kinds.size(), "layout count mismatch");
  std::vector<MediaItem> items;
  int images = 0, frames = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const int idx = kinds[i] == MediaKind::image ? ++images : ++frames;
    items.push_back({kinds[i], idx, layouts.empty() ? std::nullopt : layouts[i]});
  }
  return items;
}

struct TextSegment {
  std::string text;
};

struct SpecialSegment {
  TokenId id;
};

using Segment = std::variant<TextSegment, SpecialSegment, MediaItem>;

struct PromptSegmentSequence {
  FormatVariant format = FormatVariant::F0;
  std::vector<Segment> segments;
  std::string rendered;
  // Text tokens + delimiter tokens + vision tokens of every media item that has a layout.
  std::int64_t token_estimate = 0;
};

struct RenderOptions {
  // Appended after each media block. Empty reproduces the bare formats.
  std::string block_separator;
};

namespace detail {

inline void check_indices(const std::vector<MediaItem>& items) {
  int images = 0, frames = 0;
  for (const MediaItem& m : items) {
    const int expected = m.kind == MediaKind::image ? ++images : ++frames;
    omt::detail::require_input(m.index == expected, "media indices must be consecutive from 1 per kind");
  }
}

}  // namespace detail

template <Tokenizer Tok = WhitespaceTokenizer>
PromptSegmentSequence render(const std::vector<MediaItem>& items, const std::vector<std::string>& interleaved_text,
                             FormatVariant fmt, const Tok& tokenizer = Tok{}, const RenderOptions& opts = {}) {
  omt::detail::require_input(!items.empty(), "render needs at least one media item");
  omt::detail::require_input(interleaved_text.size() == items.size() + 1,
                             "interleaved_text must have items.size() + 1 entries");
  detail::check_indices(items);

  PromptSegmentSequence seq;
  seq.format = fmt;
  auto add_text = [&](std::string_view t) {
    if (t.empty()) return;
    seq.segments.push_back(TextSegment{std::string(t)});
    seq.rendered += t;
    seq.token_estimate += static_cast<std::int64_t>(tokenizer.count(t));
  };
  auto add_special = [&](TokenId id, std::string_view text) {
    seq.segments.push_back(SpecialSegment{id});
    seq.rendered += text;
    seq.token_estimate += 1;
  };

  const bool indexed = fmt == FormatVariant::F2 || fmt == FormatVariant::F3 || fmt == FormatVariant::F4;
  const bool delimited = fmt == FormatVariant::F1 || fmt == FormatVariant::F3 || fmt == FormatVariant::F4;

  for (std::size_t i = 0; i < items.size(); ++i) {
    add_text(interleaved_text[i]);
    const MediaItem& item = items[i];
    if (indexed) {
      // F4 names the media kind and counts per kind; F2/F3 always say "image" and count positions.
      const bool per_kind = fmt == FormatVariant::F4;
      const std::string_view word = per_kind ? to_string(item.kind) : "image";
      const int index = per_kind ? item.index : static_cast<int>(i) + 1;
      add_text(std::string(word) + " " + std::to_string(index) + ": ");
    }
    if (delimited) add_special(special::kImStart, kImStart);
    seq.segments.push_back(item);
    seq.rendered += kImageSentinel;
    if (item.layout) seq.token_estimate += item.layout->total_tokens;
    if (delimited) add_special(special::kImEnd, kImEnd);
    add_text(opts.block_separator);
  }
  add_text(interleaved_text.back());
  return seq;
}

// Expands sentinels into vision-token ids and text through the tokenizer.
template <Tokenizer Tok>
std::vector<TokenId> expand_placeholders(const PromptSegmentSequence& seq, Tok& tokenizer) {
  std::vector<TokenId> ids;
  ids.reserve(static_cast<std::size_t>(std::max<std::int64_t>(seq.token_estimate, 0)));
  for (const Segment& seg : seq.segments) {
    if (const auto* t = std::get_if<TextSegment>(&seg)) {
      const auto words = tokenizer.encode(t->text);
      ids.insert(ids.end(), words.begin(), words.end());
    } else if (const auto* s = std::get_if<SpecialSegment>(&seg)) {
      ids.push_back(s->id);
    } else {
      const auto& m = std::get<MediaItem>(seg);
      omt::detail::require_input(m.layout.has_value(), "media item has no tile layout");
      ids.insert(ids.end(), static_cast<std::size_t>(m.layout->total_tokens), special::kVision);
    }
  }
  return ids;
}

inline std::size_t count_sentinels(std::string_view rendered) {
  std::size_t n = 0;
  for (auto pos = rendered.find(kImageSentinel); pos != std::string_view::npos;
       pos = rendered.find(kImageSentinel, pos + kImageSentinel.size())) {
    ++n;
  }
  return n;
}

}  // namespace omt::prompt
