#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "omt/prompt.hpp"
#include "omt/rng.hpp"

using namespace omt;
using namespace omt::prompt;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(OMT_GOLDEN_DIR) + "/prompts/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

anyres::TileLayout single_tile() { return anyres::layout_image(336, 336, {}); }

std::vector<std::string> no_text(std::size_t items) { return std::vector<std::string>(items + 1); }

// Word count with a plain stream split, independent of for_each_word.
std::size_t count_words(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

}  // namespace

TEST(Render, FormatExamples) {
  const auto two = make_items({MediaKind::image, MediaKind::image});
  EXPECT_EQ(render(two, no_text(2), FormatVariant::F0).rendered, "<image><image>");
  EXPECT_EQ(render(make_items({MediaKind::image}), no_text(1), FormatVariant::F2).rendered, "image 1: <image>");
  const auto frames = make_items({MediaKind::frame, MediaKind::frame});
  EXPECT_EQ(render(frames, no_text(2), FormatVariant::F4).rendered,
            "frame 1: <im_start><image><im_end>frame 2: <im_start><image><im_end>");
}

TEST(Render, MatchesGoldenFiles) {
  const auto images = make_items({MediaKind::image, MediaKind::image});
  const auto frames = make_items({MediaKind::frame, MediaKind::frame});
  EXPECT_EQ(render(images, no_text(2), FormatVariant::F0).rendered, golden("F0_two_images.txt"));
  EXPECT_EQ(render(images, no_text(2), FormatVariant::F1).rendered, golden("F1_two_images.txt"));
  EXPECT_EQ(render(images, no_text(2), FormatVariant::F2).rendered, golden("F2_two_images.txt"));
  EXPECT_EQ(render(images, no_text(2), FormatVariant::F3).rendered, golden("F3_two_images.txt"));
  EXPECT_EQ(render(images, no_text(2), FormatVariant::F4).rendered, golden("F4_two_images.txt"));
  EXPECT_EQ(render(frames, no_text(2), FormatVariant::F4).rendered, golden("F4_two_frames.txt"));
}

TEST(Render, InterleavedTextAndSeparator) {
  const auto items = make_items({MediaKind::image, MediaKind::image});
  const auto seq = render(items, {"Compare ", " with ", " please."}, FormatVariant::F3);
  EXPECT_EQ(seq.rendered,
            "Compare image 1: <im_start><image><im_end> with image 2: <im_start><image><im_end> please.");
  RenderOptions nl{"\n"};
  EXPECT_EQ(render(items, no_text(2), FormatVariant::F1, WhitespaceTokenizer{}, nl).rendered,
            "<im_start><image><im_end>\n<im_start><image><im_end>\n");
}

TEST(Render, F4CountsPerKind) {
  const auto items = make_items({MediaKind::image, MediaKind::frame, MediaKind::frame, MediaKind::image});
  EXPECT_EQ(render(items, no_text(4), FormatVariant::F4).rendered,
            "image 1: <im_start><image><im_end>frame 1: <im_start><image><im_end>"
            "frame 2: <im_start><image><im_end>image 2: <im_start><image><im_end>");
  // F2/F3 say "image" for everything and number by position.
  EXPECT_EQ(render(items, no_text(4), FormatVariant::F2).rendered,
            "image 1: <image>image 2: <image>image 3: <image>image 4: <image>");
}

TEST(Render, Errors) {
  EXPECT_THROW(render({}, no_text(0), FormatVariant::F0), InputError);
  EXPECT_THROW(render(make_items({MediaKind::image}), no_text(2), FormatVariant::F0), InputError);
  std::vector<MediaItem> bad{{MediaKind::image, 2, std::nullopt}};
  EXPECT_THROW(render(bad, no_text(1), FormatVariant::F2), InputError);
  EXPECT_THROW(parse_format("F5"), InputError);
}

TEST(ExpandPlaceholders, LengthExamples) {
  WhitespaceTokenizer tok;
  const auto one = make_items({MediaKind::image}, {single_tile()});
  EXPECT_EQ(expand_placeholders(render(one, no_text(1), FormatVariant::F1), tok).size(), 578u);
  EXPECT_EQ(expand_placeholders(render(one, no_text(1), FormatVariant::F0), tok).size(), 576u);

  std::vector<MediaKind> kinds(13, MediaKind::frame);
  std::vector<std::optional<anyres::TileLayout>> layouts(13, anyres::layout_image(640, 360, anyres::TilerConfig::video_frame()));
  const auto seq = render(make_items(kinds, layouts), no_text(13), FormatVariant::F4);
  std::size_t prefix_words = 0;
  for (int i = 1; i <= 13; ++i) prefix_words += count_words("frame " + std::to_string(i) + ": ");
  EXPECT_EQ(prefix_words, 26u);
  EXPECT_EQ(expand_placeholders(seq, tok).size(), 13u * (576 + 2) + prefix_words);
}

TEST(ExpandPlaceholders, IdsAndMissingLayout) {
  WhitespaceTokenizer tok;
  const auto seq = render(make_items({MediaKind::image}, {single_tile()}), {"look", ""}, FormatVariant::F1);
  const auto ids = expand_placeholders(seq, tok);
  ASSERT_EQ(ids.size(), 579u);
  EXPECT_EQ(ids[0], special::kFirstText);
  EXPECT_EQ(ids[1], special::kImStart);
  EXPECT_EQ(ids[2], special::kVision);
  EXPECT_EQ(ids.back(), special::kImEnd);
  EXPECT_THROW(expand_placeholders(render(make_items({MediaKind::image}), no_text(1), FormatVariant::F0), tok),
               InputError);
}

namespace {

struct RandomSample {
  std::vector<MediaItem> items;
  std::vector<std::string> text;
};

RandomSample random_sample(Rng& rng, bool frames_allowed) {
  static const std::vector<std::string> words{"a", "bb", "xyz", "q", "zz"};
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, 6));
  std::vector<MediaKind> kinds;
  std::vector<std::optional<anyres::TileLayout>> layouts;
  for (std::size_t i = 0; i < n; ++i) {
    kinds.push_back(frames_allowed && rng.uniform() < 0.5 ? MediaKind::frame : MediaKind::image);
    anyres::TilerConfig cfg;
    cfg.base_tile_px = 14;
    cfg.tokens_per_tile = static_cast<int>(rng.uniform_int(1, 9));
    layouts.push_back(anyres::layout_image(static_cast<int>(rng.uniform_int(1, 50)), static_cast<int>(rng.uniform_int(1, 50)), cfg));
  }
  RandomSample s{make_items(kinds, layouts), {}};
  for (std::size_t i = 0; i <= n; ++i) {
    std::string t;
    const auto len = rng.uniform_int(0, 3);
    for (std::int64_t k = 0; k < len; ++k) t += words[static_cast<std::size_t>(rng.uniform_int(0, 4))] + " ";
    s.text.push_back(t);
  }
  return s;
}

}  // namespace

TEST(RenderProperties, PlaceholderCountAndTokenEstimate) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_sample(rng, true);
    for (FormatVariant f : kAllFormats) {
      const auto seq = render(s.items, s.text, f);
      ASSERT_EQ(count_sentinels(seq.rendered), s.items.size());
      WhitespaceTokenizer tok;
      ASSERT_EQ(static_cast<std::int64_t>(expand_placeholders(seq, tok).size()), seq.token_estimate);
    }
  }
}

TEST(RenderProperties, F3EqualsF4OnImages) {
  Rng rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_sample(rng, false);
    ASSERT_EQ(render(s.items, s.text, FormatVariant::F3).rendered, render(s.items, s.text, FormatVariant::F4).rendered);
  }
}

TEST(RenderProperties, InjectivePerVariant) {
  Rng rng(23);
  std::vector<RandomSample> samples;
  for (int i = 0; i < 400; ++i) samples.push_back(random_sample(rng, true));
  for (FormatVariant f : kAllFormats) {
    std::map<std::string, std::string> seen;  // rendered -> input key
    for (const auto& s : samples) {
      // Inputs that a variant can distinguish: F4 renders media kinds, the others do not.
      std::string key;
      for (const auto& m : s.items) key += f == FormatVariant::F4 ? std::string(to_string(m.kind)) + "|" : "m|";
      for (const auto& t : s.text) key += t + "|";
      const auto rendered = render(s.items, s.text, f).rendered;
      const auto [it, inserted] = seen.emplace(rendered, key);
      if (!inserted) {
        ASSERT_EQ(it->second, key) << "collision under " << to_string(f);
      }
    }
  }
}
