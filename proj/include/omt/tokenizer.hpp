#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace omt {

using TokenId = std::int32_t;

// Reserved ids shared by the prompt assembler and the packer.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kImStart = 1;
inline constexpr TokenId kImEnd = 2;
inline constexpr TokenId kSeparator = 3;
inline constexpr TokenId kVision = 4;
inline constexpr TokenId kFirstText = 16;
}  // namespace special

template <typename T>
concept Tokenizer = requires(T& mut, const T& t, std::string_view s) {
  { t.count(s) } -> std::convertible_to<std::size_t>;
  { mut.encode(s) } -> std::same_as<std::vector<TokenId>>;
};

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

template <typename Fn>
void for_each_word(std::string_view s, Fn&& fn) {
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) fn(s.substr(start, i - start));
  }
}

// One id per distinct whitespace-separated word, assigned in first-seen order.
class WhitespaceTokenizer {
 public:
  std::size_t count(std::string_view s) const {
    std::size_t n = 0;
    for_each_word(s, [&](std::string_view) { ++n; });
    return n;
  }

  std::vector<TokenId> encode(std::string_view s) {
    std::vector<TokenId> ids;
    for_each_word(s, [&](std::string_view w) {
      auto [it, inserted] = vocab_.try_emplace(std::string(w), next_id_);
      if (inserted) ++next_id_;
      ids.push_back(it->second);
    });
    return ids;
  }

  std::size_t vocab_size() const { return vocab_.size(); }

 private:
  std::unordered_map<std::string, TokenId> vocab_;
  TokenId next_id_ = special::kFirstText;
};

static_assert(Tokenizer<WhitespaceTokenizer>);

}  // namespace omt
