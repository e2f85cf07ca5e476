#pragma once

#include <span>
#include <string>
#include <vector>

namespace dvqa {

// Character-level vocabulary. Specials hold the reserved indices 0..3;
// regular tokens follow in a fixed order.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kSep = 3;

  static const Vocabulary& standard();

  int size() const { return static_cast<int>(4 + chars_.size()); }

  bool can_tokenize(const std::string& text) const;
  int token_of(char c) const;  // throws std::invalid_argument for unknown characters
  char char_of(int token) const;
  bool is_special(int token) const { return token >= 0 && token < 4; }

  std::vector<int> tokenize(const std::string& text) const;
  // Appends EOS; the form consumed by teacher-forced losses.
  std::vector<int> tokenize_target(const std::string& text) const;
  // Drops specials, stops at EOS.
  std::string detokenize(std::span<const int> tokens) const;

 private:
  explicit Vocabulary(std::string chars) : chars_(std::move(chars)) {}
  std::string chars_;
};

}  // namespace dvqa
