#include "dvqa/vocab.hpp"

#include <stdexcept>

namespace dvqa {

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v(
      "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
      "abcdefghijklmnopqrstuvwxyz"
      "0123456789"
      " $.,/'-?");
  return v;
}

bool Vocabulary::can_tokenize(const std::string& text) const {
  for (char c : text)
    if (chars_.find(c) == std::string::npos) return false;
  return true;
}

int Vocabulary::token_of(char c) const {
  const std::size_t pos = chars_.find(c);
  if (pos == std::string::npos)
    throw std::invalid_argument(std::string("vocabulary: cannot tokenize character '") + c + "'");
  return static_cast<int>(4 + pos);
}

char Vocabulary::char_of(int token) const {
  const int idx = token - 4;
  if (idx < 0 || idx >= static_cast<int>(chars_.size()))
    throw std::invalid_argument("vocabulary: token " + std::to_string(token) +
                                " is not a character token");
  return chars_[static_cast<std::size_t>(idx)];
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(token_of(c));
  return out;
}

std::vector<int> Vocabulary::tokenize_target(const std::string& text) const {
  std::vector<int> out = tokenize(text);
  out.push_back(kEos);
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == kEos) break;
    if (is_special(t)) continue;
    out.push_back(char_of(t));
  }
  return out;
}

}  // namespace dvqa
