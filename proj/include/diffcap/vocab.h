#ifndef DIFFCAP_VOCAB_H_
#define DIFFCAP_VOCAB_H_

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace diffcap {

// Lowercases ASCII and splits on whitespace and punctuation; punctuation
// characters are dropped.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // Non-reserved tokens in id order starting at kReserved.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;

  std::vector<int> encode(std::string_view text) const;
  // Stops at the first end token; skips pad and start.
  std::string decode(std::span<const int> ids) const;

  // One non-reserved token per line; line i holds id i + 4.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace diffcap

#endif  // DIFFCAP_VOCAB_H_
