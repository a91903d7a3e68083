#include "diffcap/vocab.h"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace diffcap {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u) || std::ispunct(u)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<start>", "<end>", "<unk>"} {
  for (int i = 0; i < kReserved; ++i) index_.emplace(tokens_[i], i);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (t.empty()) throw std::invalid_argument("vocabulary token is empty");
    if (!index_.emplace(t, static_cast<int>(tokens_.size())).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    }
    tokens_.push_back(t);
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kEnd) break;
    if (i == kPad || i == kStart) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

}  // namespace diffcap
