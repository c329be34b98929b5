#include "caplab/vocab.hpp"

#include <algorithm>
#include <set>

#include "caplab/util.hpp"

namespace caplab {

const std::string& Vocabulary::pad_token() {
  static const std::string t = "<pad>";
  return t;
}
const std::string& Vocabulary::bos_token() {
  static const std::string t = "<bos>";
  return t;
}
const std::string& Vocabulary::eos_token() {
  static const std::string t = "<eos>";
  return t;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[kPad] != pad_token() || tokens_[kBos] != bos_token() ||
      tokens_[kEos] != eos_token()) {
    throw Error("vocabulary must start with the <pad>, <bos>, <eos> sentinels");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& captions) {
  if (captions.empty()) throw Error("cannot build vocabulary from an empty corpus");
  std::set<std::string> distinct;
  for (const auto& caption : captions) {
    for (auto& tok : split_ws(caption)) distinct.insert(tok);
  }
  std::vector<std::string> tokens = {pad_token(), bos_token(), eos_token()};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::encode_token(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unknown_index() : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  for (auto& tok : split_ws(text)) out.push_back(encode_token(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    words.push_back(token(id));
  }
  return join_ws(words);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string body;
  for (const auto& t : tokens_) {
    body += t;
    body += '\n';
  }
  write_file(path, body);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return Vocabulary(std::move(lines));
}

bool TokenSequence::complete() const {
  return ids.size() >= 2 && ids.front() == Vocabulary::kBos && ids.back() == Vocabulary::kEos;
}

std::vector<int> TokenSequence::content_ids() const {
  std::vector<int> out;
  for (int id : ids) {
    if (id != Vocabulary::kPad && id != Vocabulary::kBos && id != Vocabulary::kEos) {
      out.push_back(id);
    }
  }
  return out;
}

std::size_t TokenSequence::content_length() const { return content_ids().size(); }

TokenSequence TokenSequence::from_text(const Vocabulary& vocab, const std::string& text,
                                       bool terminated) {
  return from_content_ids(vocab, vocab.encode(text), terminated);
}

TokenSequence TokenSequence::from_content_ids(const Vocabulary& vocab,
                                              const std::vector<int>& content, bool terminated) {
  TokenSequence seq;
  seq.ids.reserve(content.size() + 2);
  seq.ids.push_back(Vocabulary::kBos);
  seq.ids.insert(seq.ids.end(), content.begin(), content.end());
  if (terminated) seq.ids.push_back(Vocabulary::kEos);
  seq.text = vocab.decode(content);
  return seq;
}

}  // namespace caplab
