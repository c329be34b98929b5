#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace caplab {

// Token inventory with PAD/BOS/EOS sentinels at fixed indices. Unknown
// tokens encode to the PAD index, which doubles as the reserved unknown
// id: PAD never carries content, is excluded from losses and attention,
// and the scene generator never emits it.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  static const std::string& pad_token();
  static const std::string& bos_token();
  static const std::string& eos_token();

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);  // full list incl. sentinels

  static Vocabulary from_corpus(const std::vector<std::string>& captions);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;

  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  int unknown_index() const { return kPad; }
  // Returns the token id, or unknown_index() for out-of-vocabulary tokens.
  int encode_token(const std::string& token) const;
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;  // skips sentinels

  void save(const std::filesystem::path& path) const;  // one token per line
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// A caption as vocabulary indices. `ids` holds BOS + content (+ EOS when
// the sequence terminated); `text` is the detokenized content.
struct TokenSequence {
  std::vector<int> ids;
  std::string text;

  bool complete() const;
  std::vector<int> content_ids() const;  // ids without sentinels
  std::size_t content_length() const;

  static TokenSequence from_text(const Vocabulary& vocab, const std::string& text,
                                 bool terminated = true);
  static TokenSequence from_content_ids(const Vocabulary& vocab, const std::vector<int>& content,
                                        bool terminated);

  bool operator==(const TokenSequence& other) const { return ids == other.ids; }
};

}  // namespace caplab
