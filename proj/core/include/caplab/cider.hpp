#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace caplab {

// CIDEr-D: consensus TF-IDF n-gram similarity (n = 1..4) with count
// clipping and a gaussian length penalty, averaged over references and
// n, scaled by 10. Document frequencies come from a reference corpus,
// one document per scene.
class CiderD {
 public:
  explicit CiderD(double sigma = 6.0) : sigma_(sigma) {}

  // reference_sets: per scene, the list of reference captions (token lists).
  void build_df(const std::vector<std::vector<std::vector<std::string>>>& reference_sets);

  bool ready() const { return n_documents_ > 0; }
  double score(const std::vector<std::string>& candidate,
               const std::vector<std::vector<std::string>>& references) const;

 private:
  struct TfIdf {
    std::array<std::unordered_map<std::string, double>, 4> weights;
    std::array<double, 4> norms{};
    double length = 0.0;
  };

  TfIdf to_vec(const std::vector<std::string>& tokens) const;

  static constexpr int kMaxN = 4;
  double sigma_;
  std::array<std::unordered_map<std::string, int>, 4> df_;
  long n_documents_ = 0;
  double log_ref_len_ = 0.0;
};

// N-gram as a single string key; tokens never contain spaces.
std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, int n);

}  // namespace caplab
