#include "caplab/cider.hpp"

#include <cmath>
#include <set>

#include "caplab/util.hpp"

namespace caplab {

std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, int n) {
  std::string key = tokens[start];
  for (int k = 1; k < n; ++k) {
    key.push_back(' ');
    key += tokens[start + static_cast<std::size_t>(k)];
  }
  return key;
}

void CiderD::build_df(const std::vector<std::vector<std::vector<std::string>>>& reference_sets) {
  for (auto& m : df_) m.clear();
  n_documents_ = static_cast<long>(reference_sets.size());
  if (n_documents_ == 0) throw Error("cider: empty reference corpus");
  for (const auto& refs : reference_sets) {
    std::array<std::set<std::string>, 4> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= kMaxN; ++n) {
        if (static_cast<int>(ref.size()) < n) continue;
        for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= ref.size(); ++s) {
          seen[static_cast<std::size_t>(n - 1)].insert(ngram_key(ref, s, n));
        }
      }
    }
    for (int n = 0; n < kMaxN; ++n) {
      for (const auto& g : seen[static_cast<std::size_t>(n)]) df_[static_cast<std::size_t>(n)][g] += 1;
    }
  }
  // A single-document corpus would zero out every idf; the established
  // convention pins log_ref_len to 1 in that case.
  log_ref_len_ = n_documents_ == 1 ? 1.0 : std::log(static_cast<double>(n_documents_));
}

CiderD::TfIdf CiderD::to_vec(const std::vector<std::string>& tokens) const {
  TfIdf out;
  out.length = static_cast<double>(tokens.size());
  for (int n = 1; n <= kMaxN; ++n) {
    auto& w = out.weights[static_cast<std::size_t>(n - 1)];
    if (static_cast<int>(tokens.size()) >= n) {
      for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= tokens.size(); ++s) {
        w[ngram_key(tokens, s, n)] += 1.0;
      }
    }
    double sq = 0.0;
    const auto& df = df_[static_cast<std::size_t>(n - 1)];
    for (auto& [g, count] : w) {
      const auto it = df.find(g);
      const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
      const double idf = log_ref_len_ - std::log(std::max(1.0, d));
      count *= idf;
      sq += count * count;
    }
    out.norms[static_cast<std::size_t>(n - 1)] = std::sqrt(sq);
  }
  return out;
}

double CiderD::score(const std::vector<std::string>& candidate,
                     const std::vector<std::vector<std::string>>& references) const {
  if (!ready()) throw Error("cider: document frequencies not built");
  if (candidate.empty()) throw Error("cider: empty candidate");
  if (references.empty()) throw Error("cider: no references");

  const TfIdf hyp = to_vec(candidate);
  std::array<double, 4> acc{};
  for (const auto& ref : references) {
    const TfIdf rv = to_vec(ref);
    const double delta = hyp.length - rv.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
    for (int n = 0; n < kMaxN; ++n) {
      const auto& hw = hyp.weights[static_cast<std::size_t>(n)];
      const auto& rw = rv.weights[static_cast<std::size_t>(n)];
      double dot = 0.0;
      for (const auto& [g, wh] : hw) {
        const auto it = rw.find(g);
        if (it == rw.end()) continue;
        dot += std::min(wh, it->second) * it->second;  // count clipping
      }
      const double denom = hyp.norms[static_cast<std::size_t>(n)] * rv.norms[static_cast<std::size_t>(n)];
      if (denom > 0.0) acc[static_cast<std::size_t>(n)] += penalty * dot / denom;
    }
  }
  double score = 0.0;
  for (int n = 0; n < kMaxN; ++n) {
    score += acc[static_cast<std::size_t>(n)] / static_cast<double>(references.size());
  }
  return 10.0 * score / static_cast<double>(kMaxN);
}

}  // namespace caplab
