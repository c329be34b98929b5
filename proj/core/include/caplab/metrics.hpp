#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caplab/captioner.hpp"
#include "caplab/cider.hpp"
#include "caplab/data.hpp"
#include "caplab/dual_encoder.hpp"

namespace caplab {

using Tokens = std::vector<std::string>;

// Sentence BLEU-4: geometric mean of clipped n-gram precisions times the
// brevity penalty, multi-reference max-clipping, no smoothing.
double bleu4(const Tokens& candidate, const std::vector<Tokens>& references);

// ROUGE-L F-measure (beta = 1.2), maximum over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

// Mean per-caption count of repeated n-grams: (total - distinct) per
// caption, averaged over the corpus. `stopwords` filters tokens first;
// the default empty set leaves the metric unfiltered.
double rep_n(const std::vector<Tokens>& captions, int n, const std::set<std::string>& stopwords = {});

struct RetrievalMetrics {
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  double mrr = 0.0;
};

// similarity: rows = captions, columns = images, true pair on the
// diagonal. Images ranked by similarity descending, ties broken by image
// id ascending. Values are percentages.
RetrievalMetrics retrieval_eval(const Mat& similarity);

// ---------------------------------------------------------------------------
// Checkpoint evaluation
// ---------------------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  std::string tag;        // checkpoint role, e.g. "xe" or "scst_disc"
  std::string split;
  std::string corpus_id;  // dataset content hash
  std::map<std::string, std::string> checkpoint_hashes;
  std::map<std::string, std::optional<double>> metrics;
  std::map<std::string, std::string> errors;  // per-metric failures

  std::string to_json_string() const;  // canonical key order, byte-stable
  static EvalReport from_json_string(const std::string& body);
  void save(const std::filesystem::path& path) const;
  static EvalReport load(const std::filesystem::path& path);
};

// Canonical metric column order shared by reports and tables.
const std::vector<std::string>& report_metric_order();

struct EvalScorers {
  const CiderD* cider = nullptr;              // required
  const DualEncoder* retrieval = nullptr;     // required (base encoder)
  const DualEncoder* discriminator = nullptr; // optional
  double reward_w = 2.5;
};

// Decodes one caption per scene (beam search, top hypothesis) and fills
// every metric; individual scorer failures are recorded in `errors` and
// leave a null metric rather than aborting the report.
EvalReport evaluate_checkpoint(const Captioner& captioner, const Dataset& dataset,
                               const std::vector<int>& scene_ids, const EvalScorers& scorers,
                               int beam_size, std::size_t threads = 1);

// Decode helper shared by evaluation and mining.
std::vector<TokenSequence> decode_split(const Captioner& captioner, const Dataset& dataset,
                                        const std::vector<int>& scene_ids, int beam_size,
                                        std::size_t threads);

}  // namespace caplab
