#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "caplab/metrics.hpp"

namespace caplab {

struct ReportTable {
  std::string text;  // aligned plain-text comparison table
  std::string csv;
};

// Rows ordered by the canonical tag order (then alphabetically for
// unknown tags), columns by report_metric_order(). Mixed schema versions
// are refused, listing the versions found.
ReportTable make_report_table(std::vector<EvalReport> reports);

// Loads every report_*.json under <run_dir>/reports for the given split
// ("" loads all splits).
std::vector<EvalReport> collect_reports(const std::vector<std::filesystem::path>& run_dirs,
                                        const std::string& split);

}  // namespace caplab
