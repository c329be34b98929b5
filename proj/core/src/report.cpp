#include "caplab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "caplab/pipeline.hpp"
#include "caplab/util.hpp"

namespace caplab {

namespace {

int tag_rank(const std::string& tag) {
  const auto& order = Pipeline::canonical_tags();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == tag) return static_cast<int>(i);
  }
  return static_cast<int>(order.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

ReportTable make_report_table(std::vector<EvalReport> reports) {
  if (reports.empty()) throw Error("report: no reports to tabulate");

  std::set<int> versions;
  for (const auto& r : reports) versions.insert(r.schema_version);
  if (versions.size() > 1) {
    std::string list;
    for (int v : versions) list += (list.empty() ? "" : ", ") + std::to_string(v);
    throw Error("report: mixed schema versions across runs: " + list);
  }

  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    const int ra = tag_rank(a.tag), rb = tag_rank(b.tag);
    if (ra != rb) return ra < rb;
    if (a.tag != b.tag) return a.tag < b.tag;
    return a.split < b.split;
  });

  const auto& cols = report_metric_order();
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.tag, r.split};
    for (const auto& c : cols) {
      const auto it = r.metrics.find(c);
      row.push_back(it != r.metrics.end() && it->second ? fmt(*it->second) : "-");
    }
    cells.push_back(std::move(row));
  }

  std::vector<std::string> header = {"tag", "split"};
  header.insert(header.end(), cols.begin(), cols.end());
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }

  std::ostringstream text;
  const auto emit_row = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      text << (c ? "  " : "");
      text << row[c] << std::string(width[c] - row[c].size(), ' ');
    }
    text << "\n";
  };
  emit_row(header);
  {
    std::vector<std::string> rule;
    for (std::size_t c = 0; c < header.size(); ++c) rule.push_back(std::string(width[c], '-'));
    emit_row(rule);
  }
  for (const auto& row : cells) emit_row(row);

  std::ostringstream csv;
  for (std::size_t c = 0; c < header.size(); ++c) csv << (c ? "," : "") << header[c];
  csv << "\n";
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) csv << (c ? "," : "") << row[c];
    csv << "\n";
  }

  return {text.str(), csv.str()};
}

std::vector<EvalReport> collect_reports(const std::vector<std::filesystem::path>& run_dirs,
                                        const std::string& split) {
  if (run_dirs.empty()) throw Error("report: at least one run directory required");
  std::vector<EvalReport> reports;
  for (const auto& dir : run_dirs) {
    const auto reports_dir = dir / "reports";
    if (!std::filesystem::is_directory(reports_dir)) {
      throw Error("report: no reports directory in " + dir.string() +
                  "; run the evaluate stage first");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(reports_dir)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      EvalReport r = EvalReport::load(f);
      if (split.empty() || r.split == split) reports.push_back(std::move(r));
    }
  }
  if (reports.empty()) throw Error("report: no matching reports found");
  return reports;
}

}  // namespace caplab
