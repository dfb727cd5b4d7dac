#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace cogscreen::render {

// One report document plus the label it is shown under (its path relative to
// the reports directory, without the file name).
struct ReportInput {
  std::string label;
  nlohmann::json doc;
};

// Recursively collects evaluation reports (report.json) and quality reports
// (documents with "format": "cogscreen-quality"), sorted by path. Throws
// InvalidArgument when the directory holds none.
std::vector<ReportInput> load_reports(const std::filesystem::path& dir);

// File name -> content. Pure: the same inputs always give the same bytes.
// Evaluation reports must carry every standard curve kind; the missing
// series are listed in a MissingSeries error.
std::map<std::string, std::string> render_report(const std::vector<ReportInput>& reports);

void write_rendered(const std::map<std::string, std::string>& files, const std::filesystem::path& out_dir);

}  // namespace cogscreen::render
