#pragma once

#include <string>
#include <vector>

#include "valign/eval.hpp"

namespace valign {

struct LabeledReport {
    std::string label;
    AlignmentReport report;
};

// Merged comparison table, one row per report. All reports must carry the
// same retrieval k set.
void write_comparison_csv(const std::string& path,
                          const std::vector<LabeledReport>& reports);

// Grouped bar chart, one group per metric and one bar per report, emitted as
// plain SVG primitives.
void write_comparison_svg(const std::string& path,
                          const std::vector<LabeledReport>& reports);

}  // namespace valign
