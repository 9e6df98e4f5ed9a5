#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lwp::svg {

/// Lower-triangular heatmap: one rect + label per defined cell, rows are
/// "after task T", columns "task i". Numbers are printed with 6 decimals.
std::string accuracy_heatmap(const std::string& title, const std::vector<std::vector<double>>& rows);

/// One bar per (label, value); missing values are drawn as "n/a".
std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, std::optional<double>>>& bars);

/// Escapes &, <, >, " for XML text and attributes.
std::string xml_escape(const std::string& s);

}  // namespace lwp::svg
