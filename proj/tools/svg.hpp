#pragma once

#include <optional>
#include <string>
#include <vector>

namespace choicealign::svg {

/// Diverging blue/white/red heatmap centred on `center`; missing cells are grey.
std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels,
                    const std::vector<std::vector<std::optional<double>>>& values, double center = 0.0);

/// One cluster per group, one bar per series.
std::string grouped_bars(const std::string& title, const std::vector<std::string>& groups,
                         const std::vector<std::string>& series, const std::vector<std::vector<double>>& values);

}  // namespace choicealign::svg
