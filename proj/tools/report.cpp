#include <algorithm>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "choicealign/csv.hpp"
#include "choicealign/io.hpp"
#include "cli.hpp"
#include "svg.hpp"

namespace choicealign::cli {
namespace {

namespace fs = std::filesystem;

/// Cell lookup of a long-form table keyed by (row key, column key).
struct Pivot {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::string, std::string>, double> cells;

  void add(const std::string& r, const std::string& c, const std::string& text) {
    if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
    if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
    if (!text.empty()) cells[{r, c}] = csv::parse_double(text, "value");
  }

  std::vector<std::vector<std::optional<double>>> matrix() const {
    std::vector<std::vector<std::optional<double>>> out(rows.size(), std::vector<std::optional<double>>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (auto it = cells.find({rows[i], cols[j]}); it != cells.end()) out[i][j] = it->second;
      }
    }
    return out;
  }

  std::vector<std::vector<double>> dense() const {
    std::vector<std::vector<double>> out;
    for (const auto& r : matrix()) {
      auto& row = out.emplace_back();
      for (const auto& v : r) row.push_back(v.value_or(std::nan("")));
    }
    return out;
  }
};

std::optional<csv::Table> table(const fs::path& dir, const char* name) {
  const auto path = dir / name;
  if (!fs::exists(path)) return std::nullopt;
  return csv::read_file(path.string());
}

Pivot pivot(const csv::Table& t, std::string_view row_col, std::string_view col_col, std::string_view value_col,
            std::string_view row_col2 = {}) {
  const auto r = t.require_column(row_col);
  const auto c = t.require_column(col_col);
  const auto v = t.require_column(value_col);
  const auto r2 = row_col2.empty() ? std::nullopt : std::optional<std::size_t>(t.require_column(row_col2));
  Pivot p;
  for (const auto& row : t.rows()) p.add(r2 ? row[r] + " / " + row[*r2] : row[r], row[c], row[v]);
  return p;
}

}  // namespace

std::vector<std::string> render_report(const fs::path& in, OutputDir& out) {
  std::vector<std::string> written;
  std::ostringstream md;
  md << "# Report for " << in.string() << "\n\n";
  const auto emit = [&](const std::string& name, const std::string& svg, const std::string& caption) {
    out.write(name, svg);
    written.push_back(name);
    md << "- `" << name << "`: " << caption << "\n";
  };

  if (auto t = table(in, "coefficients.csv"); t && t->column("ci_low")) {
    const auto p = pivot(*t, "activity", "feature", "estimate");
    emit("coefficients.svg", svg::heatmap("Structural coefficients", p.rows, p.cols, p.matrix()),
         "structural estimates by activity and feature");
  }
  if (auto t = table(in, "deviations.csv")) {
    const auto p = pivot(*t, "model", "feature", "delta", "activity");
    emit("deviations.svg", svg::heatmap("Absolute deviation from human parameters", p.rows, p.cols, p.matrix()),
         "per-cell deviation of each model from the human fit");
  }
  if (auto t = table(in, "cosine.csv")) {
    const auto p = pivot(*t, "model", "activity", "cosine");
    emit("cosine.svg", svg::grouped_bars("Activity cosine similarity", p.rows, p.cols, p.dense()),
         "cosine similarity of each activity's parameter vector to the human one");
  }
  if (auto t = table(in, "divergence.csv")) {
    Pivot p;
    for (const auto& row : t->rows()) {
      for (std::size_t c = 1; c < t->header().size(); ++c) p.add(row[0], t->header()[c], row[c]);
    }
    emit("divergence.svg", svg::grouped_bars("Model-level divergence", p.rows, p.cols, p.dense()),
         "mean absolute deviation per model, overall and by activity");
  }
  if (auto t = table(in, "attribute_divergence.csv")) {
    const auto p = pivot(*t, "activity", "feature", "a_f");
    emit("attribute_divergence.svg", svg::heatmap("Attribute divergence across models", p.rows, p.cols, p.matrix()),
         "deviation per cell averaged across models");
  }
  if (auto t = table(in, "attribute_cosine.csv")) {
    const auto p = pivot(*t, "model", "feature", "cosine");
    emit("attribute_cosine.svg", svg::heatmap("Attribute cosine similarity", p.rows, p.cols, p.matrix()),
         "cosine of each feature's activity vector to the human one");
  }
  if (auto t = table(in, "drift.csv")) {
    for (const char* metric : {"mad", "rel_l2", "one_minus_cos"}) {
      const auto p = pivot(*t, "shift", "estimator", metric);
      emit(fmt::format("drift_{}.svg", metric),
           svg::grouped_bars(fmt::format("Parameter drift ({})", metric), p.rows, p.cols, p.dense()),
           fmt::format("{} between baseline and shifted estimates", metric));
    }
  }
  if (auto t = table(in, "rag_compare.csv")) {
    Pivot p;
    for (const auto& row : t->rows()) {
      p.add(row[0], "pre", row[t->require_column("pre_cosine")]);
      p.add(row[0], "post", row[t->require_column("post_cosine")]);
    }
    emit("rag_compare.svg", svg::grouped_bars("Attribute cosine before and after retrieval", p.rows, p.cols, p.dense()),
         "attribute cosine without and with retrieved findings");
  }
  if (!written.empty()) {
    out.write("summary.md", md.str());
    written.push_back("summary.md");
  }
  return written;
}

}  // namespace choicealign::cli
