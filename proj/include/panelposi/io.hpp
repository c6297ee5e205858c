#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "panelposi/numerics.hpp"
#include "panelposi/panel_mt.hpp"

namespace panelposi {

/// RFC-4180 table: a header row followed by data rows of equal width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`, or -1.
  Index column(const std::string& name) const;
};

/// `source` names the input in ParseError messages.
CsvTable read_csv(std::istream& in, const std::string& source = "<stream>");
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);

/// Shortest decimal text that parses back to the same double; `inf`,
/// `-inf` and `nan` for non-finite values.
std::string format_double(double v);
/// Accepts what format_double emits plus ordinary decimal/exponent forms.
/// Throws ParseError naming `where`.
double parse_double(const std::string& text, const std::string& where);

struct PanelData {
  std::vector<std::string> unit_names;
  std::vector<std::string> covariate_names;
  Matrix X;  // T×J
  Matrix Y;  // T×N, 0 where unobserved
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // T×N

  Index n_periods() const { return X.rows(); }
  Index n_units() const { return Y.cols(); }
  Index n_covariates() const { return X.cols(); }
  /// Rows at which unit n is observed.
  std::vector<Index> rows_of(Index unit) const;
};

/// Y.csv: T rows × N unit columns, empty cells are missing. X.csv: T rows ×
/// J covariate columns, fully observed.
PanelData load_panel(const std::string& y_path, const std::string& x_path);
PanelData panel_from_tables(const CsvTable& y, const CsvTable& x);
/// Inverse of panel_from_tables (missing cells written empty).
void panel_to_tables(const PanelData& panel, CsvTable& y, CsvTable& x);

/// Two columns (covariate, weight); `inf` marks an unpenalized covariate.
/// Unlisted covariates get weight 1. Returns raw, unnormalized weights.
Vector load_weights(const std::string& path, const std::vector<std::string>& covariate_names);

struct PValueInput {
  std::vector<std::string> unit_names;
  std::vector<std::string> covariate_names;
  PValueMatrix P{0, 0};
};

/// Long-format p-values: columns `unit`, `covariate` and one of `log_p` or
/// `p`. Unit and covariate labels are ordered numerically when every label
/// is an integer, otherwise by first appearance. `n_units`/`n_covariates`
/// (when larger than the number of labels seen) pad the panel with
/// entry-free units/covariates.
PValueInput read_pvalues(const CsvTable& table, Index n_units = 0, Index n_covariates = 0);

}  // namespace panelposi
