#include "panelposi/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace panelposi {

Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<Index>(it - header.begin());
}

namespace {

std::string location(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

bool needs_quotes(const std::string& f) {
  return f.find_first_of(",\"\r\n") != std::string::npos ||
         (!f.empty() && (f.front() == ' ' || f.back() == ' '));
}

void write_row(std::ostream& out, const std::vector<std::string>& row) {
  if (row.size() == 1 && row[0].empty()) {
    out << "\"\"\n";  // keep a lone empty field distinct from a blank line
    return;
  }
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out << ',';
    const std::string& f = row[i];
    if (!needs_quotes(f)) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

}  // namespace

CsvTable read_csv(std::istream& in, const std::string& source) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_quoted = false, row_has_content = false;
  std::size_t line = 1, row_line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_row = [&] {
    if (row_has_content || !row.empty()) {
      end_field();
      records.push_back(std::move(row));
      record_lines.push_back(row_line);
    }
    row.clear();
    field.clear();
    field_quoted = false;
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted) {
          throw ParseError(location(source, line) + ": unexpected quote inside a field");
        }
        in_quotes = true;
        field_quoted = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        if (field_quoted) {
          throw ParseError(location(source, line) + ": text after closing quote");
        }
        field += c;
        row_has_content = true;
    }
  }
  if (in_quotes) throw ParseError(location(source, line) + ": unterminated quoted field");
  end_row();

  CsvTable table;
  if (records.empty()) throw ParseError(source + ": empty file (a header row is required)");
  table.header = std::move(records[0]);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      std::ostringstream msg;
      msg << location(source, record_lines[r]) << ": expected " << table.header.size()
          << " fields, found " << records[r].size();
      throw ParseError(msg.str());
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  write_row(out, table.header);
  for (const auto& r : table.rows) write_row(out, r);
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_csv(out, table);
  if (!out) throw ParseError("write to '" + path + "' failed");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& raw, const std::string& where) {
  std::size_t b = raw.find_first_not_of(" \t");
  std::size_t e = raw.find_last_not_of(" \t");
  if (b == std::string::npos) throw ParseError(where + ": empty numeric field");
  std::string text = raw.substr(b, e - b + 1);
  if (!text.empty() && text[0] == '+') text.erase(0, 1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc::result_out_of_range) {
    // Subnormal underflow or overflow: fall back to strtod's rounding.
    v = std::strtod(text.c_str(), nullptr);
  } else if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(where + ": cannot parse '" + raw + "' as a number");
  }
  return v;
}

std::vector<Index> PanelData::rows_of(Index unit) const {
  std::vector<Index> rows;
  for (Index t = 0; t < observed.rows(); ++t)
    if (observed(t, unit)) rows.push_back(t);
  return rows;
}

namespace {

std::string cell_name(const std::string& source, std::size_t row, std::size_t col,
                      const std::string& column) {
  std::ostringstream msg;
  msg << source << " row " << row + 2 << ", column " << col + 1 << " (" << column << ")";
  return msg.str();
}

bool is_blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

}  // namespace

PanelData panel_from_tables(const CsvTable& y, const CsvTable& x) {
  if (y.rows.size() != x.rows.size()) {
    std::ostringstream msg;
    msg << "Y has " << y.rows.size() << " rows but X has " << x.rows.size();
    throw ShapeMismatch(msg.str());
  }
  if (y.header.empty() || x.header.empty()) throw ShapeMismatch("Y and X need at least one column");
  const Index T = static_cast<Index>(y.rows.size());
  const Index N = static_cast<Index>(y.header.size());
  const Index J = static_cast<Index>(x.header.size());
  PanelData p;
  p.unit_names = y.header;
  p.covariate_names = x.header;
  p.X.resize(T, J);
  p.Y.setZero(T, N);
  p.observed.setConstant(T, N, false);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < J; ++j) {
      const std::string where = cell_name("X", t, j, x.header[j]);
      if (is_blank(x.rows[t][j])) throw ParseError(where + ": covariates cannot be missing");
      p.X(t, j) = parse_double(x.rows[t][j], where);
      if (!std::isfinite(p.X(t, j))) throw ParseError(where + ": value is not finite");
    }
    for (Index n = 0; n < N; ++n) {
      if (is_blank(y.rows[t][n])) continue;
      const std::string where = cell_name("Y", t, n, y.header[n]);
      p.Y(t, n) = parse_double(y.rows[t][n], where);
      if (!std::isfinite(p.Y(t, n))) throw ParseError(where + ": value is not finite");
      p.observed(t, n) = true;
    }
  }
  return p;
}

PanelData load_panel(const std::string& y_path, const std::string& x_path) {
  return panel_from_tables(read_csv_file(y_path), read_csv_file(x_path));
}

void panel_to_tables(const PanelData& panel, CsvTable& y, CsvTable& x) {
  y = CsvTable{panel.unit_names, {}};
  x = CsvTable{panel.covariate_names, {}};
  for (Index t = 0; t < panel.n_periods(); ++t) {
    std::vector<std::string> yr, xr;
    for (Index n = 0; n < panel.n_units(); ++n)
      yr.push_back(panel.observed(t, n) ? format_double(panel.Y(t, n)) : std::string());
    for (Index j = 0; j < panel.n_covariates(); ++j) xr.push_back(format_double(panel.X(t, j)));
    y.rows.push_back(std::move(yr));
    x.rows.push_back(std::move(xr));
  }
}

Vector load_weights(const std::string& path, const std::vector<std::string>& covariate_names) {
  const CsvTable t = read_csv_file(path);
  if (t.header.size() != 2) throw ParseError(path + ": expected two columns (covariate, weight)");
  std::unordered_map<std::string, Index> pos;
  for (std::size_t j = 0; j < covariate_names.size(); ++j) pos[covariate_names[j]] = static_cast<Index>(j);
  Vector w = Vector::Ones(static_cast<Index>(covariate_names.size()));
  std::vector<bool> seen(covariate_names.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path + " row " + std::to_string(r + 2);
    const auto it = pos.find(t.rows[r][0]);
    if (it == pos.end()) throw ParseError(where + ": unknown covariate '" + t.rows[r][0] + "'");
    if (seen[it->second]) throw DuplicateEntry(where + ": weight for '" + t.rows[r][0] + "' given twice");
    seen[it->second] = true;
    w(it->second) = parse_double(t.rows[r][1], where);
  }
  return w;
}

namespace {

bool is_integer_label(const std::string& s) {
  if (s.empty()) return false;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

// Stable index assignment for a column of labels.
std::vector<std::string> order_labels(const std::vector<std::string>& seen_order) {
  std::vector<std::string> labels = seen_order;
  if (std::all_of(labels.begin(), labels.end(), is_integer_label)) {
    std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  return labels;
}

}  // namespace

PValueInput read_pvalues(const CsvTable& table, Index n_units, Index n_covariates) {
  const Index cu = table.column("unit");
  const Index cc = table.column("covariate");
  const Index clog = table.column("log_p");
  const Index cp = table.column("p");
  if (cu < 0 || cc < 0 || (clog < 0 && cp < 0)) {
    throw ParseError("p-value file needs columns unit, covariate and log_p or p");
  }

  std::vector<std::string> units_seen, covs_seen;
  std::unordered_map<std::string, bool> unit_known, cov_known;
  for (const auto& r : table.rows) {
    if (!unit_known[r[cu]]) {
      unit_known[r[cu]] = true;
      units_seen.push_back(r[cu]);
    }
    if (!cov_known[r[cc]]) {
      cov_known[r[cc]] = true;
      covs_seen.push_back(r[cc]);
    }
  }
  PValueInput in;
  in.unit_names = order_labels(units_seen);
  in.covariate_names = order_labels(covs_seen);

  // Pad with integer labels continuing after the largest one seen.
  auto pad = [](std::vector<std::string>& names, Index target) {
    const bool numeric = std::all_of(names.begin(), names.end(), is_integer_label);
    long long next = 1;
    if (numeric && !names.empty()) next = std::stoll(names.back()) + 1;
    std::unordered_map<std::string, bool> used;
    for (const auto& s : names) used[s] = true;
    while (static_cast<Index>(names.size()) < target) {
      std::string label = std::to_string(next++);
      if (!used[label]) names.push_back(label);
    }
  };
  if (n_units > 0 && n_units < static_cast<Index>(in.unit_names.size())) {
    throw ShapeMismatch("more distinct units in the p-value file than --n-units");
  }
  if (n_covariates > 0 && n_covariates < static_cast<Index>(in.covariate_names.size())) {
    throw ShapeMismatch("more distinct covariates in the p-value file than --n-covariates");
  }
  pad(in.unit_names, n_units);
  pad(in.covariate_names, n_covariates);

  std::unordered_map<std::string, Index> upos, cpos;
  for (std::size_t i = 0; i < in.unit_names.size(); ++i) upos[in.unit_names[i]] = static_cast<Index>(i);
  for (std::size_t i = 0; i < in.covariate_names.size(); ++i) cpos[in.covariate_names[i]] = static_cast<Index>(i);

  in.P = PValueMatrix(static_cast<Index>(in.unit_names.size()), static_cast<Index>(in.covariate_names.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "p-value row " + std::to_string(r + 2);
    double lp;
    if (clog >= 0) {
      lp = parse_double(row[clog], where);
    } else {
      const double p = parse_double(row[cp], where);
      if (!(p >= 0.0 && p <= 1.0)) throw ParseError(where + ": p must lie in [0, 1]");
      lp = std::log(p);
    }
    if (std::isnan(lp) || lp > 0.0) throw ParseError(where + ": log p must be <= 0");
    in.P.add(upos[row[cu]], cpos[row[cc]], lp);
  }
  return in;
}

}  // namespace panelposi
