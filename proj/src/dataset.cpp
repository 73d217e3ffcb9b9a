#include "emenv/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace emenv {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& cell) {
  const std::string t = lower(trim(cell));
  return t.empty() || t == "na" || t == "nan";
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

}  // namespace

ObservedDataset::ObservedDataset(Mat x, Mat y, BoolMat x_observed, BoolMat y_observed,
                                 std::vector<std::string> predictor_names,
                                 std::vector<std::string> response_names)
    : x_(std::move(x)),
      y_(std::move(y)),
      x_observed_(std::move(x_observed)),
      y_observed_(std::move(y_observed)),
      predictor_names_(std::move(predictor_names)),
      response_names_(std::move(response_names)) {
  if (x_.rows() != y_.rows() || x_.rows() != x_observed_.rows() ||
      y_.rows() != y_observed_.rows() || x_.cols() != x_observed_.cols() ||
      y_.cols() != y_observed_.cols()) {
    raise(ErrorCode::ShapeMismatch, "dataset blocks disagree in shape");
  }
  if (x_.cols() < 1 || y_.cols() < 1 || x_.rows() < 1) {
    raise(ErrorCode::InvalidArgument, "dataset requires n >= 1, p >= 1, r >= 1");
  }
  if (predictor_names_.empty()) {
    for (int j = 0; j < p(); ++j) predictor_names_.push_back("x" + std::to_string(j + 1));
  }
  if (response_names_.empty()) {
    for (int k = 0; k < r(); ++k) response_names_.push_back("y" + std::to_string(k + 1));
  }

  for (int i = 0; i < n(); ++i) {
    bool any = false;
    for (int j = 0; j < p(); ++j) {
      if (x_observed_(i, j)) {
        any = true;
        if (!std::isfinite(x_(i, j))) {
          raise(ErrorCode::InvalidArgument, "observed predictor cell is not finite");
        }
      } else {
        x_(i, j) = 0.0;  // canonical fill for masked cells
      }
    }
    for (int k = 0; k < r(); ++k) {
      if (y_observed_(i, k)) {
        any = true;
        if (!std::isfinite(y_(i, k))) {
          raise(ErrorCode::InvalidArgument, "observed response cell is not finite");
        }
      } else {
        y_(i, k) = 0.0;
      }
    }
    if (!any) {
      raise(ErrorCode::AllMissingRow, "row " + std::to_string(i + 1) + " is entirely missing");
    }
  }
  for (int j = 0; j < p(); ++j) {
    if (!x_observed_.col(j).any()) {
      raise(ErrorCode::AllMissingColumn, "predictor column " + predictor_names_[j] +
                                             " has missing rate 100%");
    }
  }
  for (int k = 0; k < r(); ++k) {
    if (!y_observed_.col(k).any()) {
      raise(ErrorCode::AllMissingColumn, "response column " + response_names_[k] +
                                             " has missing rate 100%");
    }
  }
}

bool ObservedDataset::row_complete(int row) const {
  for (int j = 0; j < p(); ++j) {
    if (!x_observed_(row, j)) return false;
  }
  for (int k = 0; k < r(); ++k) {
    if (!y_observed_(row, k)) return false;
  }
  return true;
}

int ObservedDataset::complete_row_count() const {
  int count = 0;
  for (int i = 0; i < n(); ++i) count += row_complete(i) ? 1 : 0;
  return count;
}

ObservedDataset ObservedDataset::select_rows(const std::vector<int>& rows) const {
  const int m = static_cast<int>(rows.size());
  Mat x(m, p()), y(m, r());
  BoolMat xo(m, p()), yo(m, r());
  for (int i = 0; i < m; ++i) {
    x.row(i) = x_.row(rows[i]);
    y.row(i) = y_.row(rows[i]);
    xo.row(i) = x_observed_.row(rows[i]);
    yo.row(i) = y_observed_.row(rows[i]);
  }
  return ObservedDataset(std::move(x), std::move(y), std::move(xo), std::move(yo),
                         predictor_names_, response_names_);
}

MissPattern pattern_of(int row, const ObservedDataset& ds) {
  MissPattern out;
  const int m = ds.p() + ds.r();
  for (int c = 0; c < m; ++c) {
    if (ds.cell_observed(row, c)) {
      out.obs_idx.push_back(c);
    } else {
      out.mis_idx.push_back(c);
    }
  }
  return out;
}

PatternTable group_patterns(const ObservedDataset& ds) {
  PatternTable table;
  std::map<std::vector<bool>, int> index_of;
  const int m = ds.p() + ds.r();
  for (int i = 0; i < ds.n(); ++i) {
    std::vector<bool> mask(m);
    for (int c = 0; c < m; ++c) mask[c] = ds.cell_observed(i, c);
    auto it = index_of.find(mask);
    if (it == index_of.end()) {
      index_of.emplace(mask, static_cast<int>(table.groups.size()));
      PatternGroup group;
      group.pattern = pattern_of(i, ds);
      group.rows.push_back(i);
      table.groups.push_back(std::move(group));
    } else {
      table.groups[it->second].rows.push_back(i);
    }
  }
  return table;
}

ObservedDataset load_table(const std::string& path,
                           const std::vector<std::string>& predictor_cols,
                           const std::vector<std::string>& response_cols) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) raise(ErrorCode::IoError, "empty file " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  const char delim =
      std::count(header.begin(), header.end(), '\t') >
              std::count(header.begin(), header.end(), ',')
          ? '\t'
          : ',';

  const std::vector<std::string> names = split_line(header, delim);
  std::map<std::string, int> column_of;
  for (int j = 0; j < static_cast<int>(names.size()); ++j) {
    column_of[trim(names[j])] = j;
  }

  auto resolve = [&](const std::vector<std::string>& wanted) {
    std::vector<int> idx;
    for (const auto& name : wanted) {
      auto it = column_of.find(name);
      if (it == column_of.end()) {
        raise(ErrorCode::MissingColumn, "column " + name + " not found in " + path);
      }
      idx.push_back(it->second);
    }
    return idx;
  };
  const std::vector<int> x_cols = resolve(predictor_cols);
  const std::vector<int> y_cols = resolve(response_cols);

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line, delim));
  }
  const int n = static_cast<int>(rows.size());
  if (n == 0) raise(ErrorCode::IoError, "no data rows in " + path);

  const int p = static_cast<int>(x_cols.size());
  const int r = static_cast<int>(y_cols.size());
  Mat x = Mat::Zero(n, p), y = Mat::Zero(n, r);
  ObservedDataset::BoolMat xo(n, p), yo(n, r);

  auto parse_cell = [&](const std::vector<std::string>& fields, int col, int row_no,
                        double* value) {
    if (col >= static_cast<int>(fields.size())) return false;  // ragged tail = missing
    const std::string cell = trim(fields[col]);
    if (is_missing_token(cell)) return false;
    char* end = nullptr;
    *value = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0' || !std::isfinite(*value)) {
      raise(ErrorCode::NonNumericCell, "row " + std::to_string(row_no + 2) + ", column " +
                                           names[col] + ": '" + cell + "'");
    }
    return true;
  };

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      double v = 0.0;
      xo(i, j) = parse_cell(rows[i], x_cols[j], i, &v);
      if (xo(i, j)) x(i, j) = v;
    }
    for (int k = 0; k < r; ++k) {
      double v = 0.0;
      yo(i, k) = parse_cell(rows[i], y_cols[k], i, &v);
      if (yo(i, k)) y(i, k) = v;
    }
  }

  return ObservedDataset(std::move(x), std::move(y), std::move(xo), std::move(yo),
                         predictor_cols, response_cols);
}

void save_table(const ObservedDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);

  for (int j = 0; j < ds.p(); ++j) {
    if (j > 0) out << ',';
    out << ds.predictor_names()[j];
  }
  for (int k = 0; k < ds.r(); ++k) {
    out << ',' << ds.response_names()[k];
  }
  out << '\n';

  char buf[64];
  auto emit = [&](double v, bool observed) {
    if (!observed) {
      out << "NA";
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf;
    }
  };
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.p(); ++j) {
      if (j > 0) out << ',';
      emit(ds.x()(i, j), ds.x_observed()(i, j));
    }
    for (int k = 0; k < ds.r(); ++k) {
      out << ',';
      emit(ds.y()(i, k), ds.y_observed()(i, k));
    }
    out << '\n';
  }
}

}  // namespace emenv
