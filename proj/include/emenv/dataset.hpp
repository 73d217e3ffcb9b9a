#pragma once

#include <string>
#include <vector>

#include "emenv/matrix_kernels.hpp"

namespace emenv {

// Per-row split of the concatenated (x, y) coordinate list (predictors
// first) into observed and missing index vectors.
struct MissPattern {
  std::vector<int> obs_idx;
  std::vector<int> mis_idx;
};

// n rows of p predictors and r responses with per-cell observed flags.
// Invariants enforced on construction: observed cells finite, no column
// fully missing, no row fully missing.
class ObservedDataset {
 public:
  using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

  ObservedDataset(Mat x, Mat y, BoolMat x_observed, BoolMat y_observed,
                  std::vector<std::string> predictor_names = {},
                  std::vector<std::string> response_names = {});

  int n() const { return static_cast<int>(x_.rows()); }
  int p() const { return static_cast<int>(x_.cols()); }
  int r() const { return static_cast<int>(y_.cols()); }

  const Mat& x() const { return x_; }
  const Mat& y() const { return y_; }
  const BoolMat& x_observed() const { return x_observed_; }
  const BoolMat& y_observed() const { return y_observed_; }
  const std::vector<std::string>& predictor_names() const { return predictor_names_; }
  const std::vector<std::string>& response_names() const { return response_names_; }

  bool cell_observed(int row, int coord) const {
    return coord < p() ? x_observed_(row, coord) : y_observed_(row, coord - p());
  }
  double cell_value(int row, int coord) const {
    return coord < p() ? x_(row, coord) : y_(row, coord - p());
  }

  bool row_complete(int row) const;
  int complete_row_count() const;

  // Datasets restricted to a row subset (complete-case fits, bootstrap).
  ObservedDataset select_rows(const std::vector<int>& rows) const;

 private:
  Mat x_;
  Mat y_;
  BoolMat x_observed_;
  BoolMat y_observed_;
  std::vector<std::string> predictor_names_;
  std::vector<std::string> response_names_;
};

MissPattern pattern_of(int row, const ObservedDataset& ds);

// Rows grouped by identical missingness mask, ordered by first occurrence.
struct PatternGroup {
  MissPattern pattern;
  std::vector<int> rows;
};

struct PatternTable {
  std::vector<PatternGroup> groups;
};

PatternTable group_patterns(const ObservedDataset& ds);

// Delimited-text ingestion.  Header row mandatory; comma or tab delimiter
// auto-detected from the header; missing cells are empty fields, "NA" or
// "nan" (case-insensitive).
ObservedDataset load_table(const std::string& path,
                           const std::vector<std::string>& predictor_cols,
                           const std::vector<std::string>& response_cols);

// Writes the same format; missing printed as NA, values with 17 significant
// digits so that save-then-load is value-stable.
void save_table(const ObservedDataset& ds, const std::string& path);

}  // namespace emenv
