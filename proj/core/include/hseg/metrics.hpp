#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hseg/label_map.hpp"

namespace hseg {

/// Overlap 2|P∩G| / (|P|+|G|) of the pixels carrying `label`.
/// Both sets empty -> 1; exactly one empty -> 0.
double dice_score(const LabelMap& pred, const LabelMap& gt, int label);

/// Dice over the merged pathology class {GGO, CON} against everything else.
double binary_pathology_dice(const LabelMap& pred, const LabelMap& gt);

/// Integer pixel coordinate; x is the column, y the row.
struct Point {
  int x;
  int y;
  bool operator==(const Point&) const = default;
};

/// Boundary pixels of the region with the given label: region pixels with an
/// 8-neighbour outside the region (image border counts as outside).
/// `labels_as_pathology` merges GGO and CON into one region first.
std::vector<Point> boundary_points(const LabelMap& map, int label);
std::vector<Point> pathology_boundary_points(const LabelMap& map);

/// Modified Hausdorff Distance max(d(A,B), d(B,A)) with
/// d(A,B) = mean over a in A of min_b ||a-b||. Computed through an exact
/// integer squared Euclidean distance transform over the points' bounding
/// grid. Returns nullopt when either set is empty (distance undefined).
std::optional<double> mhd(std::span<const Point> a, std::span<const Point> b);

/// Micro-averaged F1 over the two pathology classes. Defined as 1 when
/// neither map contains pathology.
double pixel_f1(const LabelMap& pred, const LabelMap& gt);

struct PearsonResult {
  double r;
  double p_value;
};

/// Sample Pearson correlation with a two-sided p-value from the exact t
/// distribution (regularized incomplete beta). Needs n >= 3 and nonzero
/// variance in both inputs.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta function I_x(a, b); exposed for reuse by the
/// correlation p-value and its tests.
double regularized_incomplete_beta(double a, double b, double x);

// ---------------------------------------------------------------------------
// Slice-level evaluation report

struct SliceMetrics {
  std::string slice_id;
  double dice_ggo;
  double dice_con;
  double dice_binary;
  std::optional<double> mhd_ggo;
  std::optional<double> mhd_con;
  std::optional<double> mhd_binary;
  double f1;
};

struct AggregateStat {
  double mean = 0.0;
  double stddev = 0.0;
  int excluded = 0;  // slices without a defined value
};

struct MetricReport {
  std::vector<SliceMetrics> slices;

  AggregateStat dice_ggo, dice_con, dice_binary, f1;
  AggregateStat mhd_ggo, mhd_con, mhd_binary;

  /// Recomputes the aggregate rows from `slices`.
  void aggregate();
};

SliceMetrics evaluate_slice(const std::string& slice_id, const LabelMap& pred, const LabelMap& gt);

/// CSV with fixed column order: slice_id, dice_ggo, dice_con, dice_binary,
/// mhd_ggo, mhd_con, mhd_binary, pixel_f1. One row per slice plus a final
/// aggregate row; undefined distances print as nan.
void write_metric_report_csv(std::ostream& out, const MetricReport& report);

}  // namespace hseg
