#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hseg/label_map.hpp"

namespace hseg {

/// Exact voxel counts per tissue class over one volume (stack of slices).
struct ClassCounts {
  std::array<std::int64_t, kNumClasses> counts{};

  std::int64_t non_lung() const { return counts[kNonLung]; }
  std::int64_t healthy() const { return counts[kHealthyLung]; }
  std::int64_t ggo() const { return counts[kGgo]; }
  std::int64_t con() const { return counts[kCon]; }
  std::int64_t lung_cavity() const { return healthy() + ggo() + con(); }
  std::int64_t infection() const { return ggo() + con(); }
  std::int64_t total() const { return non_lung() + lung_cavity(); }
};

ClassCounts class_counts(std::span<const LabelMap> volume);

/// Infection extent: (GGO + CON) / lung cavity. Undefined for an empty cavity.
double extent_ratio(const ClassCounts& counts);

/// Infection gravity: CON / (GGO + CON). Undefined without infection.
double gravity_ratio(const ClassCounts& counts);

struct RatioStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over defined members
  int excluded = 0;     // members whose ratio was undefined
};

struct EnsembleRatioStats {
  RatioStats extent;
  RatioStats gravity;
};

/// Mean and population standard deviation of both volume ratios across the
/// per-member label stacks. Members with an undefined ratio are excluded from
/// that ratio's statistics; if every member is undefined for a ratio, an
/// UndefinedValueError is raised.
EnsembleRatioStats ensemble_ratio_stats(std::span<const std::vector<LabelMap>> member_volumes);

struct SeverityRow {
  std::string volume_id;
  std::int64_t n_lung = 0;  // healthy-lung voxels (class 1)
  std::int64_t n_ggo = 0;
  std::int64_t n_con = 0;
  double extent = 0.0;
  std::optional<double> gravity;  // empty when undefined
  double extent_std = 0.0;
  double gravity_std = 0.0;
  int excluded_members = 0;
};

/// CSV with columns volume_id, n_lung, n_ggo, n_con, extent, gravity,
/// extent_std, gravity_std, excluded_members. Undefined gravity prints nan.
void write_severity_csv(std::ostream& out, std::span<const SeverityRow> rows);

}  // namespace hseg
