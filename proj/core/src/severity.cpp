#include "hseg/severity.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "hseg/errors.hpp"

namespace hseg {

ClassCounts class_counts(std::span<const LabelMap> volume) {
  if (volume.empty()) throw UsageError("class_counts: empty volume");
  ClassCounts out;
  for (const LabelMap& slice : volume) {
    for (std::uint8_t v : slice.values()) ++out.counts[v];
  }
  return out;
}

double extent_ratio(const ClassCounts& counts) {
  const std::int64_t cavity = counts.lung_cavity();
  if (cavity == 0) throw UndefinedValueError("extent ratio undefined: empty lung cavity");
  return static_cast<double>(counts.infection()) / static_cast<double>(cavity);
}

double gravity_ratio(const ClassCounts& counts) {
  const std::int64_t infection = counts.infection();
  if (infection == 0) throw UndefinedValueError("gravity ratio undefined: no infection voxels");
  return static_cast<double>(counts.con()) / static_cast<double>(infection);
}

namespace {

RatioStats stats_over(std::span<const double> values, int excluded, const char* what) {
  if (values.empty()) {
    throw UndefinedValueError(std::string(what) + " undefined for every ensemble member");
  }
  RatioStats s;
  s.excluded = excluded;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(values.size());  // population variance
  s.stddev = std::sqrt(var);
  return s;
}

}  // namespace

EnsembleRatioStats ensemble_ratio_stats(std::span<const std::vector<LabelMap>> member_volumes) {
  if (member_volumes.empty()) throw UsageError("ensemble_ratio_stats: no members");
  std::vector<double> extents, gravities;
  int extent_excluded = 0, gravity_excluded = 0;
  for (const std::vector<LabelMap>& volume : member_volumes) {
    const ClassCounts counts = class_counts(volume);
    if (counts.lung_cavity() == 0) {
      ++extent_excluded;
    } else {
      extents.push_back(extent_ratio(counts));
    }
    if (counts.infection() == 0) {
      ++gravity_excluded;
    } else {
      gravities.push_back(gravity_ratio(counts));
    }
  }
  EnsembleRatioStats out;
  out.extent = stats_over(extents, extent_excluded, "extent ratio");
  out.gravity = stats_over(gravities, gravity_excluded, "gravity ratio");
  return out;
}

void write_severity_csv(std::ostream& out, std::span<const SeverityRow> rows) {
  out << "volume_id,n_lung,n_ggo,n_con,extent,gravity,extent_std,gravity_std,excluded_members\n";
  char buf[256];
  for (const SeverityRow& r : rows) {
    const double gravity = r.gravity ? *r.gravity : std::numeric_limits<double>::quiet_NaN();
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%lld,%.9g,%.9g,%.9g,%.9g,%d\n",
                  r.volume_id.c_str(), static_cast<long long>(r.n_lung),
                  static_cast<long long>(r.n_ggo), static_cast<long long>(r.n_con), r.extent,
                  gravity, r.extent_std, r.gravity_std, r.excluded_members);
    out << buf;
  }
}

}  // namespace hseg
