#include "hseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "hseg/errors.hpp"

namespace hseg {

namespace {

void check_same_size(const LabelMap& a, const LabelMap& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
  }
}

double dice_from_counts(std::int64_t inter, std::int64_t na, std::int64_t nb) {
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace

double dice_score(const LabelMap& pred, const LabelMap& gt, int label) {
  check_same_size(pred, gt, "dice_score");
  std::int64_t inter = 0, np = 0, ng = 0;
  auto pv = pred.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool p = pv[i] == label;
    const bool g = gv[i] == label;
    np += p;
    ng += g;
    inter += p && g;
  }
  return dice_from_counts(inter, np, ng);
}

double binary_pathology_dice(const LabelMap& pred, const LabelMap& gt) {
  check_same_size(pred, gt, "binary_pathology_dice");
  std::int64_t inter = 0, np = 0, ng = 0;
  auto pv = pred.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool p = pv[i] == kGgo || pv[i] == kCon;
    const bool g = gv[i] == kGgo || gv[i] == kCon;
    np += p;
    ng += g;
    inter += p && g;
  }
  return dice_from_counts(inter, np, ng);
}

namespace {

template <typename InRegion>
std::vector<Point> extract_boundary(const LabelMap& map, InRegion in_region) {
  std::vector<Point> points;
  const int H = map.height(), W = map.width();
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!in_region(map.at(r, c))) continue;
      bool boundary = false;
      for (int dr = -1; dr <= 1 && !boundary; ++dr) {
        for (int dc = -1; dc <= 1 && !boundary; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= H || nc < 0 || nc >= W || !in_region(map.at(nr, nc))) {
            boundary = true;
          }
        }
      }
      if (boundary) points.push_back({c, r});
    }
  }
  return points;
}

// Exact 1-d squared-distance lower envelope (Felzenszwalb-Huttenlocher).
void edt_1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * q - 2.0 * p);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    d[q] = static_cast<double>(q - p) * (q - p) + f[p];
  }
}

// Squared Euclidean distance transform of `occupied` on an H x W grid.
std::vector<double> edt_2d(const std::vector<char>& occupied, int H, int W) {
  constexpr double kInf = 1e18;  // larger than any squared grid distance
  std::vector<double> dist(static_cast<std::size_t>(H) * W);
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = occupied[i] ? 0.0 : kInf;

  std::vector<double> f(static_cast<std::size_t>(std::max(H, W)));
  std::vector<double> d(f.size());
  std::vector<int> v(f.size());
  std::vector<double> z(f.size() + 1);

  for (int c = 0; c < W; ++c) {  // columns first
    for (int r = 0; r < H; ++r) f[static_cast<std::size_t>(r)] = dist[static_cast<std::size_t>(r) * W + c];
    edt_1d(f.data(), H, d.data(), v.data(), z.data());
    for (int r = 0; r < H; ++r) dist[static_cast<std::size_t>(r) * W + c] = d[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < H; ++r) {
    edt_1d(dist.data() + static_cast<std::size_t>(r) * W, W, d.data(), v.data(), z.data());
    for (int c = 0; c < W; ++c) dist[static_cast<std::size_t>(r) * W + c] = d[static_cast<std::size_t>(c)];
  }
  return dist;
}

// Directed mean nearest-neighbour distance d(A,B) via the distance transform
// of B over the union bounding box.
double directed_mean_distance(std::span<const Point> a, std::span<const Point> b) {
  int min_x = a[0].x, max_x = a[0].x, min_y = a[0].y, max_y = a[0].y;
  for (const Point& p : a) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  for (const Point& p : b) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int W = max_x - min_x + 1;
  const int H = max_y - min_y + 1;
  std::vector<char> occupied(static_cast<std::size_t>(H) * W, 0);
  for (const Point& p : b) {
    occupied[static_cast<std::size_t>(p.y - min_y) * W + (p.x - min_x)] = 1;
  }
  const std::vector<double> dist = edt_2d(occupied, H, W);
  double sum = 0.0;
  for (const Point& p : a) {
    sum += std::sqrt(dist[static_cast<std::size_t>(p.y - min_y) * W + (p.x - min_x)]);
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace

std::vector<Point> boundary_points(const LabelMap& map, int label) {
  return extract_boundary(map, [label](std::uint8_t v) { return v == label; });
}

std::vector<Point> pathology_boundary_points(const LabelMap& map) {
  return extract_boundary(map, [](std::uint8_t v) { return v == kGgo || v == kCon; });
}

std::optional<double> mhd(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) return std::nullopt;
  return std::max(directed_mean_distance(a, b), directed_mean_distance(b, a));
}

double pixel_f1(const LabelMap& pred, const LabelMap& gt) {
  check_same_size(pred, gt, "pixel_f1");
  std::int64_t tp = 0, fp = 0, fn = 0;
  auto pv = pred.values();
  auto gv = gt.values();
  for (int label : {kGgo, kCon}) {
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const bool p = pv[i] == label;
      const bool g = gv[i] == label;
      tp += p && g;
      fp += p && !g;
      fn += g && !p;
    }
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw UsageError("incomplete beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  // Continued fraction (modified Lentz); symmetry keeps it convergent.
  const double ln_beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(ln_beta + a * std::log(x) + b * std::log1p(-x));
  const bool swap = x > (a + 1.0) / (a + b + 2.0);
  const double aa = swap ? b : a;
  const double bb = swap ? a : b;
  const double xx = swap ? 1.0 - x : x;

  constexpr double kTiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (aa + bb) * xx / (aa + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double result = d;
  for (int m = 1; m <= 500; ++m) {
    const double dm = static_cast<double>(m);
    double num = dm * (bb - dm) * xx / ((aa + 2.0 * dm - 1.0) * (aa + 2.0 * dm));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    result *= d * c;
    num = -(aa + dm) * (aa + bb + dm) * xx / ((aa + 2.0 * dm) * (aa + 2.0 * dm + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    result *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  const double value = front * result / aa;
  return swap ? 1.0 - value : value;
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  }
  const std::size_t n = x.size();
  if (n < 3) throw UsageError("pearson: need at least 3 samples, got " + std::to_string(n));

  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += x[i];
    mean_y += y[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedValueError("pearson: zero variance input");
  }
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);

  const double df = static_cast<double>(n - 2);
  double p;
  if (std::fabs(r) == 1.0) {
    p = 0.0;
  } else {
    const double t2 = r * r * df / (1.0 - r * r);
    // Two-sided p from the t distribution: P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2).
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2));
  }
  return {r, p};
}

void MetricReport::aggregate() {
  auto stat_of = [](std::span<const double> values, int excluded) {
    AggregateStat s;
    s.excluded = excluded;
    if (values.empty()) return s;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    s.mean = mean;
    s.stddev = std::sqrt(var);
    return s;
  };

  std::vector<double> v;
  auto collect_dice = [&](auto member) {
    v.clear();
    for (const SliceMetrics& s : slices) v.push_back(s.*member);
    return stat_of(v, 0);
  };
  dice_ggo = collect_dice(&SliceMetrics::dice_ggo);
  dice_con = collect_dice(&SliceMetrics::dice_con);
  dice_binary = collect_dice(&SliceMetrics::dice_binary);
  f1 = collect_dice(&SliceMetrics::f1);

  auto collect_mhd = [&](auto member) {
    v.clear();
    int excluded = 0;
    for (const SliceMetrics& s : slices) {
      if (s.*member) {
        v.push_back(*(s.*member));
      } else {
        ++excluded;
      }
    }
    return stat_of(v, excluded);
  };
  mhd_ggo = collect_mhd(&SliceMetrics::mhd_ggo);
  mhd_con = collect_mhd(&SliceMetrics::mhd_con);
  mhd_binary = collect_mhd(&SliceMetrics::mhd_binary);
}

SliceMetrics evaluate_slice(const std::string& slice_id, const LabelMap& pred, const LabelMap& gt) {
  SliceMetrics m;
  m.slice_id = slice_id;
  m.dice_ggo = dice_score(pred, gt, kGgo);
  m.dice_con = dice_score(pred, gt, kCon);
  m.dice_binary = binary_pathology_dice(pred, gt);
  auto run_mhd = [&](std::vector<Point> a, std::vector<Point> b) { return mhd(a, b); };
  m.mhd_ggo = run_mhd(boundary_points(pred, kGgo), boundary_points(gt, kGgo));
  m.mhd_con = run_mhd(boundary_points(pred, kCon), boundary_points(gt, kCon));
  m.mhd_binary = run_mhd(pathology_boundary_points(pred), pathology_boundary_points(gt));
  m.f1 = pixel_f1(pred, gt);
  return m;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v ? *v : std::numeric_limits<double>::quiet_NaN());
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_metric_report_csv(std::ostream& out, const MetricReport& report) {
  out << "slice_id,dice_ggo,dice_con,dice_binary,mhd_ggo,mhd_con,mhd_binary,pixel_f1\n";
  for (const SliceMetrics& s : report.slices) {
    out << s.slice_id << ',' << fmt(s.dice_ggo) << ',' << fmt(s.dice_con) << ','
        << fmt(s.dice_binary) << ',' << fmt_opt(s.mhd_ggo) << ',' << fmt_opt(s.mhd_con) << ','
        << fmt_opt(s.mhd_binary) << ',' << fmt(s.f1) << '\n';
  }
  out << "aggregate," << fmt(report.dice_ggo.mean) << ',' << fmt(report.dice_con.mean) << ','
      << fmt(report.dice_binary.mean) << ',' << fmt(report.mhd_ggo.mean) << ','
      << fmt(report.mhd_con.mean) << ',' << fmt(report.mhd_binary.mean) << ','
      << fmt(report.f1.mean) << '\n';
}

}  // namespace hseg
