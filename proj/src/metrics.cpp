// SPDX-License-Identifier: Apache-2.0
#include "vqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vqa/errors.hpp"

namespace vqa::metrics {

namespace {

void require_pair(const char* what, std::span<const double> x,
                  std::span<const double> y, std::size_t min_n) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(what) + ": length mismatch " +
                         std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < min_n) {
    throw NumericError(std::string(what) + ": needs at least " + std::to_string(min_n) +
                       " samples");
  }
}

bool has_spread(std::span<const double> x) {
  return std::any_of(x.begin(), x.end(), [&](double v) { return v != x.front(); });
}

// Merge sort counting swaps; sorts v in place.
std::uint64_t count_inversions(std::vector<double>& v) {
  std::uint64_t swaps = 0;
  std::vector<double> buf(v.size());
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, v.size());
      const std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += mid - i;
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    std::swap(v, buf);
  }
  return swaps;
}

// Sum over tie groups of n_g (n_g - 1) / 2 in a sorted sequence.
template <class Equal>
std::uint64_t tied_pairs(std::size_t n, Equal eq) {
  std::uint64_t total = 0;
  std::uint64_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && eq(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  require_pair("plcc", x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0) || !has_spread(x) || !has_spread(y)) throw NumericError("plcc: correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srocc(std::span<const double> x, std::span<const double> y) {
  require_pair("srocc", x, y, 2);
  if (!has_spread(x) || !has_spread(y)) {
    throw NumericError("srocc: correlation undefined for a constant vector");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return plcc(rx, ry);
}

double krocc(std::span<const double> x, std::span<const double> y) {
  require_pair("krocc", x, y, 2);
  if (!has_spread(x) || !has_spread(y)) {
    throw NumericError("krocc: correlation undefined for a constant vector");
  }
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const std::uint64_t ties_x =
      tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
  const std::uint64_t ties_xy = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
  });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  // Pairs tied in x are already sorted by y, so they add no inversions.
  const std::uint64_t discordant = count_inversions(ys);
  const std::uint64_t ties_y =
      tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  // concordant - discordant = total - ties_x - ties_y + ties_xy - 2 * discordant
  const double numer = static_cast<double>(total) - static_cast<double>(ties_x) -
                       static_cast<double>(ties_y) + static_cast<double>(ties_xy) -
                       2.0 * static_cast<double>(discordant);
  const double denom = std::sqrt(static_cast<double>(total - ties_x) *
                                 static_cast<double>(total - ties_y));
  return std::clamp(numer / denom, -1.0, 1.0);
}

double rmse(std::span<const double> x, std::span<const double> y) {
  require_pair("rmse", x, y, 1);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double logistic4(double x, const std::array<double, 4>& b) {
  const double z = -(x - b[2]) / std::abs(b[3]);
  return (b[0] - b[1]) / (1.0 + std::exp(z)) + b[1];
}

LogisticFit fit_4pl(std::span<const double> pred, std::span<const double> mos) {
  require_pair("fit_4pl", pred, mos, 5);
  if (!has_spread(pred)) throw NumericError("fit_4pl: predictions have no spread");
  const std::size_t n = pred.size();
  const double dn = static_cast<double>(n);
  const double mean_p = std::accumulate(pred.begin(), pred.end(), 0.0) / dn;
  double var_p = 0.0;
  for (double v : pred) var_p += (v - mean_p) * (v - mean_p);
  const double std_p = std::sqrt(var_p / dn);

  std::array<double, 4> beta{*std::max_element(mos.begin(), mos.end()),
                             *std::min_element(mos.begin(), mos.end()), mean_p, std_p};
  if (has_spread(mos) && plcc(pred, mos) < 0) std::swap(beta[0], beta[1]);

  auto loss_of = [&](const std::array<double, 4>& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = logistic4(pred[i], b) - mos[i];
      ss += r * r;
    }
    return ss;
  };

  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-10;
  LogisticFit fit;
  double loss = loss_of(beta);
  double damping = 1e-3;
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    fit.iterations = iter;
    // Normal equations J^T J d = -J^T r.
    double jtj[4][4] = {};
    double jtr[4] = {};
    const double s4 = std::abs(beta[3]);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (pred[i] - beta[2]) / s4;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double dsig = sig * (1.0 - sig);
      const double amp = beta[0] - beta[1];
      const double sign4 = beta[3] >= 0 ? 1.0 : -1.0;
      const double jac[4] = {sig, 1.0 - sig, -amp * dsig / s4,
                             -amp * dsig * z / s4 * sign4};
      const double r = amp * sig + beta[1] - mos[i];
      for (int a = 0; a < 4; ++a) {
        jtr[a] += jac[a] * r;
        for (int b = 0; b < 4; ++b) jtj[a][b] += jac[a] * jac[b];
      }
    }

    bool improved = false;
    double new_loss = loss;
    std::array<double, 4> candidate = beta;
    for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
      // Levenberg damping on the diagonal, solved by Gaussian elimination.
      double m[4][5];
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) m[a][b] = jtj[a][b];
        m[a][a] += damping * (jtj[a][a] > 0 ? jtj[a][a] : 1.0);
        m[a][4] = -jtr[a];
      }
      bool singular = false;
      for (int col = 0; col < 4 && !singular; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 4; ++r)
          if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        if (std::abs(m[pivot][col]) < 1e-300) {
          singular = true;
          break;
        }
        std::swap(m[col], m[pivot]);
        for (int r = 0; r < 4; ++r) {
          if (r == col) continue;
          const double f = m[r][col] / m[col][col];
          for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
        }
      }
      if (!singular) {
        for (int a = 0; a < 4; ++a) candidate[a] = beta[a] + m[a][4] / m[a][a];
        if (std::abs(candidate[3]) > 0) new_loss = loss_of(candidate);
        improved = std::isfinite(new_loss) && new_loss <= loss && std::abs(candidate[3]) > 0;
      }
      if (!improved) damping *= 10.0;
    }
    if (!improved) {
      fit.converged = true;  // no descent direction left
      break;
    }
    const double rel_change = (loss - new_loss) / std::max(loss, std::numeric_limits<double>::min());
    beta = candidate;
    loss = new_loss;
    damping = std::max(damping / 10.0, 1e-12);
    if (rel_change < kTolerance || loss == 0.0) {
      fit.converged = true;
      break;
    }
  }
  fit.beta = beta;
  fit.mapped.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.mapped[i] = logistic4(pred[i], beta);
  return fit;
}

double weighted_overall(std::span<const std::pair<double, std::size_t>> per_dataset) {
  if (per_dataset.empty()) throw ValidationError("weighted_overall of nothing");
  double num = 0.0, den = 0.0;
  for (const auto& [metric, n] : per_dataset) {
    num += metric * static_cast<double>(n);
    den += static_cast<double>(n);
  }
  if (!(den > 0)) throw ValidationError("weighted_overall: zero total weight");
  return num / den;
}

// Continued fraction for the incomplete beta (modified Lentz).
static double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double dm = static_cast<double>(m);
    double num = dm * (b - dm) * x / ((a + 2 * dm - 1) * (a + 2 * dm));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + dm) * (a + b + dm) * x / ((a + 2 * dm) * (a + 2 * dm + 1));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  require_pair("paired_t_test", a, b, 2);
  const std::size_t r = a.size();
  std::vector<double> d(r);
  for (std::size_t i = 0; i < r; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(r);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(r - 1));
  if (!(sd > 0)) throw NumericError("paired_t_test: differences have zero variance");
  TTestResult res;
  res.dof = r - 1;
  res.t = mean / (sd / std::sqrt(static_cast<double>(r)));
  const double dof = static_cast<double>(res.dof);
  res.p = incomplete_beta(dof / 2.0, 0.5, dof / (dof + res.t * res.t));
  return res;
}

}  // namespace vqa::metrics
