#include "mgcot/entmax.hpp"

#include "mgcot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgcot {

namespace {

// sum_i (zs_i - tau)_+^power and its derivative magnitude
// sum_i power * (zs_i - tau)_+^(power-1).
void threshold_mass(std::span<const double> zs, double tau, double power, double& mass,
                    double& slope) {
  mass = 0.0;
  slope = 0.0;
  for (double v : zs) {
    const double u = v - tau;
    if (u <= 0.0) continue;
    const double up = std::pow(u, power - 1.0);
    mass += up * u;
    slope += power * up;
  }
}

}  // namespace

void entmax_forward(std::span<const double> z, double alpha, std::span<double> p,
                    const EntmaxOptions& opts) {
  const std::size_t n = z.size();
  if (n == 1) {
    p[0] = 1.0;
    return;
  }
  const double am1 = alpha - 1.0;
  const double power = 1.0 / am1;

  std::vector<double> zs(n);
  double zmax = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    zs[i] = am1 * z[i];
    zmax = std::max(zmax, zs[i]);
  }
  // mass(lo) >= 1 since the max entry alone contributes 1; mass(hi) <= 1.
  double lo = zmax - 1.0;
  double hi = zmax - std::pow(1.0 / static_cast<double>(n), am1);
  double mass = 0.0, slope = 0.0;
  for (int it = 0; it < opts.bisection_iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    threshold_mass(zs, mid, power, mass, slope);
    if (mass >= 1.0)
      lo = mid;
    else
      hi = mid;
  }
  // mass(tau) is convex and decreasing, so Newton from the left never overshoots.
  double tau = lo;
  for (int it = 0; it < opts.newton_iters; ++it) {
    threshold_mass(zs, tau, power, mass, slope);
    if (slope <= 0.0) break;
    const double step = (mass - 1.0) / slope;
    if (!(step > 0.0)) break;
    tau += step;
    if (step <= 1e-17 * std::max(1.0, std::abs(tau))) break;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = zs[i] - tau;
    p[i] = u > 0.0 ? std::pow(u, power) : 0.0;
    total += p[i];
  }
  for (std::size_t i = 0; i < n; ++i) p[i] /= total;
}

void entmax_backward(std::span<const double> p, double alpha, std::span<const double> dp,
                     std::span<double> dz, double* dalpha) {
  const std::size_t n = p.size();
  const double two_minus = 2.0 - alpha;
  double g_sum = 0.0, g_dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = p[i] > 0.0 ? std::pow(p[i], two_minus) : 0.0;
    dz[i] = g;
    g_sum += g;
    g_dot += g * dp[i];
  }
  const double q = g_dot / g_sum;

  if (dalpha != nullptr) {
    const double beta = 1.0 / (alpha - 1.0);
    double ent = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (p[i] > 0.0) ent += p[i] * std::log(p[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g_hat = dz[i] / g_sum;
      const double plogp = p[i] > 0.0 ? p[i] * std::log(p[i]) : 0.0;
      const double dp_dalpha = beta * beta * (p[i] - g_hat) - beta * (plogp - g_hat * ent);
      acc += dp[i] * dp_dalpha;
    }
    *dalpha = acc;
  }

  for (std::size_t i = 0; i < n; ++i) dz[i] = dz[i] * (dp[i] - q);
}

std::vector<double> alpha_entmax(std::span<const double> scores, double alpha,
                                 std::span<const std::uint8_t> mask, const EntmaxOptions& opts) {
  if (!(alpha > 1.0 && alpha <= 2.0)) throw DataError("entmax alpha must lie in (1, 2]");
  if (mask.size() != scores.size()) throw ShapeError("entmax mask length differs from scores");
  std::vector<double> valid;
  valid.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) valid.push_back(scores[i]);
  if (valid.empty()) throw DataError("empty attention row: every entry is masked");

  std::vector<double> probs(valid.size());
  entmax_forward(valid, alpha, probs, opts);
  std::vector<double> out(scores.size(), 0.0);
  for (std::size_t i = 0, j = 0; i < scores.size(); ++i)
    if (mask[i]) out[i] = probs[j++];
  return out;
}

double learned_alpha(std::span<const double> h, std::span<const double> w, double b) {
  if (h.size() != w.size()) throw ShapeError("learned_alpha: width mismatch");
  return alpha_from_logit(std::inner_product(h.begin(), h.end(), w.begin(), b));
}

namespace {
constexpr double kSigmoidFloor = 1e-6;
constexpr double kSigmoidCeil = 1.0 - 1e-9;
}  // namespace

double alpha_from_logit(double a) {
  const double s = 1.0 / (1.0 + std::exp(-a));
  return 1.0 + std::clamp(s, kSigmoidFloor, kSigmoidCeil);
}

double alpha_logit_slope(double a) {
  const double s = 1.0 / (1.0 + std::exp(-a));
  if (s < kSigmoidFloor || s > kSigmoidCeil) return 0.0;
  return s * (1.0 - s);
}

}  // namespace mgcot
