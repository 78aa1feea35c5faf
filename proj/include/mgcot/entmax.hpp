#pragma once

// alpha-entmax: p_i = [(alpha - 1) z_i - tau]_+^{1/(alpha-1)} with tau chosen
// so that sum(p) = 1. alpha -> 1 recovers softmax, alpha = 2 is sparsemax.

#include <cstdint>
#include <span>
#include <vector>

namespace mgcot {

struct EntmaxOptions {
  int bisection_iters = 30;
  // Newton steps from the lower bracket after bisection; they make the
  // threshold exact to rounding so outputs are smooth in the inputs.
  int newton_iters = 8;
};

// Writes entmax(z; alpha) into p. z and p have equal length >= 1.
void entmax_forward(std::span<const double> z, double alpha, std::span<double> p,
                    const EntmaxOptions& opts = {});

// Vector-Jacobian product at output p. dz receives dL/dz (overwritten);
// dalpha (if non-null) receives dL/dalpha (overwritten).
void entmax_backward(std::span<const double> p, double alpha, std::span<const double> dp,
                     std::span<double> dz, double* dalpha);

// Masked entry point: mask[i] != 0 marks a valid entry. Masked outputs are
// exactly 0. Throws DataError if every entry is masked or alpha is outside (1, 2].
std::vector<double> alpha_entmax(std::span<const double> scores, double alpha,
                                 std::span<const std::uint8_t> mask,
                                 const EntmaxOptions& opts = {});

// sigmoid(a) + 1 with the sigmoid clamped to [1e-6, 1 - 1e-9], so the
// result stays strictly inside (1, 2) even where the sigmoid saturates.
double alpha_from_logit(double a);
// d alpha / d a; zero where the clamp is active.
double alpha_logit_slope(double a);

// alpha_from_logit(w . h + b).
double learned_alpha(std::span<const double> h, std::span<const double> w, double b);

}  // namespace mgcot
