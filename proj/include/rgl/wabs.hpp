#pragma once

// Roots of the convex piecewise-linear function
//     h(x) = sum_i a_i |x - x_i| + slope_offset * x
// in O(N log N): sort the breakpoints, accumulate slopes and breakpoint
// values, then invert the bracketing linear piece on each side of the
// minimum.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rgl {

struct WabsProblem {
    std::vector<double> a;
    std::vector<double> xs;
    double y = 0.0;
    double slope_offset = 0.0;
};

struct WabsRoots {
    double x_min;
    double x_max;
};

/// Sorted, merged breakpoints with h evaluated at each of them. slopes[j] is
/// the slope of h to the right of knots[j-1] (slopes[0] is the leftmost piece),
/// so slopes has one more entry than knots.
struct WabsProfile {
    std::vector<double> knots;
    std::vector<double> weights;
    std::vector<double> slopes;
    std::vector<double> values;
};

inline WabsProfile wabs_profile(const WabsProblem& prob) {
    if (prob.a.size() != prob.xs.size() || prob.a.empty())
        throw std::invalid_argument("solve_wabs: need N >= 1 matching weights and breakpoints");
    std::vector<std::size_t> order(prob.a.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return prob.xs[l] < prob.xs[r]; });

    WabsProfile prof;
    for (std::size_t k : order) {
        if (!(prob.a[k] > 0.0)) throw std::invalid_argument("solve_wabs: weights must be positive");
        if (!prof.knots.empty() && prof.knots.back() == prob.xs[k]) {
            prof.weights.back() += prob.a[k];
        } else {
            prof.knots.push_back(prob.xs[k]);
            prof.weights.push_back(prob.a[k]);
        }
    }
    const std::size_t n = prof.knots.size();
    double total = 0.0;
    for (double w : prof.weights) total += w;

    prof.slopes.resize(n + 1);
    prof.slopes[0] = -total + prob.slope_offset;
    for (std::size_t j = 0; j < n; ++j) prof.slopes[j + 1] = prof.slopes[j] + 2.0 * prof.weights[j];

    prof.values.resize(n);
    double h0 = prob.slope_offset * prof.knots[0];
    for (std::size_t j = 1; j < n; ++j) h0 += prof.weights[j] * (prof.knots[j] - prof.knots[0]);
    prof.values[0] = h0;
    for (std::size_t j = 1; j < n; ++j)
        prof.values[j] = prof.values[j - 1] + prof.slopes[j] * (prof.knots[j] - prof.knots[j - 1]);
    return prof;
}

inline double wabs_eval(const WabsProblem& prob, double x) {
    double h = prob.slope_offset * x;
    for (std::size_t i = 0; i < prob.a.size(); ++i) h += prob.a[i] * std::abs(x - prob.xs[i]);
    return h;
}

/// Endpoints of the sublevel set {x : h(x) <= y}, i.e. the two roots of
/// h(x) = y (equal when y is the minimum), or nullopt when min h > y.
/// A root at a breakpoint is returned as that breakpoint exactly. When
/// |slope_offset| >= sum a_i, h is monotone or unbounded below on one side and
/// the corresponding endpoint is +-infinity.
inline std::optional<WabsRoots> solve_wabs(const WabsProblem& prob) {
    const WabsProfile prof = wabs_profile(prob);
    const auto& x = prof.knots;
    const auto& k = prof.slopes;
    const auto& h = prof.values;
    const std::size_t n = x.size();
    const double y = prob.y;
    constexpr double inf = std::numeric_limits<double>::infinity();

    // Breakpoint values are accumulated, so a target equal to h(x_j) in exact
    // arithmetic can miss by a few ulps; such ties snap to the breakpoint.
    double spread = std::abs(y) + std::abs(prob.slope_offset) * std::max(std::abs(x.front()), std::abs(x.back()));
    for (std::size_t j = 0; j < n; ++j) spread += prof.weights[j] * (x.back() - x.front());
    const double tie = 1e-14 * spread;
    auto below = [&](std::size_t j) { return h[j] <= y + tie; };
    auto root = [&](std::size_t j, double slope) { return std::abs(h[j] - y) <= tie ? x[j] : x[j] + (y - h[j]) / slope; };

    double lo = 0.0;
    bool lo_found = false;
    if (k[0] > 0.0 || (k[0] == 0.0 && below(0))) {
        lo = -inf;
        lo_found = true;
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            if (below(j)) {
                lo = root(j, k[j]);
                lo_found = true;
                break;
            }
        }
        if (!lo_found && k[n] < 0.0) {
            lo = x[n - 1] + (y - h[n - 1]) / k[n];
            lo_found = true;
        }
    }
    if (!lo_found) return std::nullopt;

    double hi = 0.0;
    bool hi_found = false;
    if (k[n] < 0.0 || (k[n] == 0.0 && below(n - 1))) {
        hi = inf;
        hi_found = true;
    } else {
        for (std::size_t j = n; j-- > 0;) {
            if (below(j)) {
                hi = root(j, k[j + 1]);
                hi_found = true;
                break;
            }
        }
        if (!hi_found && k[0] > 0.0) {
            hi = x[0] + (y - h[0]) / k[0];
            hi_found = true;
        }
    }
    if (!hi_found) return std::nullopt;
    return WabsRoots{lo, hi};
}

} // namespace rgl
