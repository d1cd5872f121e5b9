#ifndef PEXP_QUADRATURE_HPP
#define PEXP_QUADRATURE_HPP

#include <cmath>
#include <map>
#include <mutex>
#include <queue>
#include <numbers>
#include <utility>
#include <vector>

#include "error.hpp"

namespace pexp::quad {

struct GaussLegendreRule {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights by Newton iteration on P_n.
inline GaussLegendreRule make_gauss_legendre(int n) {
    if (n < 1) throw DomainError("make_gauss_legendre: order must be positive");
    GaussLegendreRule r{std::vector<double>(n), std::vector<double>(n)};
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0;
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-16) break;
        }
        r.nodes[i] = -z;
        r.nodes[n - 1 - i] = z;
        r.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        r.weights[n - 1 - i] = r.weights[i];
    }
    return r;
}

/// Shared, lazily built rule of the given order.
inline const GaussLegendreRule& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, GaussLegendreRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
    return it->second;
}

template <class F>
double gauss_legendre_panel(const GaussLegendreRule& rule, F&& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        s += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    return s * half;
}

struct AdaptiveResult {
    double value;
    double error_estimate;
    bool converged;
};

/// Globally adaptive composite Gauss-Legendre. Each panel's error is the gap
/// between the rule on the panel and on its two halves; the panel with the
/// largest error is split until the summed error is below abs_tol or
/// max_panels panels exist.
template <class F>
AdaptiveResult integrate_adaptive(F&& f, double a, double b, double abs_tol, int order = 20, int max_panels = 2000) {
    const auto& rule = gauss_legendre(order);
    struct Panel {
        double a, b, value, error;
        bool operator<(const Panel& o) const { return error < o.error; }
    };
    auto make = [&](double lo, double hi, double whole) {
        const double m = 0.5 * (lo + hi);
        const double left = gauss_legendre_panel(rule, f, lo, m);
        const double right = gauss_legendre_panel(rule, f, m, hi);
        return Panel{lo, hi, left + right, std::abs(left + right - whole)};
    };
    std::priority_queue<Panel> heap;
    heap.push(make(a, b, gauss_legendre_panel(rule, f, a, b)));
    double err = heap.top().error;
    while (err > abs_tol && static_cast<int>(heap.size()) < max_panels) {
        const Panel p = heap.top();
        heap.pop();
        const double m = 0.5 * (p.a + p.b);
        if (!(m > p.a && m < p.b)) {
            heap.push(p);
            break;
        }
        const Panel l = make(p.a, m, gauss_legendre_panel(rule, f, p.a, m));
        const Panel r = make(m, p.b, gauss_legendre_panel(rule, f, m, p.b));
        err += l.error + r.error - p.error;
        heap.push(l);
        heap.push(r);
    }
    double total = 0.0;
    err = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    return {total, err, err <= abs_tol};
}

} // namespace pexp::quad

#endif
