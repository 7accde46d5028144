#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <type_traits>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "math.hpp"

namespace vmvspread {

struct QuadRule {
    std::vector<double> x;  // nodes
    std::vector<double> w;  // weights
};

// Gauss-Legendre rule on (-1,1), computed by Newton iteration on P_n.
inline const QuadRule& gauss_legendre_rule(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    QuadRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    return cache.emplace(n, std::move(r)).first->second;
}

// Gauss-Hermite rule for weight e^{-x^2} (physicists' convention).
inline const QuadRule& gauss_hermite_rule(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    QuadRule r;
    r.x.resize(n);
    r.w.resize(n);
    double x = 0.0;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        if (i == 0)
            x = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            x -= 1.14 * std::pow(n, 0.426) / x;
        else if (i == 2)
            x = 1.86 * x - 0.86 * r.x[n - 1];
        else if (i == 3)
            x = 1.91 * x - 0.91 * r.x[n - 2];
        else
            x = 2.0 * x - r.x[n - i + 1];
        double pp = 0.0;
        for (int iter = 0; iter < 200; ++iter) {
            double p1 = std::pow(pi, -0.25);
            double p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = x * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-14) break;
        }
        r.x[n - 1 - i] = x;
        r.x[i] = -x;
        r.w[n - 1 - i] = 2.0 / (pp * pp);
        r.w[i] = r.w[n - 1 - i];
    }
    return cache.emplace(n, std::move(r)).first->second;
}

// Fixed Gauss-Legendre integration over [a,b] split at interior knots.
template <class F>
auto panelized_gauss_legendre(F&& f, double a, double b, const std::vector<double>& knots, int n = 64)
    -> decltype(f(a)) {
    using R = decltype(f(a));
    if (!(b > a)) return R{};
    std::vector<double> edges{a};
    for (double k : knots)
        if (k > a && k < b) edges.push_back(k);
    // Long smooth spans are split per unit of time so one fixed rule per panel
    // stays inside its accuracy envelope.
    edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    std::vector<double> refined{edges.front()};
    for (std::size_t i = 1; i < edges.size(); ++i) {
        double lo = edges[i - 1], hi = edges[i];
        int parts = std::max(1, static_cast<int>(std::ceil(hi - lo)));
        for (int p = 1; p <= parts; ++p) refined.push_back(lo + (hi - lo) * p / parts);
    }
    const QuadRule& rule = gauss_legendre_rule(n);
    R total{};
    for (std::size_t i = 1; i < refined.size(); ++i) {
        double lo = refined[i - 1], hi = refined[i];
        double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        R acc{};
        for (int j = 0; j < n; ++j) acc += f(mid + half * rule.x[j]) * rule.w[j];
        total += acc * half;
    }
    return total;
}

namespace detail {

// Gauss 7 / Kronrod 15 nodes and weights.
inline constexpr double gk_xgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr double gk_wgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double gk_wg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

inline double abs_of(double x) { return std::abs(x); }
inline double abs_of(const cdouble& x) { return std::abs(x); }

}  // namespace detail

template <class R>
struct QuadNode {
    double x;
    double w;
    R f;
};

// One Gauss-Kronrod 7-15 panel. Returns (K15 value, |K15-G7| error gauge).
template <class F, class R = decltype(std::declval<F&>()(0.0))>
std::pair<R, double> gk15_panel(F&& f, double a, double b, std::vector<QuadNode<R>>* record = nullptr) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    R resk{};
    R resg{};
    for (int j = 0; j < 8; ++j) {
        double dx = half * detail::gk_xgk[j];
        if (j == 7) {
            R fc = f(mid);
            resk += fc * detail::gk_wgk[7];
            resg += fc * detail::gk_wg[3];
            if (record) record->push_back({mid, half * detail::gk_wgk[7], fc});
        } else {
            R f1 = f(mid - dx);
            R f2 = f(mid + dx);
            resk += (f1 + f2) * detail::gk_wgk[j];
            if (j % 2 == 1) resg += (f1 + f2) * detail::gk_wg[j / 2];
            if (record) {
                record->push_back({mid - dx, half * detail::gk_wgk[j], f1});
                record->push_back({mid + dx, half * detail::gk_wgk[j], f2});
            }
        }
    }
    resk = resk * half;
    resg = resg * half;
    return {resk, detail::abs_of(resk - resg)};
}

template <class R>
struct AdaptiveOutcome {
    R value{};
    double err_est = 0.0;
    int panels = 0;
    bool converged = true;
};

// Adaptive bisection with Gauss-Kronrod panels. The tolerance is allocated to
// subintervals proportionally to width; panels are accepted left to right and
// summed in that fixed order with compensated accumulation. When the panel
// budget runs out the outstanding intervals are accepted as-is and the
// outcome is flagged, so callers can decide whether the achieved estimate is
// usable.
template <class F, class R = decltype(std::declval<F&>()(0.0))>
AdaptiveOutcome<R> adaptive_gk(F&& f, double a, double b, double abs_tol, double rel_tol,
                               int max_panels = 4000, std::vector<QuadNode<R>>* record = nullptr) {
    AdaptiveOutcome<R> out;
    if (!(b > a)) return out;

    auto first = gk15_panel(f, a, b);
    double scale_tol = std::max(abs_tol, rel_tol * detail::abs_of(first.first));
    if (scale_tol <= 0.0) scale_tol = 1e-14;

    struct Iv {
        double a, b;
    };
    std::vector<Iv> stack{{a, b}};
    struct Done {
        double a;
        R v;
        double e;
    };
    std::vector<Done> done;
    const double total_width = b - a;
    const double min_width = total_width * 1e-13;

    while (!stack.empty()) {
        Iv iv = stack.back();
        stack.pop_back();
        std::vector<QuadNode<R>> local;
        auto [v, e] = gk15_panel(f, iv.a, iv.b, record ? &local : nullptr);
        double alloc = scale_tol * (iv.b - iv.a) / total_width;
        bool budget_left = out.panels + static_cast<int>(stack.size()) < max_panels;
        if (e <= alloc || (iv.b - iv.a) < min_width || !budget_left) {
            if (e > alloc && budget_left == false) out.converged = false;
            done.push_back({iv.a, v, e});
            if (record)
                for (auto& nd : local) record->push_back(nd);
            ++out.panels;
        } else {
            double mid = 0.5 * (iv.a + iv.b);
            stack.push_back({mid, iv.b});
            stack.push_back({iv.a, mid});  // leftmost processed first
        }
    }
    std::sort(done.begin(), done.end(), [](const Done& l, const Done& r) { return l.a < r.a; });
    if constexpr (std::is_same_v<R, double>) {
        KahanSum s;
        KahanSum es;
        for (auto& d : done) {
            s.add(d.v);
            es.add(d.e);
        }
        out.value = s.value();
        out.err_est = es.value();
    } else {
        KahanSum re, im, es;
        for (auto& d : done) {
            re.add(d.v.real());
            im.add(d.v.imag());
            es.add(d.e);
        }
        out.value = R(re.value(), im.value());
        out.err_est = es.value();
    }
    if (record)
        std::sort(record->begin(), record->end(),
                  [](const QuadNode<R>& l, const QuadNode<R>& r) { return l.x < r.x; });
    return out;
}

}
