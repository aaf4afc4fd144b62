#ifndef ZIBMED_LBFGS_HPP
#define ZIBMED_LBFGS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

namespace zibmed {

// Minimizes f via L-BFGS (two-loop recursion) with Armijo backtracking and
// optional box constraints handled by gradient masking plus projection:
// at an active bound the outward gradient component is frozen and trial
// points are clamped into the box. The objective callback returns f and
// fills the gradient.
struct LbfgsOptions {
    std::size_t max_iterations = 50;
    std::size_t memory = 8;
    double grad_tolerance = 1e-9;
    double step_tolerance = 1e-14;
};

struct LbfgsResult {
    std::vector<double> x;
    double f = 0.0;
    std::size_t n_iterations = 0;
    bool stalled = false;  // no improving step found
};

inline LbfgsResult lbfgs_minimize(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& objective,
    std::vector<double> x0, const LbfgsOptions& opts = {},
    const std::vector<double>* lower = nullptr, const std::vector<double>* upper = nullptr) {
    const std::size_t n = x0.size();
    auto project = [&](std::vector<double>& v) {
        if (!lower) return;
        for (std::size_t j = 0; j < n; ++j) v[j] = std::clamp(v[j], (*lower)[j], (*upper)[j]);
    };
    std::vector<double> x = std::move(x0);
    project(x);
    std::vector<double> grad(n), x_new(n), grad_new(n), dir(n), masked(n);
    double f = objective(x, grad);

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    LbfgsResult res;
    res.stalled = true;

    // a coordinate pinned at a bound with the descent direction pointing
    // outward contributes nothing to the step
    auto mask_gradient = [&]() {
        masked = grad;
        if (!lower) return;
        for (std::size_t j = 0; j < n; ++j) {
            const double span = std::max(1.0, (*upper)[j] - (*lower)[j]);
            const double tol = 1e-12 * span;
            if (x[j] <= (*lower)[j] + tol && grad[j] > 0.0) masked[j] = 0.0;
            if (x[j] >= (*upper)[j] - tol && grad[j] < 0.0) masked[j] = 0.0;
        }
    };

    for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
        mask_gradient();
        double gmax = 0.0;
        for (double gj : masked) gmax = std::max(gmax, std::abs(gj));
        if (gmax < opts.grad_tolerance) {
            res.stalled = false;
            break;
        }

        // two-loop recursion on the masked gradient
        dir = masked;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t h = s_hist.size(); h-- > 0;) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += s_hist[h][j] * dir[j];
            alpha[h] = rho_hist[h] * dot;
            for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[h] * y_hist[h][j];
        }
        if (!s_hist.empty()) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sy += s_hist.back()[j] * y_hist.back()[j];
                yy += y_hist.back()[j] * y_hist.back()[j];
            }
            const double scale = sy / yy;
            for (double& dj : dir) dj *= scale;
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y_hist[h][j] * dir[j];
            const double beta = rho_hist[h] * dot;
            for (std::size_t j = 0; j < n; ++j) dir[j] += (alpha[h] - beta) * s_hist[h][j];
        }
        for (double& dj : dir) dj = -dj;
        if (lower) {
            for (std::size_t j = 0; j < n; ++j)
                if (masked[j] == 0.0 && grad[j] != 0.0) dir[j] = 0.0;
        }

        double slope = 0.0;
        for (std::size_t j = 0; j < n; ++j) slope += grad[j] * dir[j];
        if (slope >= 0.0) {  // not a descent direction; fall back to steepest
            for (std::size_t j = 0; j < n; ++j) dir[j] = -masked[j];
            slope = 0.0;
            for (std::size_t j = 0; j < n; ++j) slope += grad[j] * dir[j];
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            if (slope >= 0.0) break;
        }

        // Armijo backtracking with projection into the box
        double step = 1.0;
        bool accepted = false;
        double f_new = f;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * dir[j];
            project(x_new);
            f_new = objective(x_new, grad_new);
            double moved = 0.0;
            for (std::size_t j = 0; j < n; ++j) moved += (x_new[j] - x[j]) * (x_new[j] - x[j]);
            if (moved == 0.0) break;
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
            if (step * std::abs(slope) < opts.step_tolerance) break;
        }
        if (!accepted) break;

        std::vector<double> s(n), yv(n);
        double sy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = x_new[j] - x[j];
            yv[j] = grad_new[j] - grad[j];
            sy += s[j] * yv[j];
        }
        if (sy > 1e-12) {  // curvature condition; skip update otherwise
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x.swap(x_new);
        grad.swap(grad_new);
        f = f_new;
        res.n_iterations = iter + 1;
        res.stalled = false;
    }

    res.x = std::move(x);
    res.f = f;
    return res;
}

}  // namespace zibmed

#endif  // ZIBMED_LBFGS_HPP
