#include "vqann/solvers.hpp"

#include <cmath>
#include <deque>

namespace vqann {

namespace {

struct Pair {
    Vector s;
    Vector y;
    double rho;
};

Vector two_loop(const Vector& grad, const std::deque<Pair>& history, const Vector* precond) {
    Vector q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t i = history.size(); i-- > 0;) {
        alpha[i] = history[i].rho * history[i].s.dot(q);
        q -= alpha[i] * history[i].y;
    }
    if (precond != nullptr) {
        q = q.cwiseProduct(*precond);
        if (!history.empty()) {
            const auto& last = history.back();
            q *= last.s.dot(last.y) / last.y.dot(last.y.cwiseProduct(*precond));
        }
    } else if (!history.empty()) {
        const auto& last = history.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
        const double beta = history[i].rho * history[i].y.dot(q);
        q += (alpha[i] - beta) * history[i].s;
    }
    return -q;
}

bool finite(const Vector& v) {
    return v.allFinite();
}

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& objective, Vector start, const LbfgsConfig& config,
                           const Vector* preconditioner) {
    if (config.memory < 1 || !(config.armijo_c > 0.0 && config.armijo_c < 1.0)) {
        throw std::invalid_argument("invalid L-BFGS configuration");
    }
    if (preconditioner != nullptr &&
        (preconditioner->size() != start.size() || !(preconditioner->array() > 0.0).all())) {
        throw std::invalid_argument("preconditioner must be a positive vector of the point's size");
    }
    LbfgsResult r;
    Vector grad(start.size());
    double value = objective(start, grad);
    ++r.evaluations;
    if (!std::isfinite(value) || !finite(grad)) {
        throw OptimizationError("non-finite objective at start", start, value);
    }
    Vector x = std::move(start);
    std::deque<Pair> history;
    Vector trial_grad(x.size());
    // Scale of curvature-free steps; shrinks after each failed steepest-descent search.
    double free_scale = 1.0;

    while (r.iterations < config.max_iters) {
        if (grad.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
            r.converged = true;
            break;
        }
        Vector dir = two_loop(grad, history, preconditioner);
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            history.clear();
            dir = two_loop(grad, history, preconditioner);
            slope = grad.dot(dir);
        }
        // A step without curvature information starts at unit length times free_scale.
        double step = 1.0;
        if (history.empty()) {
            double base = std::min(1.0, 1.0 / dir.norm());
            if (config.initial_scale > 0.0) {
                base = config.initial_scale;
            } else if (preconditioner != nullptr) {
                base = 1.0;
            }
            step = free_scale * base;
        }

        bool accepted = false;
        Vector trial;
        double trial_value = value;
        for (std::size_t ls = 0; ls < config.max_line_search; ++ls) {
            trial = x + step * dir;
            trial_value = objective(trial, trial_grad);
            ++r.evaluations;
            if (!std::isfinite(trial_value) || !finite(trial_grad)) {
                throw OptimizationError("non-finite objective during line search", x, value);
            }
            if (trial_value <= value + config.armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (history.empty()) {
                // The failed search counts against the budget so the loop terminates.
                ++r.iterations;
                free_scale *= std::ldexp(1.0, -static_cast<int>(config.max_line_search));
                if (step * dir.norm() < 1e-14 * (1.0 + x.norm())) {
                    break;
                }
                continue;
            }
            history.clear();
            continue;
        }

        Pair p{trial - x, trial_grad - grad, 0.0};
        const double sy = p.s.dot(p.y);
        if (sy > 1e-12 * p.y.squaredNorm() && sy > 0.0) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (history.size() > config.memory) {
                history.pop_front();
            }
        }
        x = std::move(trial);
        grad = trial_grad;
        value = trial_value;
        r.value_log.push_back(value);
        ++r.iterations;
    }
    if (grad.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
        r.converged = true;
    }
    if (!history.empty()) {
        const auto& last = history.back();
        const double yhy =
            preconditioner != nullptr ? last.y.dot(last.y.cwiseProduct(*preconditioner)) : last.y.squaredNorm();
        r.curvature_scale = last.s.dot(last.y) / yhy;
    }
    r.point = std::move(x);
    r.value = value;
    return r;
}

}  // namespace vqann
