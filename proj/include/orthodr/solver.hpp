// First-order feasible optimization over {B : B'B = I}: skew-symmetric
// gradient lift, Cayley-transform update, Barzilai-Borwein trial steps with a
// non-monotone curvilinear backtracking search, and a parallel
// finite-difference gradient for objectives without an analytic one.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "orthodr/errors.hpp"
#include "orthodr/stiefel.hpp"

namespace orthodr {

// Objective callbacks take the ambient p x d matrix: the finite-difference
// gradient evaluates entrywise perturbations B +/- eps*e_i e_j', which lie
// off the manifold. Callbacks must be pure and safe for concurrent calls;
// any extra state they need is captured in the closure.
using ValueFn = std::function<double(const Matrix&)>;
using GradientFn = std::function<Matrix(const Matrix&)>;

struct ObjectiveSpec {
    ValueFn value_fn;
    GradientFn gradient_fn;   // empty -> numeric approximation
    bool maximize = false;    // solver negates values and gradients internally
};

enum class FdScheme { central, forward };

struct SolverControl {
    double ftol = 1e-6;        // relative objective-change tolerance
    double gtol = 1e-6;        // projected-gradient-norm tolerance
    double btol = 1e-6;        // parameter-change tolerance
    double epsilon = 1e-6;     // finite-difference step
    int maxitr = 500;
    double tau_init = 1e-3;    // initial curve step
    double rho = 1e-4;         // sufficient-decrease constant
    double eta = 0.2;          // backtracking shrink factor
    int nonmonotone_window = 5;
    int num_threads = 1;
    FdScheme fd_scheme = FdScheme::central;

    void validate() const {
        if (!(ftol >= 0) || !(gtol >= 0) || !(btol >= 0))
            throw ValidationError("SolverControl: tolerances must be nonnegative");
        if (!(epsilon > 0)) throw ValidationError("SolverControl: epsilon must be > 0");
        if (maxitr < 1) throw ValidationError("SolverControl: maxitr must be >= 1");
        if (!(tau_init > 0)) throw ValidationError("SolverControl: tau_init must be > 0");
        if (!(eta > 0 && eta < 1)) throw ValidationError("SolverControl: need 0 < eta < 1");
        if (!(rho > 0 && rho < 0.5)) throw ValidationError("SolverControl: need 0 < rho < 1/2");
        if (nonmonotone_window < 1)
            throw ValidationError("SolverControl: nonmonotone_window must be >= 1");
        if (num_threads < 1) throw ValidationError("SolverControl: num_threads must be >= 1");
    }
};

enum class StopReason { ftol, gtol, btol, stall, maxitr };

inline const char* to_string(StopReason r) {
    switch (r) {
    case StopReason::ftol: return "ftol";
    case StopReason::gtol: return "gtol";
    case StopReason::btol: return "btol";
    case StopReason::stall: return "stall";
    case StopReason::maxitr: return "maxitr";
    }
    return "?";
}

struct FitResult {
    StiefelPoint B;
    double fval = 0.0;                 // value_fn(B), on the caller's scale
    int iterations = 0;
    bool converged = false;
    StopReason reason = StopReason::maxitr;
    std::vector<double> fval_trace;    // length = iterations + 1
    double elapsed = 0.0;              // wall-clock seconds
    int reorthonormalizations = 0;     // feasibility repairs of accepted iterates
    double max_orth_error = 0.0;       // max ||B'B - I||_F over accepted iterates
};

// A = G B' - B G', the skew-symmetric lift of the gradient.
inline Matrix skew_lift(const StiefelPoint& B, const Matrix& G) {
    if (G.rows() != B.ambient_dim() || G.cols() != B.structural_dim())
        throw DimensionError("skew_lift: gradient must be p x d");
    const Matrix& b = B.values();
    return G * b.transpose() - b * G.transpose();
}

namespace detail {

// Direct p x p solve of (I + tau/2 A) Y = (I - tau/2 A) B. For skew A the
// system is nonsingular at every real tau; extreme trial steps can still
// overflow in floating point, so callers check finiteness.
inline Matrix cayley_direct(const Matrix& B, const Matrix& A, double tau) {
    const Index p = B.rows();
    const Matrix lhs = Matrix::Identity(p, p) + (tau / 2.0) * A;
    const Matrix rhs = (Matrix::Identity(p, p) - (tau / 2.0) * A) * B;
    return Eigen::PartialPivLU<Matrix>(lhs).solve(rhs);
}

// Low-rank curve evaluator for A = U V' with U = [G, B], V = [B, -G].
// Only a 2d x 2d system depends on tau, so the factors are built once and
// the curve B(tau) is re-evaluated cheaply during the step search.
struct CayleyCurve {
    Matrix U;    // p x 2d
    Matrix VtU;  // 2d x 2d
    Matrix VtB;  // 2d x d

    CayleyCurve(const Matrix& B, const Matrix& G) {
        const Index p = B.rows(), d = B.cols();
        U.resize(p, 2 * d);
        U.leftCols(d) = G;
        U.rightCols(d) = B;
        Matrix V(p, 2 * d);
        V.leftCols(d) = B;
        V.rightCols(d) = -G;
        VtU = V.transpose() * U;
        VtB = V.transpose() * B;
    }

    Matrix at(const Matrix& B, double tau) const {
        const Index m = VtU.rows();
        const Matrix lhs = Matrix::Identity(m, m) + (tau / 2.0) * VtU;
        return B - tau * (U * Eigen::PartialPivLU<Matrix>(lhs).solve(VtB));
    }
};

} // namespace detail

// Cayley update B_new = (I + tau/2 A)^(-1) (I - tau/2 A) B for skew A.
inline StiefelPoint cayley_step(const StiefelPoint& B, const Matrix& A, double tau) {
    const Index p = B.ambient_dim();
    if (A.rows() != p || A.cols() != p)
        throw DimensionError("cayley_step: A must be p x p");
    if (tau < 0) throw ValidationError("cayley_step: tau must be >= 0");
    Matrix Y = detail::cayley_direct(B.values(), A, tau);
    if (!Y.allFinite())
        throw InternalError("cayley_step: linear solve failed on a skew lift; "
                            "I + (tau/2)A is nonsingular for every skew A");
    return as_feasible(std::move(Y));
}

// Same update through the Sherman-Morrison-Woodbury identity on the rank-2d
// factorization of A = G B' - B G'; solves a 2d x 2d system instead of p x p.
inline StiefelPoint cayley_step_lowrank(const StiefelPoint& B, const Matrix& G, double tau) {
    if (G.rows() != B.ambient_dim() || G.cols() != B.structural_dim())
        throw DimensionError("cayley_step_lowrank: gradient must be p x d");
    if (tau < 0) throw ValidationError("cayley_step_lowrank: tau must be >= 0");
    detail::CayleyCurve curve(B.values(), G);
    Matrix Y = curve.at(B.values(), tau);
    if (!Y.allFinite())
        throw InternalError("cayley_step_lowrank: Woodbury solve overflowed");
    return as_feasible(std::move(Y));
}

struct SearchResult {
    StiefelPoint B;
    double fval = 0.0;
    double tau = 0.0;
    bool stalled = false;
};

// Backtracking search along the Cayley descent curve, accepting the first
// tau with f(B(tau)) <= f_ref - rho * tau * ||A B||_F^2. f_ref is the
// non-monotone reference value (max of the recent objective history). When
// tau shrinks below 1e-14 the search reports a stall and leaves B unchanged.
inline SearchResult curvilinear_search(const StiefelPoint& B, const Matrix& G,
                                       const ObjectiveSpec& spec, const SolverControl& ctrl,
                                       double f_ref, double tau_trial = 0.0) {
    ctrl.validate();
    const double sign = spec.maximize ? -1.0 : 1.0;
    auto f = [&](const Matrix& M) { return sign * spec.value_fn(M); };
    const Matrix g = sign * G;
    const double fref = sign * f_ref;

    const Matrix descent = skew_lift(B, g) * B.values();   // D = A B
    const double dnorm2 = descent.squaredNorm();
    if (dnorm2 == 0.0)
        return SearchResult{B, spec.value_fn(B.values()), 0.0, true};

    detail::CayleyCurve curve(B.values(), g);
    const bool lowrank = 2 * B.structural_dim() < B.ambient_dim();
    const Matrix A = lowrank ? Matrix() : skew_lift(B, g);

    double tau = tau_trial > 0.0 ? tau_trial : ctrl.tau_init;
    while (tau >= 1e-14) {
        const Matrix trial = lowrank ? curve.at(B.values(), tau)
                                     : detail::cayley_direct(B.values(), A, tau);
        // Extreme trial steps can overflow the solve; shrink and retry.
        if (trial.allFinite()) {
            const double ft = f(trial);
            if (std::isfinite(ft) && ft <= fref - ctrl.rho * tau * dnorm2)
                return SearchResult{as_feasible(trial), sign * ft, tau, false};
        }
        tau *= ctrl.eta;
    }
    return SearchResult{B, spec.value_fn(B.values()), 0.0, true};
}

// Entrywise finite-difference approximation of the gradient of value_fn
// (as given; the maximize flag is the solver's concern). Entries are
// computed independently across a pool of num_threads workers writing to
// disjoint locations, so the result is bit-identical for any thread count.
inline Matrix numeric_gradient(const StiefelPoint& B, const ObjectiveSpec& spec,
                               double epsilon, int num_threads,
                               FdScheme scheme = FdScheme::central) {
    if (!(epsilon > 0)) throw ValidationError("numeric_gradient: epsilon must be > 0");
    if (num_threads < 1) throw ValidationError("numeric_gradient: num_threads must be >= 1");
    const Index p = B.ambient_dim(), d = B.structural_dim();
    const Index total = p * d;
    const int workers = static_cast<int>(std::min<Index>(num_threads, total));

    Matrix grad(p, d);
    const double f0 = scheme == FdScheme::forward ? spec.value_fn(B.values()) : 0.0;

    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::string error_entry;

    auto work = [&](int w) {
        Matrix M = B.values();
        for (Index idx = w; idx < total; idx += workers) {
            const Index i = idx % p, j = idx / p;
            const double orig = M(i, j);
            try {
                double g;
                M(i, j) = orig + epsilon;
                const double fp = spec.value_fn(M);
                if (scheme == FdScheme::central) {
                    M(i, j) = orig - epsilon;
                    const double fm = spec.value_fn(M);
                    g = (fp - fm) / (2.0 * epsilon);
                } else {
                    g = (fp - f0) / epsilon;
                }
                M(i, j) = orig;
                if (!std::isfinite(g))
                    throw NonFiniteObjectiveError(
                        "numeric_gradient: non-finite objective near entry (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
                grad(i, j) = g;
            } catch (...) {
                M(i, j) = orig;
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                    error_entry = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
                }
                return;
            }
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return grad;
}

// Tangent-space projection used by the gtol test: G - B sym(B'G).
inline Matrix projected_gradient(const StiefelPoint& B, const Matrix& G) {
    const Matrix& b = B.values();
    const Matrix btg = b.transpose() * G;
    return G - b * ((btg + btg.transpose()) / 2.0);
}

// Minimize (or maximize) spec over the Stiefel manifold starting from B0.
// B0 is Gram-Schmidt processed if it is not already orthonormal. Stops on
// any of: relative objective change < ftol, ||projected grad||/sqrt(pd) <
// gtol, ||B_k - B_{k-1}||/sqrt(p) < btol, a stalled step search, or maxitr.
// converged is true unless maxitr was the trigger.
inline FitResult ortho_optim(const Matrix& B0, const ObjectiveSpec& spec,
                             const SolverControl& ctrl = SolverControl()) {
    ctrl.validate();
    if (!spec.value_fn) throw MissingArgumentError("ortho_optim: value_fn is required");
    const auto t_start = std::chrono::steady_clock::now();

    StiefelPoint B = as_feasible(B0);
    const Index p = B.ambient_dim(), d = B.structural_dim();
    const double sign = spec.maximize ? -1.0 : 1.0;
    auto fi = [&](const Matrix& M) { return sign * spec.value_fn(M); };
    auto gi = [&](const StiefelPoint& at) -> Matrix {
        if (spec.gradient_fn) return sign * spec.gradient_fn(at.values());
        ObjectiveSpec internal{[&](const Matrix& M) { return fi(M); }, nullptr, false};
        return numeric_gradient(at, internal, ctrl.epsilon, ctrl.num_threads, ctrl.fd_scheme);
    };

    double f = fi(B.values());
    if (!std::isfinite(f))
        throw NonFiniteObjectiveError("ortho_optim: objective is not finite at the initial point");

    FitResult result;
    result.fval_trace.push_back(sign * f);
    result.max_orth_error = B.orthogonality_error();
    std::deque<double> history{f};

    Matrix B_prev, PG_prev;
    bool have_prev = false;
    bool done = false;

    for (int k = 1; k <= ctrl.maxitr && !done; ++k) {
        Matrix G;
        try {
            G = gi(B);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error("ortho_optim: objective callback failed at iteration " +
                        std::to_string(k) + ": " + e.what());
        }

        // Pre-step test on the projected gradient.
        const Matrix PG = projected_gradient(B, G);
        const double pg = PG.norm() / std::sqrt(static_cast<double>(p * d));
        if (pg < ctrl.gtol) {
            result.iterations = k;
            result.fval_trace.push_back(sign * f);
            result.converged = true;
            result.reason = StopReason::gtol;
            done = true;
            break;
        }

        // Barzilai-Borwein trial step from the previous iterate/gradient
        // pair (tangent-projected gradients), alternating the two BB
        // formulas; the first pass uses tau_init.
        double tau_trial = ctrl.tau_init;
        if (have_prev) {
            const Matrix S = B.values() - B_prev;
            const Matrix Yg = PG - PG_prev;
            const double sy = std::abs((S.array() * Yg.array()).sum());
            double bb;
            if (k % 2 == 1)
                bb = S.squaredNorm() / sy;
            else
                bb = sy / Yg.squaredNorm();
            if (std::isfinite(bb) && bb > 0)
                tau_trial = std::clamp(bb, 1e-20, 1e20);
        }

        const double f_ref = *std::max_element(history.begin(), history.end());
        ObjectiveSpec internal{[&](const Matrix& M) { return fi(M); }, nullptr, false};
        SearchResult step = curvilinear_search(B, G, internal, ctrl, f_ref, tau_trial);

        if (step.stalled) {
            result.iterations = k;
            result.fval_trace.push_back(sign * f);
            result.converged = true;
            result.reason = StopReason::stall;
            done = true;
            break;
        }

        B_prev = B.values();
        PG_prev = PG;
        have_prev = true;

        const double db = (step.B.values() - B.values()).norm() /
                          std::sqrt(static_cast<double>(p));
        const double rel_df = std::abs(step.fval - f) / (std::abs(f) + 1.0);

        // Accept; repair feasibility drift beyond the tolerance.
        double oerr = step.B.orthogonality_error();
        if (oerr > kOrthTol) {
            step.B = gram_schmidt(step.B.values());
            step.fval = fi(step.B.values());
            ++result.reorthonormalizations;
            oerr = step.B.orthogonality_error();
        }
        B = step.B;
        f = step.fval;
        result.max_orth_error = std::max(result.max_orth_error, oerr);
        result.fval_trace.push_back(sign * f);
        history.push_back(f);
        if (static_cast<int>(history.size()) > ctrl.nonmonotone_window) history.pop_front();

        if (rel_df < ctrl.ftol) {
            result.iterations = k;
            result.converged = true;
            result.reason = StopReason::ftol;
            done = true;
        } else if (db < ctrl.btol) {
            result.iterations = k;
            result.converged = true;
            result.reason = StopReason::btol;
            done = true;
        }
    }

    if (!done) {
        result.iterations = ctrl.maxitr;
        result.converged = false;
        result.reason = StopReason::maxitr;
    }
    result.B = B;
    result.fval = sign * f;
    result.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

inline FitResult ortho_optim(const StiefelPoint& B0, const ObjectiveSpec& spec,
                             const SolverControl& ctrl = SolverControl()) {
    return ortho_optim(B0.values(), spec, ctrl);
}

} // namespace orthodr
