// Simulation data generators for the survival and regression designs, the
// Brockett benchmark instance with its eigendecomposition oracle, and the
// fixed-budget benchmark runner with trace/timing instrumentation.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "orthodr/errors.hpp"
#include "orthodr/regression.hpp"
#include "orthodr/solver.hpp"
#include "orthodr/stiefel.hpp"
#include "orthodr/survival.hpp"

namespace orthodr {

namespace detail {

inline Matrix random_normal_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)        // column-major fill order
        for (Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
    return M;
}

} // namespace detail

inline StiefelPoint random_stiefel(Index p, Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return gram_schmidt(detail::random_normal_matrix(p, d, rng));
}

struct SurvivalSim {
    SurvivalDataset data;
    Matrix fail_edr;     // p x 2, orthonormal true failure directions
    Matrix censor_edr;   // p x 1, unit true censoring direction
};

// Survival design with two failure directions and one censoring direction:
//   T = exp(-2.5 + X'b1 + 0.5 (X'b2) eT),  C = exp(-0.5 + X'g + eC),
// with X standard normal, eT, eC standard normal, b1 = (1,1,0,...)/sqrt(2),
// b2 = (0,0,1,-1,0,...)/sqrt(2), g = (0,1,0,1,1,1,0,...)/2.
inline SurvivalSim gen_survival_sim(Index n, Index p, std::uint64_t seed) {
    if (p < 6) throw DimensionError("gen_survival_sim: requires p >= 6");
    std::mt19937_64 rng(seed);

    SurvivalSim sim;
    sim.fail_edr = Matrix::Zero(p, 2);
    sim.fail_edr(0, 0) = sim.fail_edr(1, 0) = 1.0 / std::sqrt(2.0);
    sim.fail_edr(2, 1) = 1.0 / std::sqrt(2.0);
    sim.fail_edr(3, 1) = -1.0 / std::sqrt(2.0);
    sim.censor_edr = Matrix::Zero(p, 1);
    sim.censor_edr(1, 0) = sim.censor_edr(3, 0) = sim.censor_edr(4, 0) =
        sim.censor_edr(5, 0) = 0.5;

    const Matrix X = detail::random_normal_matrix(n, p, rng);
    std::normal_distribution<double> normal;
    Vector eT(n), eC(n);
    for (Index i = 0; i < n; ++i) eT[i] = normal(rng);
    for (Index i = 0; i < n; ++i) eC[i] = normal(rng);

    const Vector u1 = X * sim.fail_edr.col(0);
    const Vector u2 = X * sim.fail_edr.col(1);
    const Vector uc = X * sim.censor_edr.col(0);

    Vector Y(n);
    IntVector delta(n);
    for (Index i = 0; i < n; ++i) {
        const double T = std::exp(-2.5 + u1[i] + 0.5 * u2[i] * eT[i]);
        const double C = std::exp(-0.5 + uc[i] + eC[i]);
        Y[i] = std::min(T, C);
        delta[i] = T < C ? 1 : 0;
    }
    sim.data = SurvivalDataset{X, Y, delta};
    return sim;
}

struct RegressionSim {
    RegressionDataset data;
    Matrix true_B;   // p x 1
};

// Regression design y = -1 + X_1 + e with X, e standard normal.
inline RegressionSim gen_regression_sim(Index n, Index p, std::uint64_t seed) {
    if (p < 1) throw DimensionError("gen_regression_sim: requires p >= 1");
    std::mt19937_64 rng(seed);
    RegressionSim sim;
    const Matrix X = detail::random_normal_matrix(n, p, rng);
    std::normal_distribution<double> normal;
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = -1.0 + X(i, 0) + normal(rng);
    sim.data = RegressionDataset{X, y};
    sim.true_B = Matrix::Zero(p, 1);
    sim.true_B(0, 0) = 1.0;
    return sim;
}

// Brockett cost f(B) = tr(B'XBD) over B'B = I, with X = M + M' for a
// standard-normal M and D = diag(p, p-1, ..., 1). The minimum pairs the p
// smallest eigenvalues of X (ascending) with the diagonal of D (descending).
struct BrockettInstance {
    std::shared_ptr<const Matrix> X;   // n x n symmetric
    Vector d_diag;                     // length p, descending
    ObjectiveSpec spec;
    double oracle_optimum = 0.0;

    Index ambient_dim() const { return X->rows(); }
    Index structural_dim() const { return d_diag.size(); }
};

inline BrockettInstance brockett(Index n, Index p, std::uint64_t seed) {
    if (p < 1 || p > n) throw DimensionError("brockett: need 1 <= p <= n");
    std::mt19937_64 rng(seed);
    const Matrix M = detail::random_normal_matrix(n, n, rng);

    BrockettInstance inst;
    inst.X = std::make_shared<Matrix>(M + M.transpose());
    inst.d_diag = Vector::LinSpaced(p, static_cast<double>(p), 1.0);

    auto X = inst.X;
    Vector D = inst.d_diag;
    inst.spec.value_fn = [X, D](const Matrix& B) {
        const Matrix XB = (*X) * B;
        double f = 0.0;
        for (Index j = 0; j < B.cols(); ++j) f += D[j] * B.col(j).dot(XB.col(j));
        return f;
    };
    inst.spec.gradient_fn = [X, D](const Matrix& B) -> Matrix {
        return 2.0 * ((*X) * B) * D.asDiagonal();
    };

    Eigen::SelfAdjointEigenSolver<Matrix> eig(*inst.X);
    const Vector lambda = eig.eigenvalues();   // ascending
    double opt = 0.0;
    for (Index k = 0; k < p; ++k) opt += lambda[k] * inst.d_diag[k];
    inst.oracle_optimum = opt;
    return inst;
}

enum class BenchProblem { brockett, pca };

inline BenchProblem parse_bench_problem(const std::string& name) {
    if (name == "brockett") return BenchProblem::brockett;
    if (name == "pca") return BenchProblem::pca;
    throw ValidationError("unknown benchmark problem '" + name + "'");
}

struct BenchResult {
    std::string problem;
    Index n = 0;
    Index p = 0;
    Index d = 0;
    std::uint64_t seed = 0;
    std::vector<double> trace;      // length = iteration budget + 1
    double seconds = 0.0;
    double oracle_distance = 0.0;   // relative objective gap to the oracle optimum
};

// Run the solver for exactly `iteration_budget` iterations (tolerances
// disabled, single thread) and record the per-iteration objective and wall
// time. If the step search stalls early the trace is padded with the final
// value so its length stays budget + 1.
inline std::vector<BenchResult> run_benchmark(BenchProblem problem, Index n, Index p,
                                              int iteration_budget, int repeats,
                                              std::uint64_t base_seed = 1) {
    if (iteration_budget < 1) throw ValidationError("run_benchmark: budget must be >= 1");
    if (repeats < 1) throw ValidationError("run_benchmark: repeats must be >= 1");

    std::vector<BenchResult> results;
    results.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
        BenchResult res;
        res.n = n;
        res.p = p;
        res.seed = seed;

        ObjectiveSpec spec;
        double oracle = 0.0;
        StiefelPoint B0;
        if (problem == BenchProblem::brockett) {
            BrockettInstance inst = brockett(n, p, seed);
            spec = inst.spec;
            oracle = inst.oracle_optimum;
            B0 = random_stiefel(n, p, seed + 0x9e3779b97f4a7c15ULL);
            res.problem = "brockett";
            res.d = p;
        } else {
            // First principal component of a centered n x p Gaussian sample:
            // maximize w'(X'X)w over unit w.
            std::mt19937_64 rng(seed);
            Matrix X = detail::random_normal_matrix(n, p, rng);
            const Eigen::RowVectorXd mu = X.colwise().mean();
            X.rowwise() -= mu;
            auto gram = std::make_shared<const Matrix>(X.transpose() * X);
            spec.value_fn = [gram](const Matrix& w) {
                return (w.transpose() * (*gram) * w)(0, 0);
            };
            spec.gradient_fn = [gram](const Matrix& w) -> Matrix { return 2.0 * (*gram) * w; };
            spec.maximize = true;
            Eigen::SelfAdjointEigenSolver<Matrix> eig(*gram);
            oracle = eig.eigenvalues()[p - 1];
            B0 = random_stiefel(p, 1, seed + 0x9e3779b97f4a7c15ULL);
            res.problem = "pca";
            res.d = 1;
        }

        SolverControl ctrl;
        ctrl.ftol = 0.0;
        ctrl.gtol = 0.0;
        ctrl.btol = 0.0;
        ctrl.maxitr = iteration_budget;
        ctrl.num_threads = 1;

        const auto t0 = std::chrono::steady_clock::now();
        FitResult fit = ortho_optim(B0, spec, ctrl);
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        res.trace = fit.fval_trace;
        while (res.trace.size() < static_cast<std::size_t>(iteration_budget) + 1)
            res.trace.push_back(res.trace.back());
        res.oracle_distance =
            std::abs(fit.fval - oracle) / (1.0 + std::abs(oracle));
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace orthodr
