// Semiparametric dimension reduction for continuous outcomes: the semi-SIR
// and semi-PHD estimating equations, classical inverse-regression
// initializers, and the fit driver.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "orthodr/dr_fit.hpp"
#include "orthodr/errors.hpp"
#include "orthodr/kernels.hpp"
#include "orthodr/solver.hpp"
#include "orthodr/stiefel.hpp"

namespace orthodr {

struct RegressionDataset {
    Matrix X;   // n x p covariates
    Vector y;   // continuous outcome

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    void validate() const {
        if (y.size() != n()) throw ValidationError("RegressionDataset: X and y must share n rows");
        if (n() < 1) throw ValidationError("RegressionDataset: empty dataset");
        if (!X.allFinite()) throw ValidationError("RegressionDataset: non-finite covariate");
        for (Index i = 0; i < y.size(); ++i)
            if (!std::isfinite(y[i]))
                throw ValidationError("RegressionDataset: non-finite outcome at row " +
                                      std::to_string(i));
    }

    void validate(int ndr) const {
        validate();
        if (ndr < 1 || ndr > p())
            throw ValidationError("RegressionDataset: need 1 <= ndr <= p");
        if (n() < 2 * static_cast<Index>(ndr))
            throw ValidationError("RegressionDataset: need n >= 2*ndr");
    }
};

enum class RegMethod { sir, phd };

inline RegMethod parse_reg_method(const std::string& name) {
    if (name == "sir") return RegMethod::sir;
    if (name == "phd") return RegMethod::phd;
    throw ValidationError("unknown regression method '" + name + "'");
}

struct RegFitSpec {
    RegMethod method = RegMethod::sir;
    int ndr = 2;
    std::optional<Matrix> B_initial;
    std::optional<KernelConfig> kernel;
    SolverControl control;
};

// Evaluator for the regression estimating equations. B-independent pieces
// (for SIR, the outcome-kernel smooth m_i = E(X | Y = y_i)) are cached at
// construction; evaluations are re-entrant.
class RegObjective {
public:
    RegObjective(RegressionDataset data, RegMethod method, KernelConfig kernel)
        : data_(std::move(data)), method_(method), kernel_(kernel) {
        kernel_.validate();
        if (method_ == RegMethod::sir) {
            // Nadaraya-Watson on y with the 1-d Silverman bandwidth scaled
            // by sd(y) (the rule presumes unit variance).
            const Index n = data_.n();
            const double mean = data_.y.mean();
            double sd = std::sqrt((data_.y.array() - mean).square().sum() /
                                  static_cast<double>(std::max<Index>(n - 1, 1)));
            if (sd < 1e-12) sd = 1.0;
            const double hy = silverman_bw(1, n) * sd;
            m_ = Matrix(n, data_.p());
            for (Index i = 0; i < n; ++i) {
                const Vector w =
                    (-0.5 * ((data_.y.array() - data_.y[i]) / hy).square()).exp().matrix();
                const double den = w.sum();
                if (den < kDenomTol)
                    m_.row(i) = data_.X.colwise().mean();
                else
                    m_.row(i) = (w.transpose() * data_.X) / den;
            }
        }
    }

    Vector psi(const Matrix& B) const {
        return method_ == RegMethod::sir ? psi_sir_impl(B) : psi_phd_impl(B);
    }

    // Fit objective. For "phd" the second-moment equation is blind to
    // directions the link uses only linearly (for symmetric covariates the
    // relevant third moments vanish), so the minimized moment vector stacks
    // the first-moment residual equation
    //   (1/n) sum_i {y_i - E(y|B'X_i)} {X_i - E(X|B'X_i)}
    // alongside it. That term is zero at the true B for any link, so it
    // only adds identification.
    double operator()(const Matrix& B) const {
        if (method_ == RegMethod::sir) return psi_sir_impl(B).squaredNorm();
        const Matrix A = nw_weights(B);
        return psi_phd_given(A).squaredNorm() + psi_first_moment(A).squaredNorm();
    }

    const RegressionDataset& data() const { return data_; }
    const KernelConfig& kernel() const { return kernel_; }
    long degenerate_windows() const { return degenerate_.load(); }

private:
    // Row-stochastic NW weight matrix on the projected covariates Z = X B.
    Matrix nw_weights(const Matrix& B) const {
        const Index n = data_.n();
        const Matrix Z = data_.X * B;
        const double inv2h2 = -0.5 / (kernel_.bw * kernel_.bw);
        Matrix A(n, n);
        for (Index i = 0; i < n; ++i)
            A.col(i) =
                ((Z.rowwise() - Z.row(i)).rowwise().squaredNorm().array() * inv2h2).exp().matrix();
        for (Index i = 0; i < n; ++i) {
            const double den = A.row(i).sum();
            if (den < kDenomTol) {
                A.row(i).setConstant(1.0 / static_cast<double>(n));
                degenerate_.fetch_add(1, std::memory_order_relaxed);
            } else {
                A.row(i) /= den;
            }
        }
        return A;
    }

    // psi = vec[(1/n) sum_i (m_i - E(m|B'X_i)) (X_i - E(X|B'X_i))'].
    Vector psi_sir_impl(const Matrix& B) const {
        const Index n = data_.n();
        const Matrix A = nw_weights(B);
        const Matrix mc = m_ - A * m_;
        const Matrix xc = data_.X - A * data_.X;
        Matrix M = (mc.transpose() * xc) / static_cast<double>(n);
        return Eigen::Map<const Vector>(M.data(), M.size());
    }

    // psi = vec[(1/n) sum_i (y_i - E(y|B'X_i)) (X_i X_i' - E(XX'|B'X_i))]
    //     = vec[(1/n) X' diag(r - A'r) X] with r the smoothed residuals.
    Vector psi_phd_given(const Matrix& A) const {
        const Index n = data_.n();
        const Vector r = data_.y - A * data_.y;
        const Vector t = r - A.transpose() * r;
        Matrix M = (data_.X.transpose() * t.asDiagonal() * data_.X) / static_cast<double>(n);
        return Eigen::Map<const Vector>(M.data(), M.size());
    }

    Vector psi_phd_impl(const Matrix& B) const { return psi_phd_given(nw_weights(B)); }

    Vector psi_first_moment(const Matrix& A) const {
        const Index n = data_.n();
        const Vector r = data_.y - A * data_.y;
        const Matrix xc = data_.X - A * data_.X;
        return xc.transpose() * r / static_cast<double>(n);
    }

    RegressionDataset data_;
    RegMethod method_;
    KernelConfig kernel_;
    Matrix m_;   // SIR only: NW estimate of E(X | Y = y_i), one row per i
    mutable std::atomic<long> degenerate_{0};
};

inline Vector psi_sir(const StiefelPoint& B, const RegressionDataset& data,
                      const KernelConfig& kernel) {
    return RegObjective(data, RegMethod::sir, kernel).psi(B.values());
}

inline Vector psi_phd(const StiefelPoint& B, const RegressionDataset& data,
                      const KernelConfig& kernel) {
    return RegObjective(data, RegMethod::phd, kernel).psi(B.values());
}

// Classical slice-based SIR (for "sir") or residual-weighted second-moment
// PHD (for "phd"), eigen-decomposed, top-ndr directions, Gram-Schmidt.
// Deterministic given data and slice count; rank deficiency falls back to
// a seeded random feasible start (flagged).
inline StiefelPoint initial_B_reg(const RegressionDataset& data, int ndr, RegMethod method,
                                  int nslices = 10, bool* used_fallback = nullptr) {
    if (used_fallback) *used_fallback = false;
    const Index n = data.n(), p = data.p();
    if (ndr < 1 || ndr > p) throw ValidationError("initial_B_reg: need 1 <= ndr <= p");

    auto random_fallback = [&]() {
        if (used_fallback) *used_fallback = true;
        std::mt19937_64 rng(0x5eed);
        std::normal_distribution<double> normal;
        Matrix R(p, ndr);
        for (Index j = 0; j < ndr; ++j)
            for (Index i = 0; i < p; ++i) R(i, j) = normal(rng);
        return gram_schmidt(R);
    };

    Matrix M = Matrix::Zero(p, p);
    const Vector xbar = data.X.colwise().mean().transpose();

    if (method == RegMethod::sir) {
        std::vector<Index> order(n);
        std::iota(order.begin(), order.end(), Index{0});
        std::sort(order.begin(), order.end(),
                  [&](Index a, Index b) { return data.y[a] < data.y[b]; });
        const long slices = std::clamp<long>(nslices, 1, n);
        for (long s = 0; s < slices; ++s) {
            const long lo = s * n / slices, hi = (s + 1) * n / slices;
            if (hi == lo) continue;
            Vector mu = Vector::Zero(p);
            for (long k = lo; k < hi; ++k) mu += data.X.row(order[k]).transpose();
            mu /= static_cast<double>(hi - lo);
            const Vector c = mu - xbar;
            M += (static_cast<double>(hi - lo) / static_cast<double>(n)) * c * c.transpose();
        }
    } else {
        // OLS residuals r, then M = (1/n) sum r_i (x_i - xbar)(x_i - xbar)'.
        Matrix design(n, p + 1);
        design.col(0).setOnes();
        design.rightCols(p) = data.X;
        const Vector beta = design.colPivHouseholderQr().solve(data.y);
        const Vector r = data.y - design * beta;
        const Matrix xc = data.X.rowwise() - xbar.transpose();
        M = (xc.transpose() * r.asDiagonal() * xc) / static_cast<double>(n);
    }

    Eigen::SelfAdjointEigenSolver<Matrix> eig((M + M.transpose()) / 2.0);
    if (eig.info() != Eigen::Success) return random_fallback();
    // Order by |eigenvalue| descending (PHD eigenvalues carry sign).
    std::vector<Index> idx(p);
    std::iota(idx.begin(), idx.end(), Index{0});
    std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
        return std::abs(eig.eigenvalues()[a]) > std::abs(eig.eigenvalues()[b]);
    });
    if (std::abs(eig.eigenvalues()[idx[ndr - 1]]) < 1e-12) return random_fallback();
    Matrix V(p, ndr);
    for (int j = 0; j < ndr; ++j) V.col(j) = eig.eigenvectors().col(idx[j]);
    return gram_schmidt(V);
}

// Fit the semi-SIR / semi-PHD model: minimize ||psi(B)||^2 over the Stiefel
// manifold on standardized covariates.
inline DrFitResult fit_reg(const RegressionDataset& data, const RegFitSpec& spec) {
    spec.control.validate();
    data.validate(spec.ndr);

    DrFitResult out;
    out.method = spec.method == RegMethod::sir ? "sir" : "phd";
    const Standardization std_ = Standardization::fit(data.X);
    out.center = std_.center;
    out.scale = std_.scale;

    RegressionDataset sdata{std_.apply(data.X), data.y};
    const KernelConfig kernel =
        spec.kernel ? *spec.kernel
                    : KernelConfig::with_bw(silverman_bw(spec.ndr, data.n()));
    kernel.validate();
    out.bw = kernel.bw;
    out.slice_fraction = kernel.slice_fraction;

    const RegObjective objective(sdata, spec.method, kernel);

    StiefelPoint B0 = [&] {
        if (spec.B_initial) {
            if (spec.B_initial->rows() != data.p() || spec.B_initial->cols() != spec.ndr)
                throw DimensionError("fit_reg: B_initial must be p x ndr");
            return as_feasible(*spec.B_initial);
        }
        // The classical initializers are cheap; start from whichever scores
        // better. The PHD moment matrix is noise-level when the link has no
        // curvature, so the SIR start is kept as a candidate for that case.
        bool fb = false;
        StiefelPoint b = initial_B_reg(sdata, spec.ndr, spec.method, 10, &fb);
        out.initial_fallback = fb;
        if (spec.method == RegMethod::phd) {
            bool fb2 = false;
            const StiefelPoint alt = initial_B_reg(sdata, spec.ndr, RegMethod::sir, 10, &fb2);
            if (!fb2 && objective(alt.values()) < objective(b.values())) {
                b = alt;
                out.initial_fallback = false;
            }
        }
        return b;
    }();
    out.B_initial = B0;
    ObjectiveSpec ospec;
    ospec.value_fn = [&objective](const Matrix& B) { return objective(B); };
    out.fit = ortho_optim(B0, ospec, spec.control);
    out.degenerate_mean_windows = objective.degenerate_windows();
    return out;
}

} // namespace orthodr
