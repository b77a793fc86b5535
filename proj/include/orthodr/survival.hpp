// Counting-process based dimension reduction for censored survival data:
// the estimating equation psi ("dm" method), its GMM objective ||psi||^2,
// the sliced-SVD initializer, and the full fit driver.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
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

struct SurvivalDataset {
    Matrix X;          // n x p covariates
    Vector Y;          // observed times, min(T_i, C_i)
    IntVector delta;   // censoring indicators, 1 = failure observed

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }

    void validate() const {
        const Index rows = n();
        if (Y.size() != rows || delta.size() != rows)
            throw ValidationError("SurvivalDataset: X, Y, delta must share n rows");
        if (rows < 1) throw ValidationError("SurvivalDataset: empty dataset");
        if (!X.allFinite()) throw ValidationError("SurvivalDataset: non-finite covariate");
        long failures = 0;
        for (Index i = 0; i < rows; ++i) {
            if (!(Y[i] > 0) || !std::isfinite(Y[i]))
                throw ValidationError("SurvivalDataset: Y must be positive and finite at row " +
                                      std::to_string(i));
            if (delta[i] != 0 && delta[i] != 1)
                throw ValidationError("SurvivalDataset: delta must be 0/1 at row " +
                                      std::to_string(i));
            failures += delta[i];
        }
        if (failures == 0)
            throw ValidationError("SurvivalDataset: at least one failure (delta = 1) required");
    }

    void validate(int ndr) const {
        validate();
        if (ndr < 1 || ndr > p())
            throw ValidationError("SurvivalDataset: need 1 <= ndr <= p");
        if (n() < 2 * static_cast<Index>(ndr))
            throw ValidationError("SurvivalDataset: need n >= 2*ndr");
    }
};

enum class SurvMethod { dm, dn, forward };

inline SurvMethod parse_surv_method(const std::string& name) {
    if (name == "dm") return SurvMethod::dm;
    if (name == "dn") return SurvMethod::dn;
    if (name == "forward") return SurvMethod::forward;
    throw ValidationError("unknown survival method '" + name + "'");
}

struct SurvFitSpec {
    SurvMethod method = SurvMethod::dm;
    int ndr = 2;
    std::optional<Matrix> B_initial;
    std::optional<KernelConfig> kernel;   // default: Silverman bandwidth for (ndr, n)
    SolverControl control;
};

// Estimating-equation evaluator with the B-independent pieces cached:
// failure-time grouping, risk-set suffix structure, and the phi_hat
// directions per distinct failure time. Evaluations are re-entrant (the
// caches are read-only after construction), as required by the parallel
// numeric gradient.
class SurvObjective {
public:
    SurvObjective(SurvivalDataset data, KernelConfig kernel)
        : data_(std::move(data)), kernel_(kernel) {
        kernel_.validate();
        const Index n = data_.n();

        // Distinct observed times, descending, with their member indices.
        std::map<double, std::vector<Index>> by_time;
        for (Index i = 0; i < n; ++i) by_time[data_.Y[i]].push_back(i);
        for (auto it = by_time.rbegin(); it != by_time.rend(); ++it) {
            times_desc_.push_back(it->first);
            groups_.push_back(it->second);
            std::vector<Index> fails;
            for (Index i : it->second)
                if (data_.delta[i] == 1) fails.push_back(i);
            fail_groups_.push_back(std::move(fails));
        }

        // phi_hat per distinct failure time (depends on data only).
        int cols = 0;
        for (const auto& f : fail_groups_) cols += f.empty() ? 0 : 1;
        phi_ = Matrix::Zero(data_.p(), cols);
        phi_col_.assign(times_desc_.size(), -1);
        int c = 0;
        for (std::size_t t = 0; t < times_desc_.size(); ++t) {
            if (fail_groups_[t].empty()) continue;
            phi_.col(c) =
                phi_hat(data_.X, data_.Y, data_.delta, times_desc_[t], kernel_.slice_fraction)
                    .value;
            phi_col_[t] = c++;
        }
    }

    // psi(B) = vec[(1/n) sum_i sum_{j: delta_j=1} {X_i - E(X | Y >= Y_j, B'X_i)}
    //          phi'(Y_j) {delta_i 1(j=i) - 1(Y_i >= Y_j) lambda(Y_j | B'X_i)}],
    // length p^2. The 1(Y_i >= Y_j) at-risk indicator on the compensator is
    // what makes the inner bracket a counting-process martingale increment
    // (zero-mean at the true B); subjects off the risk set contribute
    // nothing at time Y_j.
    Vector psi(const Matrix& B) const {
        const Index n = data_.n(), p = data_.p();
        if (B.rows() != p) throw DimensionError("psi: B must have p rows");
        const Matrix Z = data_.X * B;
        const double d = static_cast<double>(B.cols());
        const double scale = std::pow(2.0 * std::numbers::pi, -d / 2.0) *
                             std::pow(kernel_.bw, -d);
        const double inv2h2 = -0.5 / (kernel_.bw * kernel_.bw);

        // W(i,k) = K_h(Z_k - Z_i); symmetric for the spherical kernel.
        Matrix W(n, n);
        for (Index i = 0; i < n; ++i)
            W.col(i) = (((Z.rowwise() - Z.row(i)).rowwise().squaredNorm().array() * inv2h2)
                            .exp() * scale)
                           .matrix();

        Vector S0 = Vector::Zero(n);        // running kernel mass over the risk set
        Matrix S1 = Matrix::Zero(n, p);     // running kernel-weighted X sums
        Vector Su = Vector::Zero(p);        // running unweighted X sum (substitute mean)
        std::vector<Index> risk_idx;        // subjects with Y_i >= current time
        risk_idx.reserve(n);
        Matrix M = Matrix::Zero(p, p);

        Vector hnum(n);
        for (std::size_t t = 0; t < times_desc_.size(); ++t) {
            for (Index k : groups_[t]) {
                S0 += W.col(k);
                S1 += W.col(k) * data_.X.row(k);
                Su += data_.X.row(k).transpose();
                risk_idx.push_back(k);
            }
            const auto& fails = fail_groups_[t];
            if (fails.empty()) continue;

            hnum.setZero();
            for (Index k : fails) hnum += W.col(k);

            // sum over the risk set of {delta_i 1(j=i) - lam_i}(X_i - E_i),
            // folded over the failures j at this time: |fails| copies of the
            // -lam part plus the centered row of each failing subject. For
            // at-risk subjects S0[i] >= K(0) > 0, so the degenerate branch
            // is a safety net only.
            const Vector risk_mean = Su / static_cast<double>(risk_idx.size());
            Vector base = Vector::Zero(p);
            for (Index i : risk_idx) {
                if (S0[i] < kDenomTol) {
                    deg_mean_.fetch_add(1, std::memory_order_relaxed);
                    deg_haz_.fetch_add(1, std::memory_order_relaxed);
                    continue;   // hazard substitutes 0: no contribution
                }
                const double lam = hnum[i] / S0[i];
                base -= lam * data_.X.row(i).transpose();
                base += (lam / S0[i]) * S1.row(i).transpose();
            }
            Vector v = static_cast<double>(fails.size()) * base;
            for (Index j : fails) {
                if (S0[j] < kDenomTol) {
                    deg_mean_.fetch_add(1, std::memory_order_relaxed);
                    v += data_.X.row(j).transpose() - risk_mean;
                } else {
                    v += data_.X.row(j).transpose() - (S1.row(j) / S0[j]).transpose();
                }
            }
            M += v * phi_.col(phi_col_[t]).transpose();
        }

        M /= static_cast<double>(n);
        return Eigen::Map<const Vector>(M.data(), M.size());
    }

    double operator()(const Matrix& B) const { return psi(B).squaredNorm(); }

    const SurvivalDataset& data() const { return data_; }
    const KernelConfig& kernel() const { return kernel_; }
    long degenerate_mean_windows() const { return deg_mean_.load(); }
    long degenerate_hazard_windows() const { return deg_haz_.load(); }

private:
    SurvivalDataset data_;
    KernelConfig kernel_;
    std::vector<double> times_desc_;
    std::vector<std::vector<Index>> groups_;
    std::vector<std::vector<Index>> fail_groups_;
    Matrix phi_;
    std::vector<int> phi_col_;
    mutable std::atomic<long> deg_mean_{0};
    mutable std::atomic<long> deg_haz_{0};
};

inline Vector psi_dm(const StiefelPoint& B, const SurvivalDataset& data,
                     const KernelConfig& kernel) {
    return SurvObjective(data, kernel).psi(B.values());
}

inline double surv_objective(const StiefelPoint& B, const SurvivalDataset& data,
                             const KernelConfig& kernel) {
    return SurvObjective(data, kernel)(B.values());
}

// Sliced inverse-regression initializer: failures are sliced by observed
// time into ceil(1/slice_fraction) groups (at least ndr), each slice
// contributes its phi direction (slice mean minus risk-set mean), and the
// top-ndr left singular vectors of that p x S matrix are orthonormalized.
// Deterministic unless the matrix is rank-deficient, in which case a
// seeded random feasible start is returned and flagged.
inline StiefelPoint initial_B_surv(const SurvivalDataset& data, int ndr,
                                   double slice_fraction = 0.2,
                                   bool* used_fallback = nullptr) {
    if (used_fallback) *used_fallback = false;
    const Index n = data.n(), p = data.p();
    if (ndr < 1 || ndr > p) throw ValidationError("initial_B_surv: need 1 <= ndr <= p");

    std::vector<Index> failures;
    for (Index i = 0; i < n; ++i)
        if (data.delta[i] == 1) failures.push_back(i);
    std::sort(failures.begin(), failures.end(),
              [&](Index a, Index b) { return data.Y[a] < data.Y[b]; });

    auto random_fallback = [&]() {
        if (used_fallback) *used_fallback = true;
        std::mt19937_64 rng(0x5eed);
        std::normal_distribution<double> normal;
        Matrix R(p, ndr);
        for (Index j = 0; j < ndr; ++j)
            for (Index i = 0; i < p; ++i) R(i, j) = normal(rng);
        return gram_schmidt(R);
    };

    const auto nfail = static_cast<long>(failures.size());
    if (nfail < ndr) return random_fallback();

    long slices = static_cast<long>(std::ceil(1.0 / slice_fraction));
    slices = std::clamp<long>(slices, ndr, nfail);

    Matrix F(p, slices);
    for (long s = 0; s < slices; ++s) {
        const long lo = s * nfail / slices;
        const long hi = (s + 1) * nfail / slices;
        const double u = data.Y[failures[lo]];
        Vector slice_mean = Vector::Zero(p);
        for (long k = lo; k < hi; ++k) slice_mean += data.X.row(failures[k]).transpose();
        slice_mean /= static_cast<double>(hi - lo);
        Vector risk_mean = Vector::Zero(p);
        long at_risk = 0;
        for (Index i = 0; i < n; ++i)
            if (data.Y[i] >= u) {
                risk_mean += data.X.row(i).transpose();
                ++at_risk;
            }
        risk_mean /= static_cast<double>(at_risk);
        F.col(s) = slice_mean - risk_mean;
    }

    Eigen::JacobiSVD<Matrix> svd(F, Eigen::ComputeThinU);
    if (svd.singularValues()[ndr - 1] < 1e-12) return random_fallback();
    return gram_schmidt(svd.matrixU().leftCols(ndr));
}

// Fit the survival dimension-reduction model: minimize ||psi(B)||^2 over
// the Stiefel manifold on standardized covariates. Only the "dm"
// estimating equation is implemented.
inline DrFitResult fit_surv(const SurvivalDataset& data, const SurvFitSpec& spec) {
    if (spec.method == SurvMethod::dn)
        throw UnimplementedMethodError(
            "survival method 'dn' (counting-process inverse regression) is not "
            "implemented in this build; use method 'dm'");
    if (spec.method == SurvMethod::forward)
        throw UnimplementedMethodError(
            "survival method 'forward' (forward regression) is not implemented "
            "in this build; use method 'dm'");
    spec.control.validate();
    data.validate(spec.ndr);

    DrFitResult out;
    out.method = "dm";
    const Standardization std_ = Standardization::fit(data.X);
    out.center = std_.center;
    out.scale = std_.scale;

    SurvivalDataset sdata{std_.apply(data.X), data.Y, data.delta};
    const KernelConfig kernel =
        spec.kernel ? *spec.kernel
                    : KernelConfig::with_bw(silverman_bw(spec.ndr, data.n()));
    kernel.validate();
    out.bw = kernel.bw;
    out.slice_fraction = kernel.slice_fraction;

    StiefelPoint B0 = [&] {
        if (spec.B_initial) {
            if (spec.B_initial->rows() != data.p() || spec.B_initial->cols() != spec.ndr)
                throw DimensionError("fit_surv: B_initial must be p x ndr");
            return as_feasible(*spec.B_initial);
        }
        bool fb = false;
        StiefelPoint b = initial_B_surv(sdata, spec.ndr, kernel.slice_fraction, &fb);
        out.initial_fallback = fb;
        return b;
    }();
    out.B_initial = B0;

    const SurvObjective objective(sdata, kernel);
    ObjectiveSpec ospec;
    ospec.value_fn = [&objective](const Matrix& B) { return objective(B); };
    out.fit = ortho_optim(B0, ospec, spec.control);
    out.degenerate_mean_windows = objective.degenerate_mean_windows();
    out.degenerate_hazard_windows = objective.degenerate_hazard_windows();
    return out;
}

} // namespace orthodr
