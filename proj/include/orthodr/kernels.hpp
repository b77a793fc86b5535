// Gaussian-kernel nonparametric components used inside the estimating
// equations: the Silverman bandwidth rule, product-kernel weights,
// at-risk conditional means, the single-kernel conditional hazard, and the
// sliced-average direction phi_hat.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "orthodr/errors.hpp"
#include "orthodr/stiefel.hpp"

namespace orthodr {

using IntVector = Eigen::VectorXi;

// Denominators below this count as degenerate kernel windows.
inline constexpr double kDenomTol = 1e-300;

struct KernelConfig {
    double bw = 1.0;              // bandwidth on unit-variance projected covariates
    double slice_fraction = 0.2;  // fraction h of the "hn observations" window rule

    // Default slice fraction is bw-derived: min(0.2, bw).
    static KernelConfig with_bw(double bw) { return KernelConfig{bw, std::min(0.2, bw)}; }

    void validate() const {
        if (!(bw > 0)) throw ValidationError("KernelConfig: bw must be > 0");
        if (!(slice_fraction > 0 && slice_fraction < 1))
            throw ValidationError("KernelConfig: slice_fraction must be in (0,1)");
    }
};

// Silverman rule of thumb: 1.06 * (4/(d+2))^(1/(d+4)) * n^(-1/(d+4)).
inline double silverman_bw(int d, long n) {
    if (d < 1) throw ValidationError("silverman_bw: d must be >= 1");
    if (n < 2) throw ValidationError("silverman_bw: n must be >= 2");
    const double dd = static_cast<double>(d);
    return 1.06 * std::pow(4.0 / (dd + 2.0), 1.0 / (dd + 4.0)) *
           std::pow(static_cast<double>(n), -1.0 / (dd + 4.0));
}

// Product Gaussian kernel w_i = prod_k phi((z_ik - z0_k)/bw)/bw. Equal
// per-coordinate bandwidths make this the spherical Gaussian
// (2 pi)^(-d/2) bw^(-d) exp(-||z_i - z0||^2 / (2 bw^2)), so the weights are
// invariant under orthogonal rotations of the projected coordinates.
// bw = +inf is the uniform limit and yields unit weights.
inline Vector gaussian_kernel_weights(const Matrix& z_points, const Vector& z0, double bw) {
    if (z_points.cols() != z0.size())
        throw DimensionError("gaussian_kernel_weights: z0 length must match columns");
    const Index n = z_points.rows();
    if (std::isinf(bw)) return Vector::Ones(n);
    const double d = static_cast<double>(z0.size());
    const double scale = std::pow(2.0 * std::numbers::pi, -d / 2.0) * std::pow(bw, -d);
    Vector w = (z_points.rowwise() - z0.transpose()).rowwise().squaredNorm();
    w = ((w.array() * (-0.5 / (bw * bw))).exp() * scale).matrix();
    return w;
}

struct CondMeanResult {
    Vector value;
    bool degenerate = false;   // zero denominator; value is the substitute
};

// Nadaraya-Watson mean of X over the risk set {Y_i >= u}, weighted at z0.
// A zero kernel denominator substitutes the unweighted risk-set mean; an
// empty risk set yields a zero vector. Both are flagged.
inline CondMeanResult cond_mean_at_risk(const Matrix& X, const Vector& Y, const Matrix& Z,
                                        double u, const Vector& z0, double bw) {
    const Index n = X.rows();
    if (Y.size() != n || Z.rows() != n)
        throw DimensionError("cond_mean_at_risk: X, Y, Z must share n rows");
    const Vector w = gaussian_kernel_weights(Z, z0, bw);
    Vector num = Vector::Zero(X.cols());
    Vector plain = Vector::Zero(X.cols());
    double den = 0.0;
    long at_risk = 0;
    for (Index i = 0; i < n; ++i) {
        if (Y[i] >= u) {
            den += w[i];
            num += w[i] * X.row(i).transpose();
            plain += X.row(i).transpose();
            ++at_risk;
        }
    }
    if (at_risk == 0) return {Vector::Zero(X.cols()), true};
    if (den < kDenomTol) return {plain / static_cast<double>(at_risk), true};
    return {num / den, false};
}

struct HazardResult {
    double value = 0.0;
    bool degenerate = false;
};

// Single-kernel conditional hazard at an observed failure time u:
// sum_i 1{Y_i = u} 1{delta_i = 1} K_h(Z_i - z0) / sum_i 1{Y_i >= u} K_h(Z_i - z0).
// Time equality is exact floating-point equality; u is always one of the
// observed failure times. A zero denominator yields hazard 0, flagged.
inline HazardResult cond_hazard(const Vector& Y, const IntVector& delta, const Matrix& Z,
                                double u, const Vector& z0, double bw) {
    const Index n = Y.size();
    if (delta.size() != n || Z.rows() != n)
        throw DimensionError("cond_hazard: Y, delta, Z must share n rows");
    const Vector w = gaussian_kernel_weights(Z, z0, bw);
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (Y[i] >= u) den += w[i];
        if (Y[i] == u && delta[i] == 1) num += w[i];
    }
    if (den < kDenomTol) return {0.0, true};
    return {num / den, false};
}

struct PhiHatResult {
    Vector value;
    bool shrunk = false;         // fewer failures than the window rule wanted
    bool empty_window = false;   // no failures at or after u; value is zero
};

// Sliced-average direction at time u: the mean of X over the failures in
// [u, u + du) minus the mean of X over the risk set {Y_i >= u}. du is
// chosen so the window holds ceil(slice_fraction * n) failure observations;
// ties at the window boundary are included wholly. If fewer failures
// remain the window shrinks to all of them (flagged).
inline PhiHatResult phi_hat(const Matrix& X, const Vector& Y, const IntVector& delta,
                            double u, double slice_fraction) {
    const Index n = X.rows();
    if (Y.size() != n || delta.size() != n)
        throw DimensionError("phi_hat: X, Y, delta must share n rows");
    if (!(slice_fraction > 0 && slice_fraction < 1))
        throw ValidationError("phi_hat: slice_fraction must be in (0,1)");

    std::vector<Index> failures;
    for (Index i = 0; i < n; ++i)
        if (delta[i] == 1 && Y[i] >= u) failures.push_back(i);
    if (failures.empty()) return {Vector::Zero(X.cols()), false, true};
    std::sort(failures.begin(), failures.end(),
              [&](Index a, Index b) { return Y[a] < Y[b]; });

    const auto want = static_cast<std::size_t>(
        std::ceil(slice_fraction * static_cast<double>(n)));
    std::size_t take = std::min(want, failures.size());
    const bool shrunk = failures.size() < want;
    // Extend through ties at the boundary time.
    while (take < failures.size() && Y[failures[take]] == Y[failures[take - 1]]) ++take;

    Vector slice_mean = Vector::Zero(X.cols());
    for (std::size_t k = 0; k < take; ++k) slice_mean += X.row(failures[k]).transpose();
    slice_mean /= static_cast<double>(take);

    Vector risk_mean = Vector::Zero(X.cols());
    long at_risk = 0;
    for (Index i = 0; i < n; ++i) {
        if (Y[i] >= u) {
            risk_mean += X.row(i).transpose();
            ++at_risk;
        }
    }
    risk_mean /= static_cast<double>(at_risk);   // nonempty: failures are at risk

    return {slice_mean - risk_mean, shrunk, false};
}

// Column centering/scaling applied to covariates before kernel work (the
// bandwidth rule presumes unit variances). Scale is the sample standard
// deviation; near-constant columns keep scale 1.
struct Standardization {
    Vector center;
    Vector scale;

    static Standardization fit(const Matrix& X) {
        Standardization s;
        s.center = X.colwise().mean().transpose();
        const Index n = X.rows();
        Matrix c = X.rowwise() - s.center.transpose();
        s.scale = (c.array().square().colwise().sum() /
                   static_cast<double>(std::max<Index>(n - 1, 1)))
                      .sqrt()
                      .matrix()
                      .transpose();
        for (Index j = 0; j < s.scale.size(); ++j)
            if (s.scale[j] < 1e-12) s.scale[j] = 1.0;
        return s;
    }

    Matrix apply(const Matrix& X) const {
        Matrix out = X.rowwise() - center.transpose();
        out.array().rowwise() /= scale.transpose().array();
        return out;
    }
};

// Maps a basis fitted on standardized covariates back to the raw scale
// (row j divided by the standardization scale of covariate j), then
// re-orthonormalized so spans stay comparable across scales.
inline StiefelPoint back_transform(const StiefelPoint& B, const Vector& scale) {
    if (scale.size() != B.ambient_dim())
        throw DimensionError("back_transform: scale length must equal p");
    Matrix raw = B.values();
    raw.array().colwise() /= scale.array();
    return gram_schmidt(raw);
}

} // namespace orthodr
