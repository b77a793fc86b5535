// Stiefel-manifold domain types: orthonormal-column matrices, subspaces
// spanned by them, Gram-Schmidt orthonormalization and subspace distances.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <string>

#include "orthodr/errors.hpp"

namespace orthodr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Feasibility tolerance on ||B'B - I||_F for every point produced here.
inline constexpr double kOrthTol = 1e-10;

// Pivot-norm threshold below which a Gram-Schmidt column counts as
// linearly dependent on its predecessors.
inline constexpr double kRankTol = 1e-12;

inline double orthogonality_error(const Matrix& B) {
    const Index d = B.cols();
    return (B.transpose() * B - Matrix::Identity(d, d)).norm();
}

// A p x d matrix with orthonormal columns (B'B = I). Immutable after
// construction; construction validates the invariant.
class StiefelPoint {
public:
    StiefelPoint() : values_(Matrix::Identity(1, 1)) {}

    explicit StiefelPoint(Matrix values) : values_(std::move(values)) {
        if (values_.cols() < 1 || values_.rows() < values_.cols())
            throw DimensionError("StiefelPoint requires p >= d >= 1, got " +
                                 std::to_string(values_.rows()) + "x" +
                                 std::to_string(values_.cols()));
        if (!values_.allFinite())
            throw ValidationError("StiefelPoint entries must be finite");
        const double err = orthodr::orthogonality_error(values_);
        if (!(err <= kOrthTol))
            throw ValidationError("StiefelPoint violates B'B = I: ||B'B - I||_F = " +
                                  std::to_string(err));
    }

    const Matrix& values() const { return values_; }
    Index ambient_dim() const { return values_.rows(); }      // p
    Index structural_dim() const { return values_.cols(); }   // d
    double orthogonality_error() const { return orthodr::orthogonality_error(values_); }

private:
    Matrix values_;
};

// Modified Gram-Schmidt with a second re-orthogonalization sweep per column.
// Throws RankDeficiencyError when a pivot norm falls below kRankTol.
inline StiefelPoint gram_schmidt(const Matrix& M) {
    if (M.cols() < 1 || M.rows() < M.cols())
        throw DimensionError("gram_schmidt requires p >= d >= 1");
    Matrix Q = M;
    for (Index j = 0; j < Q.cols(); ++j) {
        for (int sweep = 0; sweep < 2; ++sweep)
            for (Index i = 0; i < j; ++i)
                Q.col(j) -= Q.col(i).dot(Q.col(j)) * Q.col(i);
        const double norm = Q.col(j).norm();
        if (norm < kRankTol)
            throw RankDeficiencyError(
                "gram_schmidt: column " + std::to_string(j) +
                    " is linearly dependent (pivot norm " + std::to_string(norm) + ")",
                static_cast<int>(j));
        Q.col(j) /= norm;
    }
    return StiefelPoint(std::move(Q));
}

// Orthonormalize only when needed; leaves feasible inputs untouched.
inline StiefelPoint as_feasible(const Matrix& M) {
    if (M.cols() >= 1 && M.rows() >= M.cols() && M.allFinite() &&
        orthogonality_error(M) <= kOrthTol)
        return StiefelPoint(M);
    return gram_schmidt(M);
}

// The column space of a basis. The projection matrix P = BB' is symmetric
// idempotent because the stored basis is orthonormal.
class Subspace {
public:
    explicit Subspace(StiefelPoint basis) : basis_(std::move(basis)) {}

    // Accepts any full-column-rank matrix; orthonormalizes the span.
    static Subspace from_matrix(const Matrix& M) { return Subspace(as_feasible(M)); }

    const StiefelPoint& basis() const { return basis_; }
    Index ambient_dim() const { return basis_.ambient_dim(); }
    Index dim() const { return basis_.structural_dim(); }
    Matrix projection() const { return basis_.values() * basis_.values().transpose(); }

private:
    StiefelPoint basis_;
};

enum class DistanceMethod { dist, trace, canonical, sine };

inline DistanceMethod parse_distance_method(const std::string& name) {
    if (name == "dist") return DistanceMethod::dist;
    if (name == "trace") return DistanceMethod::trace;
    if (name == "canonical") return DistanceMethod::canonical;
    if (name == "sine") return DistanceMethod::sine;
    throw MissingArgumentError("unknown distance method '" + name + "'");
}

namespace detail {

// Canonical correlations between the centered projected samples X*B1 and
// X*B2, computed as singular values of Q1'Q2 from thin QR factors.
inline double mean_canonical_correlation(const Subspace& s1, const Subspace& s2,
                                         const Matrix& x) {
    if (x.cols() != s1.ambient_dim())
        throw DimensionError("canonical distance: sample has " +
                             std::to_string(x.cols()) + " columns, bases have " +
                             std::to_string(s1.ambient_dim()) + " rows");
    Matrix z1 = x * s1.basis().values();
    Matrix z2 = x * s2.basis().values();
    const Eigen::RowVectorXd mu1 = z1.colwise().mean();
    const Eigen::RowVectorXd mu2 = z2.colwise().mean();
    z1.rowwise() -= mu1;
    z2.rowwise() -= mu2;
    Eigen::HouseholderQR<Matrix> qr1(z1), qr2(z2);
    const Matrix q1 = qr1.householderQ() * Matrix::Identity(z1.rows(), z1.cols());
    const Matrix q2 = qr2.householderQ() * Matrix::Identity(z2.rows(), z2.cols());
    Eigen::JacobiSVD<Matrix> svd(q1.transpose() * q2);
    const Vector sv = svd.singularValues();
    // Roundoff can push a correlation infinitesimally above 1.
    double sum = 0.0;
    for (Index k = 0; k < sv.size(); ++k) sum += std::min(sv[k], 1.0);
    return sum / static_cast<double>(sv.size());
}

} // namespace detail

// Distance between two column spaces. `x` (an n x p sample) is required for
// the canonical method and ignored otherwise.
inline double distance(const Subspace& s1, const Subspace& s2, DistanceMethod method,
                       const Matrix* x = nullptr) {
    if (s1.ambient_dim() != s2.ambient_dim())
        throw DimensionError("distance: ambient dimensions differ (" +
                             std::to_string(s1.ambient_dim()) + " vs " +
                             std::to_string(s2.ambient_dim()) + ")");
    switch (method) {
    case DistanceMethod::dist:
        return (s1.projection() - s2.projection()).norm();
    case DistanceMethod::trace: {
        if (s1.dim() != s2.dim())
            throw DimensionError("trace distance requires equal structural dimensions");
        const double t = (s1.projection() * s2.projection()).trace();
        return t / static_cast<double>(s1.dim());
    }
    case DistanceMethod::canonical:
        if (x == nullptr)
            throw MissingArgumentError("canonical distance requires the sample matrix x");
        return detail::mean_canonical_correlation(s1, s2, *x);
    case DistanceMethod::sine: {
        // ||sin Theta||_F from the singular values of P1(I - P2).
        const Matrix p1 = s1.projection();
        const Matrix p2 = s2.projection();
        return (p1 - p1 * p2).norm();
    }
    }
    throw InternalError("unreachable distance method");
}

inline double distance(const Subspace& s1, const Subspace& s2, const std::string& method,
                       const Matrix* x = nullptr) {
    return distance(s1, s2, parse_distance_method(method), x);
}

} // namespace orthodr
