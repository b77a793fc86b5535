#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "orthodr/simgen.hpp"
#include "orthodr/solver.hpp"
#include "orthodr/stiefel.hpp"

#include "oracles.hpp"

using namespace orthodr;

namespace {

Matrix random_matrix(Index p, Index d, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix M(p, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < p; ++i) M(i, j) = normal(rng);
    return M;
}

Matrix random_skew(Index p, unsigned seed) {
    const Matrix M = random_matrix(p, p, seed);
    return M - M.transpose();
}

} // namespace

TEST_CASE("skew_lift cancels when G = B on the orthogonal group") {
    const StiefelPoint B = random_stiefel(4, 4, 11);
    const Matrix A = skew_lift(B, B.values());
    REQUIRE(A.norm() <= 1e-12);
}

TEST_CASE("skew_lift matches the 2x2 hand computation") {
    Matrix b(2, 1), g(2, 1);
    b << 1, 0;
    g << 0, 1;
    Matrix expected(2, 2);
    expected << 0, -1, 1, 0;
    REQUIRE((skew_lift(StiefelPoint(b), g) - expected).norm() == 0.0);
}

TEST_CASE("skew_lift is always skew-symmetric") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const StiefelPoint B = random_stiefel(6, 2, seed);
        const Matrix G = random_matrix(6, 2, 100 + seed);
        const Matrix A = skew_lift(B, G);
        REQUIRE((A + A.transpose()).norm() <= 1e-12);
    }
}

TEST_CASE("cayley_step at tau = 0 returns the input point") {
    const StiefelPoint B = random_stiefel(5, 2, 3);
    const Matrix A = random_skew(5, 4);
    const StiefelPoint out = cayley_step(B, A, 0.0);
    REQUIRE((out.values() - B.values()).norm() <= 1e-15);
    const StiefelPoint out2 = cayley_step_lowrank(B, random_matrix(5, 2, 5), 0.0);
    REQUIRE((out2.values() - B.values()).norm() <= 1e-15);
}

TEST_CASE("cayley_step matches the 2x2 hand-derived rotation") {
    Matrix b(2, 1);
    b << 1, 0;
    Matrix A(2, 2);
    A << 0, -1, 1, 0;
    const StiefelPoint out = cayley_step(StiefelPoint(b), A, 2.0);
    Matrix expected(2, 1);
    expected << 0, -1;
    REQUIRE((out.values() - expected).norm() <= 1e-12);
}

TEST_CASE("cayley_step preserves orthonormality") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const StiefelPoint B = random_stiefel(6, 3, seed);
        const Matrix A = random_skew(6, 50 + seed);
        for (double tau : {1e-3, 0.1, 1.0, 10.0}) {
            const StiefelPoint out = cayley_step(B, A, tau);
            REQUIRE(out.orthogonality_error() <= 1e-10);
        }
    }
}

TEST_CASE("the Cayley factor is a rotation (unit singular values)") {
    for (Index p = 2; p <= 6; ++p) {
        const Matrix A = random_skew(p, 7 * static_cast<unsigned>(p));
        const Matrix Q = Eigen::PartialPivLU<Matrix>(Matrix::Identity(p, p) + 0.35 * A)
                             .solve(Matrix::Identity(p, p) - 0.35 * A);
        Eigen::JacobiSVD<Matrix> svd(Q);
        REQUIRE((svd.singularValues().array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("low-rank and direct Cayley paths agree") {
    for (unsigned seed = 1; seed <= 8; ++seed) {
        const StiefelPoint B = random_stiefel(12, 2, seed);
        const Matrix G = random_matrix(12, 2, 300 + seed);
        const Matrix A = skew_lift(B, G);
        for (double tau : {1e-4, 1e-2, 0.5, 2.0}) {
            const StiefelPoint direct = cayley_step(B, A, tau);
            const StiefelPoint lowrank = cayley_step_lowrank(B, G, tau);
            REQUIRE((direct.values() - lowrank.values()).norm() <= 1e-9);
        }
    }
}

TEST_CASE("curvilinear_search stalls on a zero gradient") {
    const StiefelPoint B = random_stiefel(5, 2, 9);
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix&) { return 3.0; };
    const SearchResult r = curvilinear_search(B, Matrix::Zero(5, 2), spec, SolverControl(), 3.0);
    REQUIRE(r.stalled);
    REQUIRE((r.B.values() - B.values()).norm() == 0.0);
}

TEST_CASE("curvilinear_search returns the current point on a 0-dim manifold") {
    // p = d = 1: B in {-1, +1}; any gradient is parallel to B so A = 0.
    Matrix b(1, 1);
    b << 1.0;
    Matrix target(1, 1);
    target << -1.0;
    ObjectiveSpec spec;
    spec.value_fn = [target](const Matrix& B) { return (B - target).squaredNorm(); };
    Matrix g = 2.0 * (b - target);
    const SearchResult r = curvilinear_search(StiefelPoint(b), g, spec, SolverControl(), 4.0);
    REQUIRE(r.stalled);
    REQUIRE(r.B.values()(0, 0) == 1.0);
}

TEST_CASE("curvilinear_search achieves sufficient decrease on Brockett") {
    const BrockettInstance inst = brockett(20, 3, 17);
    const StiefelPoint B = random_stiefel(20, 3, 23);
    const double f0 = inst.spec.value_fn(B.values());
    const Matrix G = inst.spec.gradient_fn(B.values());
    SolverControl ctrl;
    const SearchResult r = curvilinear_search(B, G, inst.spec, ctrl, f0, ctrl.tau_init);
    REQUIRE_FALSE(r.stalled);
    const double dn2 = (skew_lift(B, G) * B.values()).squaredNorm();
    REQUIRE(r.fval <= f0 - ctrl.rho * r.tau * dn2);
}

TEST_CASE("numeric_gradient of a constant is zero") {
    const StiefelPoint B = random_stiefel(4, 2, 2);
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix&) { return 1.5; };
    REQUIRE(numeric_gradient(B, spec, 1e-6, 1).norm() == 0.0);
}

TEST_CASE("numeric_gradient of the entry sum is all ones") {
    const StiefelPoint B = random_stiefel(5, 3, 6);
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix& M) { return M.sum(); };
    const Matrix G = numeric_gradient(B, spec, 1e-6, 2);
    REQUIRE((G.array() - 1.0).abs().maxCoeff() <= 1e-8);
}

TEST_CASE("numeric_gradient matches the analytic Brockett gradient") {
    const BrockettInstance inst = brockett(15, 2, 31);
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const StiefelPoint B = random_stiefel(15, 2, 40 + seed);
        const Matrix num = numeric_gradient(B, inst.spec, 1e-6, 2);
        const Matrix ana = inst.spec.gradient_fn(B.values());
        REQUIRE((num - ana).cwiseAbs().maxCoeff() <= 1e-4);
    }
}

TEST_CASE("numeric_gradient is identical across thread counts") {
    const BrockettInstance inst = brockett(12, 3, 5);
    const StiefelPoint B = random_stiefel(12, 3, 77);
    const Matrix g1 = numeric_gradient(B, inst.spec, 1e-6, 1);
    for (int threads : {2, 3, 4, 7}) {
        const Matrix gk = numeric_gradient(B, inst.spec, 1e-6, threads);
        REQUIRE((g1 - gk).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("numeric_gradient reports non-finite objectives with the entry") {
    const StiefelPoint B = random_stiefel(3, 1, 8);
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix& M) {
        return M(1, 0) > 0.9 ? std::nan("") : M.squaredNorm();
    };
    // Choose a point where the perturbation of some entry crosses 0.9.
    Matrix b(3, 1);
    b << 0.0, 0.9, std::sqrt(1.0 - 0.81);
    REQUIRE_THROWS_AS(numeric_gradient(StiefelPoint(gram_schmidt(b).values()), spec, 1e-6, 2),
                      NonFiniteObjectiveError);
}

TEST_CASE("forward differences are available and close to central") {
    const BrockettInstance inst = brockett(10, 2, 13);
    const StiefelPoint B = random_stiefel(10, 2, 14);
    const Matrix c = numeric_gradient(B, inst.spec, 1e-6, 1, FdScheme::central);
    const Matrix f = numeric_gradient(B, inst.spec, 1e-6, 1, FdScheme::forward);
    REQUIRE((c - f).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("ortho_optim on a constant converges immediately") {
    const StiefelPoint B0 = random_stiefel(6, 2, 21);
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix&) { return 2.0; };
    const FitResult r = ortho_optim(B0, spec);
    REQUIRE(r.converged);
    REQUIRE(r.reason == StopReason::gtol);
    REQUIRE(r.iterations == 1);
    REQUIRE(r.fval_trace.size() == 2);
    REQUIRE((r.B.values() - B0.values()).norm() == 0.0);
}

TEST_CASE("ortho_optim solves the diagonal Brockett instance exactly") {
    // X = diag(1,2,3,4), D = diag(2,1): optimum 4 at span{e1, e2}.
    auto X = std::make_shared<Matrix>(Vector::LinSpaced(4, 1, 4).asDiagonal().toDenseMatrix());
    Vector D(2);
    D << 2, 1;
    ObjectiveSpec spec;
    spec.value_fn = [X, D](const Matrix& B) {
        return (B.transpose() * (*X) * B * D.asDiagonal()).trace();
    };
    spec.gradient_fn = [X, D](const Matrix& B) -> Matrix {
        return 2.0 * (*X) * B * D.asDiagonal();
    };
    SolverControl ctrl;
    ctrl.ftol = 1e-12;
    ctrl.gtol = 1e-8;
    ctrl.btol = 1e-12;
    ctrl.maxitr = 2000;
    const FitResult r = ortho_optim(random_stiefel(4, 2, 3), spec, ctrl);
    REQUIRE(r.fval == Catch::Approx(4.0).margin(1e-6));
    // Brute-force oracle over coordinate pair assignments confirms 4.
    Vector lam(4);
    lam << 1, 2, 3, 4;
    REQUIRE(oracle::brockett_bruteforce_min(lam, D) == Catch::Approx(4.0));
    const Subspace span12 = Subspace::from_matrix(Matrix::Identity(4, 2));
    REQUIRE(distance(span12, Subspace(r.B), DistanceMethod::dist) <= 1e-3);
}

TEST_CASE("ortho_optim keeps every accepted iterate feasible") {
    const BrockettInstance inst = brockett(30, 4, 51);
    SolverControl ctrl;
    ctrl.maxitr = 300;
    const FitResult r = ortho_optim(random_stiefel(30, 4, 52), inst.spec, ctrl);
    REQUIRE(r.max_orth_error <= 1e-10);
    REQUIRE(r.fval_trace.size() == static_cast<std::size_t>(r.iterations) + 1);
    REQUIRE(r.fval_trace.front() >= r.fval_trace.back());
}

TEST_CASE("the trace respects the non-monotone envelope") {
    const BrockettInstance inst = brockett(25, 3, 61);
    SolverControl ctrl;
    ctrl.ftol = 0;
    ctrl.gtol = 0;
    ctrl.btol = 0;
    ctrl.maxitr = 150;
    const FitResult r = ortho_optim(random_stiefel(25, 3, 62), inst.spec, ctrl);
    const auto& t = r.fval_trace;
    const int w = ctrl.nonmonotone_window;
    for (std::size_t k = 1; k < t.size(); ++k) {
        double ref = -1e300;
        for (std::size_t b = k >= static_cast<std::size_t>(w) ? k - w : 0; b < k; ++b)
            ref = std::max(ref, t[b]);
        REQUIRE(t[k] <= ref + 1e-12);
    }
}

TEST_CASE("maximize matches minimize of the negated objective") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal;
    Matrix X(60, 12);
    for (Index j = 0; j < X.cols(); ++j)
        for (Index i = 0; i < X.rows(); ++i) X(i, j) = normal(rng);
    auto gram = std::make_shared<Matrix>(X.transpose() * X);

    ObjectiveSpec maxspec;
    maxspec.value_fn = [gram](const Matrix& w) { return (w.transpose() * (*gram) * w)(0, 0); };
    maxspec.gradient_fn = [gram](const Matrix& w) -> Matrix { return 2.0 * (*gram) * w; };
    maxspec.maximize = true;

    ObjectiveSpec minspec;
    minspec.value_fn = [gram](const Matrix& w) { return -(w.transpose() * (*gram) * w)(0, 0); };
    minspec.gradient_fn = [gram](const Matrix& w) -> Matrix { return -2.0 * (*gram) * w; };

    SolverControl ctrl;
    ctrl.ftol = 1e-12;
    ctrl.gtol = 1e-9;
    ctrl.btol = 1e-12;
    ctrl.maxitr = 2000;
    const StiefelPoint w0 = random_stiefel(12, 1, 123);
    const FitResult a = ortho_optim(w0, maxspec, ctrl);
    const FitResult b = ortho_optim(w0, minspec, ctrl);
    REQUIRE(a.iterations == b.iterations);
    REQUIRE((a.B.values() - b.B.values()).norm() == 0.0);
    REQUIRE(a.fval == -b.fval);

    // And the maximizer finds the top eigenvector.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(*gram);
    Matrix top = eig.eigenvectors().col(11);
    REQUIRE(distance(Subspace(a.B), Subspace::from_matrix(top), DistanceMethod::dist) <= 1e-3);
}

TEST_CASE("ortho_optim rejects a non-finite initial objective") {
    ObjectiveSpec spec;
    spec.value_fn = [](const Matrix&) { return std::numeric_limits<double>::infinity(); };
    REQUIRE_THROWS_AS(ortho_optim(random_stiefel(3, 1, 1), spec), NonFiniteObjectiveError);
}
