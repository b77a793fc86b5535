#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "orthodr/stiefel.hpp"

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

Matrix random_orthogonal(Index d, unsigned seed) {
    return gram_schmidt(random_matrix(d, d, seed)).values();
}

} // namespace

TEST_CASE("gram_schmidt leaves an identity block untouched") {
    Matrix M = Matrix::Identity(5, 2);
    const StiefelPoint B = gram_schmidt(M);
    REQUIRE(B.values() == M);
}

TEST_CASE("gram_schmidt removes column scaling") {
    Matrix M(3, 2);
    M << 2, 0, 0, 3, 0, 0;
    Matrix expected(3, 2);
    expected << 1, 0, 0, 1, 0, 0;
    REQUIRE((gram_schmidt(M).values() - expected).norm() == 0.0);
}

TEST_CASE("gram_schmidt matches the hand-worked 3x2 example") {
    Matrix M(3, 2);
    M << 1, 1, 1, 0, 0, 0;
    const double s = 1.0 / std::sqrt(2.0);
    Matrix expected(3, 2);
    expected << s, s, s, -s, 0, 0;
    REQUIRE((gram_schmidt(M).values() - expected).norm() < 1e-15);
}

TEST_CASE("gram_schmidt names the rank-deficient column") {
    Matrix M(4, 3);
    M.col(0) = random_matrix(4, 1, 7);
    M.col(1) = 2.0 * M.col(0);   // dependent
    M.col(2) = random_matrix(4, 1, 8);
    try {
        gram_schmidt(M);
        FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
        REQUIRE(e.column() == 1);
    }
}

TEST_CASE("gram_schmidt output is feasible and spans the input") {
    for (unsigned seed = 1; seed <= 20; ++seed) {
        const Index p = 3 + seed % 6;
        const Index d = 1 + seed % 3;
        const Matrix M = random_matrix(p, std::min<Index>(d, p), seed);
        const StiefelPoint B = gram_schmidt(M);
        REQUIRE(B.orthogonality_error() <= 1e-10);
        // Same span: projections agree.
        const Matrix pm =
            M * (M.transpose() * M).ldlt().solve(M.transpose()).eval();
        const Matrix pb = B.values() * B.values().transpose();
        REQUIRE((pm - pb).norm() < 1e-9);
    }
}

TEST_CASE("StiefelPoint construction enforces the invariants") {
    REQUIRE_THROWS_AS(StiefelPoint(Matrix::Ones(3, 2)), ValidationError);
    REQUIRE_THROWS_AS(StiefelPoint(Matrix::Identity(2, 3)), DimensionError);
    Matrix bad = Matrix::Identity(3, 2);
    bad(0, 0) = std::nan("");
    REQUIRE_THROWS_AS(StiefelPoint(bad), ValidationError);
}

TEST_CASE("Subspace projection is symmetric idempotent") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
        const Subspace s = Subspace::from_matrix(random_matrix(6, 2, seed));
        const Matrix P = s.projection();
        REQUIRE((P - P.transpose()).norm() <= 1e-12);
        REQUIRE((P * P - P).norm() <= 1e-10);
    }
}

TEST_CASE("distance on identical spans is zero / one") {
    Matrix e1 = Matrix::Zero(2, 1);
    e1(0, 0) = 1.0;
    const Subspace s{StiefelPoint(e1)};
    REQUIRE(distance(s, s, DistanceMethod::dist) == 0.0);
    REQUIRE(distance(s, s, DistanceMethod::trace) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(distance(s, s, DistanceMethod::sine) <= 1e-12);
}

TEST_CASE("dist between the two axes of R^2 is sqrt(2)") {
    Matrix e1 = Matrix::Zero(2, 1), e2 = Matrix::Zero(2, 1);
    e1(0, 0) = 1.0;
    e2(1, 0) = 1.0;
    const Subspace s1{StiefelPoint(e1)}, s2{StiefelPoint(e2)};
    REQUIRE(distance(s1, s2, DistanceMethod::dist) ==
            Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("distance errors: mismatched p and canonical without x") {
    const Subspace a = Subspace::from_matrix(random_matrix(4, 2, 1));
    const Subspace b = Subspace::from_matrix(random_matrix(5, 2, 2));
    REQUIRE_THROWS_AS(distance(a, b, DistanceMethod::dist), DimensionError);
    const Subspace c = Subspace::from_matrix(random_matrix(4, 2, 3));
    REQUIRE_THROWS_AS(distance(a, c, DistanceMethod::canonical), MissingArgumentError);
}

TEST_CASE("distance metrics are symmetric and bounded") {
    const Matrix x = random_matrix(60, 5, 99);
    for (unsigned seed = 1; seed <= 8; ++seed) {
        const Subspace a = Subspace::from_matrix(random_matrix(5, 2, 2 * seed));
        const Subspace b = Subspace::from_matrix(random_matrix(5, 2, 2 * seed + 1));
        for (auto m : {DistanceMethod::dist, DistanceMethod::trace, DistanceMethod::sine}) {
            const double ab = distance(a, b, m);
            const double ba = distance(b, a, m);
            REQUIRE(ab == Catch::Approx(ba).margin(1e-12));
        }
        const double tr = distance(a, b, DistanceMethod::trace);
        REQUIRE((tr >= -1e-12 && tr <= 1.0 + 1e-12));
        const double cc = distance(a, b, DistanceMethod::canonical, &x);
        REQUIRE((cc >= 0.0 && cc <= 1.0));
        REQUIRE(cc == Catch::Approx(distance(b, a, DistanceMethod::canonical, &x)).margin(1e-10));
    }
}

TEST_CASE("all metrics are invariant under right-rotation of a basis") {
    const Matrix x = random_matrix(80, 6, 5);
    for (unsigned seed = 1; seed <= 6; ++seed) {
        const Subspace a = Subspace::from_matrix(random_matrix(6, 2, 3 * seed));
        const Subspace b = Subspace::from_matrix(random_matrix(6, 2, 3 * seed + 1));
        const Matrix Q = random_orthogonal(2, 3 * seed + 2);
        const Subspace a_rot{StiefelPoint(a.basis().values() * Q)};

        REQUIRE(distance(a, a_rot, DistanceMethod::dist) <= 1e-9);
        for (auto m : {DistanceMethod::dist, DistanceMethod::trace, DistanceMethod::sine})
            REQUIRE(distance(a, b, m) == Catch::Approx(distance(a_rot, b, m)).margin(1e-9));
        REQUIRE(distance(a, b, DistanceMethod::canonical, &x) ==
                Catch::Approx(distance(a_rot, b, DistanceMethod::canonical, &x)).margin(1e-9));
    }
}

TEST_CASE("sine distance relates to dist for equal dimensions") {
    // ||P1 - P2||_F^2 = 2 ||sin Theta||_F^2 when both spans have dim d.
    for (unsigned seed = 1; seed <= 6; ++seed) {
        const Subspace a = Subspace::from_matrix(random_matrix(7, 3, 10 + seed));
        const Subspace b = Subspace::from_matrix(random_matrix(7, 3, 20 + seed));
        const double d = distance(a, b, DistanceMethod::dist);
        const double s = distance(a, b, DistanceMethod::sine);
        REQUIRE(d == Catch::Approx(std::sqrt(2.0) * s).margin(1e-9));
    }
}
