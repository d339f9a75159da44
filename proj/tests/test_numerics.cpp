#include <doctest.h>

#include "homobs/numerics.hpp"
#include "homobs/rng.hpp"

using namespace homobs;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

Matrix random_symmetric(Rng& rng, std::size_t n) {
    return symmetrize(random_matrix(rng, n, n));
}

}  // namespace

TEST_CASE("expm basics") {
    CHECK((expm(Matrix::zeros(3, 3)) - Matrix::identity(3)).max_abs() == doctest::Approx(0.0));
    const Matrix d = Matrix::diag(Vector{1.0, 2.0});
    const Matrix e = expm(d);
    CHECK(e(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
    CHECK(e(1, 1) == doctest::Approx(std::exp(2.0)).epsilon(1e-14));
    CHECK(e(0, 1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(expm(Matrix(2, 3)), DimensionError);
}

TEST_CASE("expm satisfies the one-parameter group law on random generators") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix g = random_matrix(rng, 4, 4);
        const double s = rng.uniform_sym(2.0);
        const double t = rng.uniform_sym(2.0);
        const Matrix lhs = expm(g * s) * expm(g * t);
        const Matrix rhs = expm(g * (s + t));
        CHECK((lhs - rhs).frobenius_norm() <= 1e-10 * std::max(1.0, rhs.frobenius_norm()));
    }
}

TEST_CASE("sym_eigvals on simple matrices") {
    const Vector w = sym_eigvals(Matrix::diag(Vector{3.0, 1.0, 2.0}));
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[1] == doctest::Approx(2.0));
    CHECK(w[2] == doctest::Approx(3.0));
    const Vector wi = sym_eigvals(Matrix::identity(4));
    for (std::size_t i = 0; i < 4; ++i) CHECK(wi[i] == doctest::Approx(1.0));
    CHECK_THROWS_AS(sym_eigvals(Matrix(2, 3)), DimensionError);
}

TEST_CASE("sym_eig reconstructs trace and Frobenius norm") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix s = random_symmetric(rng, 6);
        const SymEig e = sym_eig(s);
        double tr = 0.0, fr = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            tr += e.values[i];
            fr += e.values[i] * e.values[i];
        }
        CHECK(tr == doctest::Approx(s.trace()).epsilon(1e-10));
        CHECK(std::sqrt(fr) == doctest::Approx(s.frobenius_norm()).epsilon(1e-10));
        // residual S v = lambda v
        for (std::size_t j = 0; j < 6; ++j) {
            const Vector v = e.vectors.col(j);
            CHECK((s * v - e.values[j] * v).norm() <= 1e-10 * std::max(1.0, s.frobenius_norm()));
        }
    }
}

TEST_CASE("solve_linear basics and residual") {
    const Vector b{2.0, 8.0};
    const Vector x = solve_linear(Matrix::diag(Vector{2.0, 4.0}), b);
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(2.0));
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = random_matrix(rng, 5, 5) + Matrix::identity(5) * 4.0;
        Vector rhs(5);
        for (auto& v : rhs) v = rng.normal();
        const Vector sol = solve_linear(a, rhs);
        CHECK((a * sol - rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
    }
    Matrix singular(2, 2);
    singular(0, 0) = 1.0;
    singular(0, 1) = 1.0;
    singular(1, 0) = 1.0;
    singular(1, 1) = 1.0 + 1e-15;
    CHECK_THROWS_AS(solve_linear(singular, Vector{1.0, 1.0}), SingularityError);
}

TEST_CASE("least_squares: exact, overdetermined, rank-deficient") {
    Rng rng(5);
    const Matrix a = random_matrix(rng, 4, 4) + Matrix::identity(4) * 3.0;
    Vector xs(4);
    for (auto& v : xs) v = rng.normal();
    const Vector x1 = least_squares(a, a * xs);
    CHECK((x1 - xs).norm() <= 1e-10 * std::max(1.0, xs.norm()));

    const Matrix over = vstack(a, a);  // consistent overdetermined
    const Vector x2 = least_squares(over, concat(a * xs, a * xs));
    CHECK((x2 - xs).norm() <= 1e-10 * std::max(1.0, xs.norm()));

    const Vector x3 = least_squares(Matrix::zeros(3, 3), Vector(3));
    CHECK(x3.norm() == 0.0);

    // minimum-norm solution for a wide system
    Matrix wide(1, 2);
    wide(0, 0) = 1.0;
    wide(0, 1) = 1.0;
    const Vector x4 = least_squares(wide, Vector{2.0});
    CHECK(x4[0] == doctest::Approx(1.0));
    CHECK(x4[1] == doctest::Approx(1.0));
}

TEST_CASE("signed_power") {
    CHECK(signed_power(0.0, 0.8333) == 0.0);
    CHECK(signed_power(-8.0, 1.0 / 3.0) == doctest::Approx(-2.0));
    CHECK(signed_power(4.0, 0.5) == doctest::Approx(2.0));
    CHECK_THROWS_AS(signed_power(1.0, 0.0), ParameterError);
    CHECK_THROWS_AS(signed_power(1.0, -1.0), ParameterError);
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const double v = rng.uniform_sym(10.0);
        const double a = 0.1 + 3.0 * rng.uniform01();
        CHECK(signed_power(-v, a) == doctest::Approx(-signed_power(v, a)));
    }
}

TEST_CASE("is_pd") {
    CHECK(is_pd(Matrix::identity(3), 0.5));
    CHECK_FALSE(is_pd(Matrix::diag(Vector{1.0, -1.0}), 0.0));
    CHECK_FALSE(is_pd(Matrix::identity(2) * 2.0, 2.5));
}

TEST_CASE("solve_linear round-trips random well-conditioned systems") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_matrix(rng, 6, 6) + Matrix::identity(6) * 5.0;
        Vector x(6);
        for (auto& v : x) v = rng.normal();
        const Vector back = solve_linear(a, a * x);
        CHECK((back - x).norm() <= 1e-8 * (1.0 + x.norm()));
    }
}

TEST_CASE("svd reconstructs and ranks") {
    Rng rng(17);
    const Matrix a = random_matrix(rng, 5, 3);
    const Svd d = svd(a);
    Matrix rec(5, 3);
    for (std::size_t l = 0; l < d.sigma.size(); ++l)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 3; ++j) rec(i, j) += d.sigma[l] * d.u(i, l) * d.v(j, l);
    CHECK((rec - a).frobenius_norm() <= 1e-10 * std::max(1.0, a.frobenius_norm()));
    CHECK(numeric_rank(a) == 3);
    CHECK(numeric_rank(Matrix::zeros(4, 2)) == 0);
    Matrix rank1 = outer(Vector{1.0, 2.0, 3.0}, Vector{4.0, 5.0});
    CHECK(numeric_rank(rank1) == 1);
}

TEST_CASE("is_anti_hurwitz") {
    CHECK(is_anti_hurwitz(Matrix::identity(3)));
    CHECK(is_anti_hurwitz(Matrix::diag(Vector{1.0, 2.0 / 3.0, 1.0 / 3.0})));
    CHECK_FALSE(is_anti_hurwitz(Matrix::diag(Vector{1.0, -1.0})));
    CHECK_FALSE(is_anti_hurwitz(-Matrix::identity(2)));
    Matrix rot{{0.0, 1.0}, {-1.0, 0.0}};  // purely imaginary pair
    CHECK_FALSE(is_anti_hurwitz(rot));
    // spectral abscissa helper: eig(-diag(2,3)) real parts <= -2
    CHECK(spectral_abscissa_below(Matrix::diag(Vector{-2.0, -3.0}), 1.5));
    CHECK_FALSE(spectral_abscissa_below(Matrix::diag(Vector{-2.0, -3.0}), 2.5));
}

TEST_CASE("sqrtm_spd squares back") {
    Rng rng(21);
    Matrix p = random_matrix(rng, 4, 4);
    p = p * p.transpose() + Matrix::identity(4);
    const Matrix r = sqrtm_spd(p);
    CHECK((r * r - p).frobenius_norm() <= 1e-10 * p.frobenius_norm());
}
