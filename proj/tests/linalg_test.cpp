#include <doctest.h>

#include <cmath>

#include "sampsd/errors.hpp"
#include "sampsd/linalg.hpp"
#include "sampsd/rng.hpp"

using namespace sampsd;

namespace {

Matrix random_spd(std::size_t n, Rng& rng) {
    Matrix b(n, n);
    for (double& v : b.data) v = rng.normal();
    Matrix a = matmul_tn(b, b);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.1;
    return a;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Matrix reconstruct(const EigenDecomposition& eig) {
    const std::size_t n = eig.eigenvalues.size();
    Matrix scaled(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            scaled(i, k) = eig.eigenvectors(i, k) * eig.eigenvalues[k];
    return matmul_nt(scaled, eig.eigenvectors);
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("sym_eig identity") {
    const auto eig = sym_eig(Matrix::identity(3));
    for (double lam : eig.eigenvalues) CHECK(lam == doctest::Approx(1.0).epsilon(1e-12));
    // any orthonormal basis is fine; verify orthonormality
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < 3; ++r)
                d += eig.eigenvectors(r, i) * eig.eigenvectors(r, j);
            CHECK(std::abs(d - (i == j ? 1.0 : 0.0)) < 1e-9);
        }
}

TEST_CASE("sym_eig diagonal") {
    Matrix a(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 1.0;
    const auto eig = sym_eig(a);
    CHECK(eig.eigenvalues[0] == doctest::Approx(4.0));
    CHECK(eig.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(std::abs(eig.eigenvectors(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(eig.eigenvectors(1, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstruction oracle on seeded SPD") {
    Rng rng(42);
    const Matrix a = random_spd(8, rng);
    const auto eig = sym_eig(a);
    double max_abs = 0.0;
    for (double v : a.data) max_abs = std::max(max_abs, std::abs(v));
    CHECK(max_abs_diff(reconstruct(eig), a) <= 1e-7 * max_abs);

    // eigenvalues descending, eigenvectors orthonormal
    for (std::size_t i = 1; i < eig.eigenvalues.size(); ++i)
        CHECK(eig.eigenvalues[i - 1] >= eig.eigenvalues[i]);
    for (std::size_t i = 0; i < 8; ++i) {
        double nrm = 0.0;
        for (std::size_t r = 0; r < 8; ++r) nrm += eig.eigenvectors(r, i) * eig.eigenvectors(r, i);
        CHECK(std::abs(std::sqrt(nrm) - 1.0) < 1e-9);
        for (std::size_t j = i + 1; j < 8; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < 8; ++r)
                d += eig.eigenvectors(r, i) * eig.eigenvectors(r, j);
            CHECK(std::abs(d) < 1e-7);
        }
    }
}

TEST_CASE("sym_eig rejects bad input") {
    Matrix a(2, 2);
    a(0, 1) = 1.0;  // asymmetric
    CHECK_THROWS_AS(sym_eig(a), value_error);
    Matrix b(2, 2);
    b(0, 0) = std::nan("");
    b(1, 1) = 1.0;
    CHECK_THROWS_AS(sym_eig(b), value_error);
}

TEST_CASE("inv_sqrt diagonal and identity") {
    Matrix a(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 1.0;
    const Matrix b = inv_sqrt(a, 1e-6);
    CHECK(b(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(b(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(b(0, 1)) < 1e-10);

    CHECK(max_abs_diff(inv_sqrt(Matrix::identity(4), 1e-6), Matrix::identity(4)) < 1e-10);
}

TEST_CASE("inv_sqrt rank-deficient uses the floor") {
    Matrix a(2, 2);
    a(0, 0) = 9.0;
    const Matrix b = inv_sqrt(a, 1e-6);
    CHECK(b(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(b(1, 1) == doctest::Approx(1e3).epsilon(1e-10));

    // B * A * B is the projector onto span(A) up to floor-induced error.
    const Matrix bab = matmul(matmul(b, a), b);
    Matrix projector(2, 2);
    projector(0, 0) = 1.0;
    CHECK(max_abs_diff(bab, projector) < 1e-6);
}

TEST_CASE("inv_sqrt restricted to eigenvalues above the floor is the true inverse sqrt") {
    Rng rng(7);
    const Matrix a = random_spd(6, rng);
    const Matrix b = inv_sqrt(a, 1e-6);
    const Matrix bab = matmul(matmul(b, a), b);
    CHECK(max_abs_diff(bab, Matrix::identity(6)) < 1e-6);
}

TEST_CASE("top_singular_directions rank-1 case") {
    Rng rng(3);
    std::vector<double> u = {0.6, 0.0, -0.8};
    Matrix x(5, 3);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = (static_cast<double>(i) - 2.0) * u[j];
    const Matrix v = top_singular_directions(x, 1, rng);
    double d = 0.0;
    for (std::size_t j = 0; j < 3; ++j) d += v(j, 0) * u[j];
    CHECK(std::abs(std::abs(d) - 1.0) < 1e-9);
}

TEST_CASE("top_singular_directions isotropic noise gives an orthonormal pair") {
    Rng rng(11);
    Matrix x(200, 2);
    for (double& v : x.data) v = rng.normal();
    // column-center
    const auto mu = column_means(x);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < 2; ++j) x(i, j) -= mu[j];
    const Matrix v = top_singular_directions(x, 2, rng.stream("start"));
    double n0 = 0.0, n1 = 0.0, cross = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
        n0 += v(j, 0) * v(j, 0);
        n1 += v(j, 1) * v(j, 1);
        cross += v(j, 0) * v(j, 1);
    }
    CHECK(std::abs(n0 - 1.0) < 1e-9);
    CHECK(std::abs(n1 - 1.0) < 1e-9);
    CHECK(std::abs(cross) < 1e-7);
}

TEST_CASE("top_singular_directions matches the gram eigendecomposition oracle") {
    Rng rng(17);
    Matrix x(50, 10);
    for (double& v : x.data) v = rng.normal();
    const auto mu = column_means(x);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < 10; ++j) x(i, j) -= mu[j];

    const Matrix v = top_singular_directions(x, 3, rng.stream("start"));
    const auto oracle = sym_eig(matmul_tn(x, x));
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(std::abs(v(j, k) - oracle.eigenvectors(j, k)) < 1e-6);
}

TEST_CASE("top_singular_directions dimension check") {
    Rng rng(1);
    Matrix x(3, 2);
    CHECK_THROWS_AS(top_singular_directions(x, 3, rng), dimension_error);
}

TEST_CASE("top_singular_directions is deterministic given the seed") {
    Rng rng(23);
    Matrix x(40, 6);
    for (double& v : x.data) v = rng.normal();
    const Matrix a = top_singular_directions(x, 2, Rng(99));
    const Matrix b = top_singular_directions(x, 2, Rng(99));
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("pca_fit line in 3-D") {
    Rng rng(5);
    std::vector<double> dir = {1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0};
    Matrix x(60, 3);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double t = rng.normal();
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = 5.0 + t * dir[j];
    }
    const PcaResult pca = pca_fit(x, 0.95, 3);
    CHECK(pca.components.cols == 1);
    CHECK_FALSE(pca.degenerate);
    double d = 0.0;
    for (std::size_t j = 0; j < 3; ++j) d += pca.components(j, 0) * dir[j];
    CHECK(std::abs(std::abs(d) - 1.0) < 1e-9);
}

TEST_CASE("pca_fit isotropic keeps both dimensions at target 1.0") {
    Rng rng(9);
    Matrix x(300, 2);
    for (double& v : x.data) v = rng.normal();
    const PcaResult pca = pca_fit(x, 1.0, 2);
    CHECK(pca.components.cols == 2);
}

TEST_CASE("pca_fit projected variance fractions match the eigenvalue oracle") {
    Rng rng(31);
    Matrix x(200, 16);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            x(i, j) = rng.normal() * (1.0 + static_cast<double>(j % 4) * 2.0);

    const PcaResult pca = pca_fit(x, 1.0, 16);
    REQUIRE(pca.components.cols == 16);

    // project and compare per-axis sample variance against eigenvalues
    const auto mu = column_means(x);
    Matrix centered = x;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < 16; ++j) centered(i, j) -= mu[j];
    const Matrix proj = matmul(centered, pca.components);

    double total_eig = 0.0;
    for (double lam : pca.eigenvalues) total_eig += lam;
    for (std::size_t k = 0; k < 16; ++k) {
        double var = 0.0;
        for (std::size_t i = 0; i < proj.rows; ++i) var += proj(i, k) * proj(i, k);
        var /= static_cast<double>(proj.rows - 1);
        CHECK(std::abs(var / total_eig - pca.eigenvalues[k] / total_eig) < 1e-8);
    }
}

TEST_CASE("pca_fit zero-variance input degenerates to one fixed axis") {
    Matrix x(10, 4);
    for (double& v : x.data) v = 3.25;
    const PcaResult pca = pca_fit(x, 0.95, 4);
    CHECK(pca.components.cols == 1);
    CHECK(pca.degenerate);
    CHECK(pca.components(0, 0) == 1.0);
}

TEST_CASE("pca_fit columns are orthonormal") {
    Rng rng(77);
    Matrix x(100, 8);
    for (double& v : x.data) v = rng.uniform();
    const PcaResult pca = pca_fit(x, 1.0, 8);
    for (std::size_t i = 0; i < pca.components.cols; ++i)
        for (std::size_t j = 0; j < pca.components.cols; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < 8; ++r) d += pca.components(r, i) * pca.components(r, j);
            CHECK(std::abs(d - (i == j ? 1.0 : 0.0)) < 1e-7);
        }
}

TEST_CASE("matmul shapes and transpose identities") {
    Rng rng(2);
    Matrix a(3, 4), b(4, 2);
    for (double& v : a.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();
    const Matrix c = matmul(a, b);
    CHECK(c.rows == 3);
    CHECK(c.cols == 2);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), c) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), c) < 1e-12);
    CHECK_THROWS_AS(matmul(b, a), dimension_error);
}

}
