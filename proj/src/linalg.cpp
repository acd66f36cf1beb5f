#include "sampsd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sampsd/errors.hpp"

namespace sampsd {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw dimension_error("matmul: inner dimensions disagree");
    Matrix c(a.rows, b.cols);
    // i-k-j order: the inner loop is a contiguous axpy, which vectorizes
    // without reassociating any per-element sum.
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* crow = c.row_ptr(i);
        const double* arow = a.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw dimension_error("matmul_tn: inner dimensions disagree");
    Matrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw dimension_error("matmul_nt: inner dimensions disagree");
    return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols != x.size()) throw dimension_error("matvec: dimension mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw dimension_error("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> mu(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* row = x.row_ptr(i);
        for (std::size_t j = 0; j < x.cols; ++j) mu[j] += row[j];
    }
    const double inv = x.rows > 0 ? 1.0 / static_cast<double>(x.rows) : 0.0;
    for (double& v : mu) v *= inv;
    return mu;
}

Matrix sample_covariance(const Matrix& x) {
    if (x.rows < 2) throw dimension_error("sample_covariance: need at least 2 rows");
    const std::vector<double> mu = column_means(x);
    Matrix centered(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) centered(i, j) = x(i, j) - mu[j];
    Matrix cov = matmul_tn(centered, centered);
    const double inv = 1.0 / static_cast<double>(x.rows - 1);
    for (double& v : cov.data) v *= inv;
    return cov;
}

namespace {

// Fix sign so the first component with magnitude > 1e-12 is positive.
void fix_sign(double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(v[i]) > 1e-12) {
            if (v[i] < 0.0)
                for (std::size_t j = 0; j < n; ++j) v[j] = -v[j];
            return;
        }
    }
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& a) {
    if (a.rows != a.cols) throw dimension_error("sym_eig: matrix not square");
    if (!a.all_finite()) throw value_error("sym_eig: non-finite entries");
    const std::size_t n = a.rows;
    double max_abs = 0.0;
    for (double v : a.data) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-9 * std::max(1.0, max_abs))
                throw value_error("sym_eig: symmetry violation");

    Matrix w = a;  // working copy, diagonalized in place
    Matrix v = Matrix::identity(n);

    // Cyclic Jacobi sweeps. Feature dims here are <= 128, so this converges
    // in a handful of sweeps at negligible cost.
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += w(p, q) * w(p, q);
        if (off <= 1e-28 * std::max(1.0, max_abs * max_abs)) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = w(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = w(p, p);
                const double aqq = w(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    const double wip = w(i, p);
                    const double wiq = w(i, q);
                    w(i, p) = c * wip - s * wiq;
                    w(i, q) = s * wip + c * wiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double wpi = w(p, i);
                    const double wqi = w(q, i);
                    w(p, i) = c * wpi - s * wqi;
                    w(q, i) = s * wpi + c * wqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p);
                    const double viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return w(i, i) > w(j, j); });

    EigenDecomposition out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = w(order[k], order[k]);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = v(i, order[k]);
        fix_sign(col.data(), n);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = col[i];
    }
    return out;
}

Matrix inv_sqrt(const Matrix& a, double floor) {
    if (floor <= 0.0) throw value_error("inv_sqrt: floor must be positive");
    if (!a.all_finite()) throw value_error("inv_sqrt: non-finite entries");
    EigenDecomposition eig = sym_eig(a);
    const std::size_t n = a.rows;
    Matrix scaled(n, n);  // V * diag(1/sqrt(max(lambda, floor)))
    for (std::size_t k = 0; k < n; ++k) {
        const double inv = 1.0 / std::sqrt(std::max(eig.eigenvalues[k], floor));
        for (std::size_t i = 0; i < n; ++i) scaled(i, k) = eig.eigenvectors(i, k) * inv;
    }
    Matrix out = matmul_nt(scaled, eig.eigenvectors);
    // Symmetrize away rounding noise.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = m;
            out(j, i) = m;
        }
    return out;
}

Matrix top_singular_directions(const Matrix& x, std::size_t k, Rng rng) {
    if (k == 0) throw dimension_error("top_singular_directions: k must be >= 1");
    if (k > std::min(x.rows, x.cols))
        throw dimension_error("top_singular_directions: k exceeds min(n, d)");
    const std::size_t d = x.cols;
    const Matrix gram = matmul_tn(x, x);

    Matrix dirs(d, k);
    std::vector<std::vector<double>> found;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v(d);
        for (auto& e : v) e = rng.normal();
        // Project out already-found directions and normalize.
        auto orthonormalize = [&](std::vector<double>& u) {
            for (const auto& f : found) {
                const double proj = dot(u, f);
                for (std::size_t i = 0; i < d; ++i) u[i] -= proj * f[i];
            }
            const double nrm = norm2(u);
            if (nrm > 1e-300)
                for (auto& e : u) e /= nrm;
        };
        orthonormalize(v);

        for (int iter = 0; iter < 200; ++iter) {
            std::vector<double> next = matvec(gram, v);
            orthonormalize(next);
            double delta = 0.0;
            // Compare up to sign.
            const double align = dot(next, v) >= 0.0 ? 1.0 : -1.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = next[i] - align * v[i];
                delta += diff * diff;
            }
            v = std::move(next);
            if (std::sqrt(delta) < 1e-10) break;
        }
        fix_sign(v.data(), d);
        for (std::size_t i = 0; i < d; ++i) dirs(i, c) = v[i];
        found.push_back(std::move(v));
    }
    return dirs;
}

PcaResult pca_fit(const Matrix& x, double variance_target, std::size_t max_dim) {
    if (x.rows < 2) throw dimension_error("pca_fit: need at least 2 rows");
    if (variance_target <= 0.0 || variance_target > 1.0)
        throw value_error("pca_fit: variance_target must be in (0, 1]");
    if (max_dim == 0) throw value_error("pca_fit: max_dim must be >= 1");

    PcaResult out;
    out.mean = column_means(x);
    const Matrix cov = sample_covariance(x);
    EigenDecomposition eig = sym_eig(cov);
    out.eigenvalues = eig.eigenvalues;

    double total = 0.0;
    for (double lam : eig.eigenvalues) total += std::max(lam, 0.0);
    const std::size_t d = x.cols;

    if (total <= 1e-300) {
        // Zero-variance data: one arbitrary fixed axis, flagged degenerate.
        out.components = Matrix(d, 1);
        out.components(0, 0) = 1.0;
        out.degenerate = true;
        return out;
    }

    std::size_t dprime = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        acc += std::max(eig.eigenvalues[i], 0.0);
        ++dprime;
        if (acc >= variance_target * total) break;
    }
    dprime = std::min({dprime, max_dim, d});
    if (dprime == 0) dprime = 1;

    out.components = Matrix(d, dprime);
    for (std::size_t j = 0; j < dprime; ++j)
        for (std::size_t i = 0; i < d; ++i) out.components(i, j) = eig.eigenvectors(i, j);
    return out;
}

}  // namespace sampsd
