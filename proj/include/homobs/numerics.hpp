#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "homobs/matrix.hpp"

namespace homobs {

/// Central tolerance table. Defaults per module contracts; override via config.
struct Tolerances {
    double residual = 1e-8;        // linear-solve / homogenization residual scale
    double symmetry = 1e-10;       // accepted asymmetry before symmetrizing
    double pd_margin = 1e-9;       // default strict-definiteness margin for checks
    double condition_limit = 1e12; // condition estimate above this counts as singular
    double rank_rel = 1e-9;        // singular values below rank_rel * s_max count as zero
    double hom_norm_residual = 1e-12;
};

inline Tolerances& default_tolerances() {
    static Tolerances t;
    return t;
}

/// |v|^a * sign(v), the odd continuous power. Requires a > 0.
inline double signed_power(double v, double a) {
    if (!(a > 0.0)) throw ParameterError("signed_power: exponent must be positive");
    if (v == 0.0) return 0.0;
    return std::copysign(std::pow(std::fabs(v), a), v);
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// Returns eigenvalues ascending; columns of V are the matching eigenvectors.
inline void jacobi_eig(Matrix a, Vector& w, Matrix& v) {
    const std::size_t n = a.rows();
    v = Matrix::identity(n);
    if (n == 0) {
        w = Vector();
        return;
    }
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off <= 1e-300) break;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(a(i, i)));
        if (std::sqrt(off) <= 1e-16 * std::max(scale, 1.0) && sweep > 0) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double apj = a(p, j), aqj = a(q, j);
                    a(p, j) = c * apj - s * aqj;
                    a(q, j) = s * apj + c * aqj;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    w = Vector(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = a(i, i);
    // sort ascending, permuting eigenvector columns along
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return w[i] < w[j]; });
    Vector ws(n);
    Matrix vs(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        ws[j] = w[idx[j]];
        for (std::size_t i = 0; i < n; ++i) vs(i, j) = v(i, idx[j]);
    }
    w = std::move(ws);
    v = std::move(vs);
}

}  // namespace detail

struct SymEig {
    Vector values;   // ascending
    Matrix vectors;  // columns match values
};

/// Eigendecomposition of a (nearly) symmetric matrix; symmetrizes internally.
inline SymEig sym_eig(const Matrix& s, const Tolerances& tol = default_tolerances()) {
    if (!s.square()) throw DimensionError("sym_eig: matrix not square");
    const double asym = (s - s.transpose()).max_abs();
    if (asym > tol.symmetry * std::max(1.0, s.max_abs()))
        throw ParameterError("sym_eig: input not symmetric within tolerance");
    SymEig out;
    detail::jacobi_eig(symmetrize(s), out.values, out.vectors);
    return out;
}

/// Eigenvalues of a symmetric matrix, nondecreasing.
inline Vector sym_eigvals(const Matrix& s, const Tolerances& tol = default_tolerances()) {
    return sym_eig(s, tol).values;
}

/// True iff lambda_min((S+S^T)/2) > margin.
inline bool is_pd(const Matrix& s, double margin) {
    if (!s.square()) throw DimensionError("is_pd: matrix not square");
    Vector w;
    Matrix v;
    detail::jacobi_eig(symmetrize(s), w, v);
    return w.size() == 0 || w[0] > margin;
}

namespace detail {

struct Lu {
    Matrix lu;
    std::vector<std::size_t> perm;
    bool singular = false;
};

inline Lu lu_factor(Matrix a) {
    const std::size_t n = a.rows();
    Lu f;
    f.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a(col, col));
        for (std::size_t i = col + 1; i < n; ++i) {
            const double v = std::fabs(a(i, col));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best == 0.0) {
            f.singular = true;
            f.lu = std::move(a);
            return f;
        }
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
            std::swap(f.perm[col], f.perm[piv]);
        }
        for (std::size_t i = col + 1; i < n; ++i) {
            a(i, col) /= a(col, col);
            const double l = a(i, col);
            if (l == 0.0) continue;
            for (std::size_t j = col + 1; j < n; ++j) a(i, j) -= l * a(col, j);
        }
    }
    f.lu = std::move(a);
    return f;
}

inline Vector lu_solve(const Lu& f, const Vector& b) {
    const std::size_t n = f.lu.rows();
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= f.lu(ii, j) * x[j];
        x[ii] /= f.lu(ii, ii);
    }
    return x;
}

inline double one_norm(const Matrix& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) s += std::fabs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace detail

/// Solve A x = b (A square) by LU with partial pivoting.
/// Throws SingularityError when the 1-norm condition estimate exceeds the limit.
inline Vector solve_linear(const Matrix& a, const Vector& b,
                           const Tolerances& tol = default_tolerances()) {
    if (!a.square()) throw DimensionError("solve_linear: matrix not square");
    if (a.rows() != b.size()) throw DimensionError("solve_linear: rhs size mismatch");
    const std::size_t n = a.rows();
    auto f = detail::lu_factor(a);
    if (f.singular) throw SingularityError("solve_linear: exactly singular matrix");
    // condition estimate via explicit inverse columns (matrices here are small)
    Matrix inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vector e(n);
        e[j] = 1.0;
        Vector c = detail::lu_solve(f, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = c[i];
    }
    const double cond = detail::one_norm(a) * detail::one_norm(inv);
    if (!(cond < tol.condition_limit))
        throw SingularityError("solve_linear: condition estimate " + std::to_string(cond) +
                               " exceeds limit");
    return detail::lu_solve(f, b);
}

/// Solve A X = B column-wise.
inline Matrix solve_linear(const Matrix& a, const Matrix& b,
                           const Tolerances& tol = default_tolerances()) {
    if (a.rows() != b.rows()) throw DimensionError("solve_linear: rhs rows mismatch");
    Matrix x(b.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        Vector s = solve_linear(a, b.col(j), tol);
        for (std::size_t i = 0; i < b.rows(); ++i) x(i, j) = s[i];
    }
    return x;
}

struct Svd {
    Matrix u;        // m x r
    Vector sigma;    // r, descending
    Matrix v;        // n x r
};

/// Thin SVD by one-sided Jacobi orthogonalization (adequate for the small
/// dense systems this library handles).
inline Svd svd(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const bool tall = m >= n;
    Matrix w = tall ? a : a.transpose();  // work on the tall orientation
    const std::size_t r = w.cols();
    Matrix v = Matrix::identity(r);
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < r; ++p) {
            for (std::size_t q = p + 1; q < r; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < w.rows(); ++i) {
                    app += w(i, p) * w(i, p);
                    aqq += w(i, q) * w(i, q);
                    apq += w(i, p) * w(i, q);
                }
                if (std::fabs(apq) <= 1e-30 + 1e-15 * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < w.rows(); ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < r; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    Vector sig(r);
    Matrix u(w.rows(), r);
    for (std::size_t j = 0; j < r; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) s += w(i, j) * w(i, j);
        sig[j] = std::sqrt(s);
        if (sig[j] > 0.0)
            for (std::size_t i = 0; i < w.rows(); ++i) u(i, j) = w(i, j) / sig[j];
    }
    // order descending
    std::vector<std::size_t> idx(r);
    for (std::size_t i = 0; i < r; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });
    Svd out;
    out.sigma = Vector(r);
    out.u = Matrix(w.rows(), r);
    out.v = Matrix(r, r);
    for (std::size_t j = 0; j < r; ++j) {
        out.sigma[j] = sig[idx[j]];
        for (std::size_t i = 0; i < w.rows(); ++i) out.u(i, j) = u(i, idx[j]);
        for (std::size_t i = 0; i < r; ++i) out.v(i, j) = v(i, idx[j]);
    }
    if (!tall) std::swap(out.u, out.v);
    return out;
}

/// Minimum-norm least-squares solution of A x = b.
inline Vector least_squares(const Matrix& a, const Vector& b,
                            const Tolerances& tol = default_tolerances()) {
    if (a.rows() != b.size()) throw DimensionError("least_squares: rhs size mismatch");
    Svd d = svd(a);
    const double smax = d.sigma.size() ? d.sigma[0] : 0.0;
    const double cutoff = tol.rank_rel * std::max(smax, 1e-300);
    Vector x(a.cols());
    for (std::size_t j = 0; j < d.sigma.size(); ++j) {
        if (d.sigma[j] <= cutoff) continue;
        double uj_b = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) uj_b += d.u(i, j) * b[i];
        const double coef = uj_b / d.sigma[j];
        for (std::size_t i = 0; i < a.cols(); ++i) x[i] += coef * d.v(i, j);
    }
    return x;
}

/// Numerical rank from singular values with relative threshold.
inline std::size_t numeric_rank(const Matrix& a, const Tolerances& tol = default_tolerances()) {
    Svd d = svd(a);
    const double smax = d.sigma.size() ? d.sigma[0] : 0.0;
    std::size_t r = 0;
    for (std::size_t j = 0; j < d.sigma.size(); ++j)
        if (d.sigma[j] > tol.rank_rel * std::max(smax, 1e-300)) ++r;
    return r;
}

/// Matrix exponential by scaling-and-squaring with the order-13 Pade approximant.
inline Matrix expm(const Matrix& m) {
    if (!m.square()) throw DimensionError("expm: matrix not square");
    const std::size_t n = m.rows();
    if (n == 0) return m;
    static const double theta13 = 5.371920351148152;
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double nrm = detail::one_norm(m);
    int squarings = 0;
    Matrix a = m;
    if (nrm > theta13) {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
        a *= std::pow(2.0, -squarings);
    }
    const Matrix i = Matrix::identity(n);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    Matrix u = a * (a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9]) + a6 * b[7] + a4 * b[5] +
                    a2 * b[3] + i * b[1]);
    Matrix v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8]) + a6 * b[6] + a4 * b[4] + a2 * b[2] +
               i * b[0];
    // solve (V - U) X = (V + U)
    Matrix num = v + u;
    Matrix den = v - u;
    Matrix x(n, n);
    auto f = detail::lu_factor(den);
    if (f.singular) throw NumericalError("expm: Pade denominator singular");
    for (std::size_t j = 0; j < n; ++j) {
        Vector c = detail::lu_solve(f, num.col(j));
        for (std::size_t ii = 0; ii < n; ++ii) x(ii, j) = c[ii];
    }
    for (int s = 0; s < squarings; ++s) x = x * x;
    return x;
}

/// Symmetric positive definite square root via eigendecomposition.
inline Matrix sqrtm_spd(const Matrix& p, const Tolerances& tol = default_tolerances()) {
    SymEig e = sym_eig(p, tol);
    if (e.values.size() && e.values[0] <= 0.0)
        throw DefinitenessError("sqrtm_spd: matrix not positive definite");
    const std::size_t n = p.rows();
    Matrix out(n, n);
    for (std::size_t l = 0; l < n; ++l) {
        const double s = std::sqrt(e.values[l]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) += s * e.vectors(i, l) * e.vectors(j, l);
    }
    return out;
}

/// All eigenvalues of G have real part > 0, decided through the Lyapunov
/// equation G^T X + X G = I: G is anti-Hurwitz iff the solution exists and
/// is positive definite.
inline bool is_anti_hurwitz(const Matrix& g) {
    if (!g.square()) throw DimensionError("is_anti_hurwitz: matrix not square");
    const std::size_t n = g.rows();
    // vectorized row-major: d/dX[(G^T X + X G)]_{ij} over x_{pq}
    Matrix sys(n * n, n * n);
    Vector rhs(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t row = i * n + j;
            rhs[row] = (i == j) ? 1.0 : 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                sys(row, p * n + j) += g(p, i);  // (G^T X)_{ij} = sum_p g_{pi} x_{pj}
                sys(row, i * n + p) += g(p, j);  // (X G)_{ij}  = sum_p x_{ip} g_{pj}
            }
        }
    }
    Vector x;
    try {
        x = solve_linear(sys, rhs);
    } catch (const SingularityError&) {
        return false;  // spectrum touches or straddles the imaginary axis
    }
    Matrix xm(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) xm(i, j) = x[i * n + j];
    return is_pd(xm, 1e-12 * std::max(1.0, xm.max_abs()));
}

/// max Re lambda(M) <= -c, via anti-Hurwitz of -(M + c I).
inline bool spectral_abscissa_below(const Matrix& m, double c) {
    return is_anti_hurwitz(-(m + Matrix::identity(m.rows()) * c));
}

}  // namespace homobs
