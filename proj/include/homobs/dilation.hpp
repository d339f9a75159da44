#pragma once

#include <functional>

#include "homobs/numerics.hpp"
#include "homobs/rng.hpp"

namespace homobs {

/// Linear dilation d(s) = e^{s G} that is strictly monotone with respect to
/// the weighted Euclidean norm |x| = sqrt(x^T P x). Construction verifies the
/// monotonicity condition P G + G^T P > 0 and precomputes the growth bounds
///   alpha = max, beta = min eigenvalue of (1/2) P^{-1/2}(P G + G^T P) P^{-1/2},
/// which bracket |d(s)x| between e^{beta s}|x| and e^{alpha s}|x| for s >= 0.
class Dilation {
public:
    const Matrix& generator() const { return generator_; }
    const Matrix& norm_matrix() const { return norm_matrix_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    std::size_t dim() const { return generator_.rows(); }

    /// e^{s G}
    Matrix map(double s) const { return expm(generator_ * s); }

    /// sqrt(x^T P x)
    double weighted_norm(const Vector& x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < x.size(); ++j) acc += x[i] * norm_matrix_(i, j) * x[j];
        return std::sqrt(std::max(acc, 0.0));
    }

    friend Dilation make_dilation(const Matrix&, const Matrix&, const Tolerances&);

private:
    Matrix generator_;
    Matrix norm_matrix_;
    double alpha_ = 0.0;
    double beta_ = 0.0;
};

inline Dilation make_dilation(const Matrix& g, const Matrix& p,
                              const Tolerances& tol = default_tolerances()) {
    if (!g.square()) throw DimensionError("make_dilation: generator not square");
    if (p.rows() != g.rows() || p.cols() != g.cols())
        throw DimensionError("make_dilation: norm matrix shape mismatch");
    const double scale = std::max(1.0, p.max_abs());
    if ((p - p.transpose()).max_abs() > tol.symmetry * scale)
        throw DefinitenessError("make_dilation: norm matrix not symmetric");
    if (!is_pd(p, tol.pd_margin * scale))
        throw DefinitenessError("make_dilation: norm matrix not positive definite");
    const Matrix mono = sym2(p * g);
    if (!is_pd(mono, tol.pd_margin * std::max(1.0, mono.max_abs())))
        throw MonotonicityError("make_dilation: P G + G^T P not positive definite");
    Dilation d;
    d.generator_ = g;
    d.norm_matrix_ = p;
    const Matrix ph = sqrtm_spd(p, tol);
    const Matrix phi = solve_linear(ph, Matrix::identity(p.rows()), tol);
    const Vector w = sym_eigvals(symmetrize(phi * mono * phi), tol);
    d.beta_ = 0.5 * w[0];
    d.alpha_ = 0.5 * w[w.size() - 1];
    return d;
}

/// e^{s G_d} for a constructed dilation.
inline Matrix dilate(const Dilation& d, double s) { return d.map(s); }

namespace detail {

// |d(-s)x| and its s-derivative; the derivative is strictly negative thanks to
// the monotonicity condition, so the defining equation has a unique root.
inline std::pair<double, double> level_and_slope(const Dilation& d, const Vector& x, double s) {
    const Vector w = d.map(-s) * x;
    const double g = d.weighted_norm(w);
    const Matrix mono = sym2(d.norm_matrix() * d.generator());
    double q = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < w.size(); ++j) q += w[i] * mono(i, j) * w[j];
    const double slope = (g > 0.0) ? -q / (2.0 * g) : 0.0;
    return {g, slope};
}

}  // namespace detail

/// Canonical homogeneous norm: e^{s_x} with |d(-s_x) x| = 1; 0 at the origin.
inline double hom_norm(const Dilation& d, const Vector& x,
                       const Tolerances& tol = default_tolerances()) {
    if (x.size() != d.dim()) throw DimensionError("hom_norm: dimension mismatch");
    const double nx = d.weighted_norm(x);
    if (nx == 0.0) return 0.0;
    const double lx = std::log(nx);
    if (lx == 0.0) return 1.0;
    // bracket from the power-law growth bounds, then bisection + Newton
    double lo = std::min(lx / d.alpha(), lx / d.beta());
    double hi = std::max(lx / d.alpha(), lx / d.beta());
    lo -= 1e-12 * std::max(1.0, std::fabs(lo));
    hi += 1e-12 * std::max(1.0, std::fabs(hi));
    auto level = [&](double s) { return detail::level_and_slope(d, x, s).first - 1.0; };
    double flo = level(lo);
    double fhi = level(hi);
    int expand = 0;
    while (flo < 0.0 && expand++ < 60) {
        lo -= std::max(1.0, hi - lo);
        flo = level(lo);
    }
    expand = 0;
    while (fhi > 0.0 && expand++ < 60) {
        hi += std::max(1.0, hi - lo);
        fhi = level(hi);
    }
    if (flo < 0.0 || fhi > 0.0) throw NumericalError("hom_norm: failed to bracket the root");
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        if (level(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        auto [g, slope] = detail::level_and_slope(d, x, s);
        const double f = g - 1.0;
        if (std::fabs(f) <= tol.hom_norm_residual) return std::exp(s);
        if (slope == 0.0) break;
        double step = -f / slope;
        // keep Newton inside the bisection bracket
        double snew = s + step;
        if (snew < lo || snew > hi) snew = 0.5 * (lo + hi);
        if (level(snew) > 0.0)
            lo = std::min(snew, hi);
        else
            hi = std::max(snew, lo);
        s = snew;
    }
    throw NumericalError("hom_norm: Newton refinement did not reach tolerance");
}

/// Gradient of the canonical homogeneous norm away from the origin:
///   d|x|_d/dx = |x|_d * (P w)^T d(-ln|x|_d) / (w^T P G_d w),  w = d(-ln|x|_d) x.
inline Vector hom_norm_gradient(const Dilation& d, const Vector& x,
                                const Tolerances& tol = default_tolerances()) {
    if (x.size() != d.dim()) throw DimensionError("hom_norm_gradient: dimension mismatch");
    if (d.weighted_norm(x) == 0.0)
        throw ParameterError("hom_norm_gradient: undefined at the origin");
    const double hn = hom_norm(d, x, tol);
    const Matrix ds = d.map(-std::log(hn));
    const Vector w = ds * x;
    const Vector pw = d.norm_matrix() * w;
    const Vector gw = d.norm_matrix() * (d.generator() * w);
    double denom = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) denom += w[i] * gw[i];
    Vector grad(x.size());
    // row vector (P w)^T d(-ln|x|_d), transposed into a column
    for (std::size_t j = 0; j < x.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += pw[i] * ds(i, j);
        grad[j] = hn * s / denom;
    }
    return grad;
}

/// The K-infinity envelopes sigma_1 <= |x| <= sigma_2 as functions of |x|_d.
inline std::pair<double, double> sigma_bounds(const Dilation& d, double rho) {
    if (!(rho > 0.0)) throw ParameterError("sigma_bounds: argument must be positive");
    const double s1 = (rho <= 1.0) ? std::pow(rho, d.alpha()) : std::pow(rho, d.beta());
    const double s2 = (rho <= 1.0) ? std::pow(rho, d.beta()) : std::pow(rho, d.alpha());
    return {s1, s2};
}

using VectorField = std::function<Vector(const Vector&)>;

struct HomogeneityReport {
    double max_defect = 0.0;
    std::size_t samples = 0;
    double worst_s = 0.0;
};

/// Sample-based check of the symmetry f(d(s)x) = e^{nu s} d(s) f(x) with
/// seeded random x and s in [-2, 2]. Reports the worst relative defect.
inline HomogeneityReport check_homogeneity(const VectorField& f, const Dilation& d, double nu,
                                           std::size_t samples, std::uint64_t seed,
                                           double s_range = 2.0) {
    if (samples == 0) throw ParameterError("check_homogeneity: need at least one sample");
    Rng rng(seed);
    HomogeneityReport rep;
    rep.samples = samples;
    for (std::size_t it = 0; it < samples; ++it) {
        Vector x(d.dim());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        const double s = rng.uniform_sym(s_range);
        const Matrix ds = d.map(s);
        const Vector lhs = f(ds * x);
        const Vector rhs = std::exp(nu * s) * (ds * f(x));
        const double defect = (lhs - rhs).norm() / std::max(1.0, rhs.norm());
        if (defect > rep.max_defect) {
            rep.max_defect = defect;
            rep.worst_s = s;
        }
    }
    return rep;
}

}  // namespace homobs
