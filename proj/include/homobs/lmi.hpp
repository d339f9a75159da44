#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homobs/numerics.hpp"
#include "homobs/rng.hpp"

namespace homobs::lmi {

enum class BlockSense { NegativeSemidefinite, PositiveDefinite };

struct DecisionVar {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool symmetric = false;
    std::size_t packed_size() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
};

/// One affine contribution left * X_var * right, added together with its
/// transpose, so every block map is symmetric by construction.
struct AffineTerm {
    std::size_t var = 0;
    Matrix left;
    Matrix right;
};

struct AffineBlock {
    std::size_t dim = 0;
    Matrix constant;  // dim x dim, symmetric
    std::vector<AffineTerm> terms;
    BlockSense sense = BlockSense::NegativeSemidefinite;
    std::string name;
};

/// A fixed affine constraint pinning the cone scale (trace of one symmetric
/// decision variable).
struct TraceNormalization {
    std::size_t var = 0;
    double target = 1.0;
};

struct LmiProblem {
    std::vector<DecisionVar> vars;
    std::vector<AffineBlock> blocks;
    TraceNormalization normalization;

    std::size_t theta_size() const {
        std::size_t n = 0;
        for (const auto& v : vars) n += v.packed_size();
        return n;
    }

    void validate() const {
        bool has_pd = false;
        for (const auto& b : blocks) {
            if (b.constant.rows() != b.dim || b.constant.cols() != b.dim)
                throw DimensionError("lmi: block constant has wrong shape");
            for (const auto& t : b.terms) {
                if (t.var >= vars.size()) throw DimensionError("lmi: term references unknown variable");
                if (t.left.rows() != b.dim || t.right.cols() != b.dim)
                    throw DimensionError("lmi: term outer dimensions do not match block");
                if (t.left.cols() != vars[t.var].rows || t.right.rows() != vars[t.var].cols)
                    throw DimensionError("lmi: term inner dimensions do not match variable");
            }
            if (b.sense == BlockSense::PositiveDefinite) has_pd = true;
        }
        if (!has_pd) throw ParameterError("lmi: at least one positive definite block required");
        if (normalization.var >= vars.size())
            throw ParameterError("lmi: normalization references unknown variable");
        if (!vars[normalization.var].symmetric)
            throw ParameterError("lmi: normalization variable must be symmetric");
    }
};

struct LmiCertificate {
    std::vector<Matrix> values;            // one per decision variable
    std::vector<double> margins;           // per block: lambda_max (NSD) or lambda_min (PD)
    double pd_margin = 1e-6;
    double nsd_slack = 1e-9;
};

struct SolveOptions {
    std::size_t max_iter = 900;      // L-BFGS iterations per temperature stage
    double pd_margin = 1e-6;
    double nsd_slack = 1e-9;
    std::size_t starts = 3;
    std::uint64_t seed = 1;
    std::size_t stages = 14;         // temperature continuation stages
    std::vector<std::vector<Matrix>> warm_starts;
};

struct SolveOutcome {
    bool feasible = false;
    LmiCertificate certificate;      // best point found either way
    double scaled_violation = 0.0;   // minimax value at the returned point
    std::size_t start_index = 0;
};

namespace detail {

inline std::vector<Matrix> unpack(const LmiProblem& p, const std::vector<double>& theta) {
    std::vector<Matrix> out;
    out.reserve(p.vars.size());
    std::size_t off = 0;
    for (const auto& v : p.vars) {
        if (v.symmetric) {
            Matrix m(v.rows, v.rows);
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = i; j < v.rows; ++j) {
                    m(i, j) = m(j, i) = theta[off];
                    ++off;
                }
            out.push_back(std::move(m));
        } else {
            Matrix m(v.rows, v.cols);
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = 0; j < v.cols; ++j) m(i, j) = theta[off++];
            out.push_back(std::move(m));
        }
    }
    return out;
}

inline void pack_gradient(const LmiProblem& p, const std::vector<Matrix>& grads,
                          std::vector<double>& g) {
    std::size_t off = 0;
    for (std::size_t vi = 0; vi < p.vars.size(); ++vi) {
        const auto& v = p.vars[vi];
        const Matrix& gm = grads[vi];
        if (v.symmetric) {
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = i; j < v.rows; ++j)
                    g[off++] = (i == j) ? gm(i, i) : gm(i, j) + gm(j, i);
        } else {
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = 0; j < v.cols; ++j) g[off++] = gm(i, j);
        }
    }
}

inline Matrix eval_block(const AffineBlock& b, const std::vector<Matrix>& vals) {
    Matrix out = b.constant;
    for (const auto& t : b.terms) {
        const Matrix m = t.left * vals[t.var] * t.right;
        out += m + m.transpose();
    }
    return out;
}

inline std::vector<double> block_scales(const LmiProblem& p, const std::vector<Matrix>& vals0) {
    std::vector<double> s;
    s.reserve(p.blocks.size());
    for (const auto& b : p.blocks) {
        double v = std::max(1.0, eval_block(b, vals0).frobenius_norm());
        for (const auto& t : b.terms)
            v = std::max(v, t.left.frobenius_norm() * t.right.frobenius_norm());
        s.push_back(v);
    }
    return s;
}

struct ObjectiveEval {
    double value = 0.0;
    std::vector<double> gradient;
};

// Smoothed minimax over all per-block scaled eigen-violations:
//   F_tau = tau * log sum exp(g_i / tau),
//   g = lambda_i(B)/s_b for NSD blocks, -lambda_i(B)/s_b for PD blocks.
// The gradient flows through the eigenvectors; the trace normalization is
// enforced by projecting it out.
inline ObjectiveEval smoothed_objective(const LmiProblem& p, const std::vector<double>& theta,
                                        double tau, const std::vector<double>& scales) {
    const std::vector<Matrix> vals = unpack(p, theta);
    struct Entry {
        double g;
        std::size_t block;
        std::size_t eig;
        double sign;
    };
    std::vector<Entry> entries;
    std::vector<SymEig> eigs;
    eigs.reserve(p.blocks.size());
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const Matrix bm = symmetrize(eval_block(p.blocks[bi], vals));
        SymEig e;
        homobs::detail::jacobi_eig(bm, e.values, e.vectors);
        for (std::size_t i = 0; i < e.values.size(); ++i) {
            if (p.blocks[bi].sense == BlockSense::NegativeSemidefinite)
                entries.push_back({e.values[i] / scales[bi], bi, i, 1.0});
            else
                entries.push_back({-e.values[i] / scales[bi], bi, i, -1.0});
        }
        eigs.push_back(std::move(e));
    }
    double gmax = entries.front().g;
    for (const auto& e : entries) gmax = std::max(gmax, e.g);
    double z = 0.0;
    std::vector<double> w(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        w[i] = std::exp((entries[i].g - gmax) / tau);
        z += w[i];
    }
    ObjectiveEval out;
    out.value = gmax + tau * std::log(z);
    std::vector<Matrix> grads;
    grads.reserve(p.vars.size());
    for (const auto& v : p.vars) grads.emplace_back(v.rows, v.symmetric ? v.rows : v.cols);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double wt = w[i] / z;
        if (wt < 1e-300) continue;
        const auto& en = entries[i];
        const Vector v = eigs[en.block].vectors.col(en.eig);
        const double coeff = wt * en.sign / scales[en.block];
        for (const auto& t : p.blocks[en.block].terms) {
            // d tr(vv^T (L X R + R^T X^T L^T)) / dX = 2 L^T v v^T R^T
            const Vector lv = t.left.transpose() * v;
            const Vector rv = t.right * v;
            Matrix& gm = grads[t.var];
            for (std::size_t a = 0; a < gm.rows(); ++a)
                for (std::size_t b2 = 0; b2 < gm.cols(); ++b2)
                    gm(a, b2) += coeff * 2.0 * lv[a] * rv[b2];
        }
    }
    out.gradient.assign(theta.size(), 0.0);
    pack_gradient(p, grads, out.gradient);
    // project out the trace direction of the normalized variable
    std::size_t off = 0;
    for (std::size_t vi = 0; vi < p.normalization.var; ++vi) off += p.vars[vi].packed_size();
    const std::size_t nr = p.vars[p.normalization.var].rows;
    std::vector<std::size_t> diag_idx;
    std::size_t k = off;
    for (std::size_t i = 0; i < nr; ++i) {
        diag_idx.push_back(k);
        k += nr - i;
    }
    double dotg = 0.0;
    for (std::size_t idx : diag_idx) dotg += out.gradient[idx];
    dotg /= static_cast<double>(nr);
    for (std::size_t idx : diag_idx) out.gradient[idx] -= dotg;
    return out;
}

inline std::vector<double> true_margins(const LmiProblem& p, const std::vector<Matrix>& vals) {
    std::vector<double> m;
    m.reserve(p.blocks.size());
    for (const auto& b : p.blocks) {
        Vector w;
        Matrix dummy;
        homobs::detail::jacobi_eig(symmetrize(eval_block(b, vals)), w, dummy);
        m.push_back(b.sense == BlockSense::NegativeSemidefinite ? w[w.size() - 1] : w[0]);
    }
    return m;
}

inline double worst_scaled_violation(const LmiProblem& p, const std::vector<Matrix>& vals,
                                     const std::vector<double>& scales) {
    const auto m = true_margins(p, vals);
    double worst = -1e300;
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const double v = (p.blocks[bi].sense == BlockSense::NegativeSemidefinite)
                             ? m[bi] / scales[bi]
                             : -m[bi] / scales[bi];
        worst = std::max(worst, v);
    }
    return worst;
}

inline void lbfgs_stage(const LmiProblem& p, std::vector<double>& theta, double tau,
                        const std::vector<double>& scales, std::size_t max_iter) {
    const std::size_t nt = theta.size();
    ObjectiveEval cur = smoothed_objective(p, theta, tau, scales);
    std::deque<std::vector<double>> hist_s, hist_y;
    std::deque<double> hist_rho;
    const std::size_t mem = 12;
    std::vector<double> d(nt), q(nt), tn(nt);
    for (std::size_t it = 0; it < max_iter; ++it) {
        q = cur.gradient;
        std::vector<double> alph(hist_s.size());
        for (std::size_t h = hist_s.size(); h-- > 0;) {
            double a = 0.0;
            for (std::size_t i = 0; i < nt; ++i) a += hist_s[h][i] * q[i];
            a *= hist_rho[h];
            alph[h] = a;
            for (std::size_t i = 0; i < nt; ++i) q[i] -= a * hist_y[h][i];
        }
        if (!hist_s.empty()) {
            double sy = 0.0, yy = 0.0;
            const auto& s = hist_s.back();
            const auto& y = hist_y.back();
            for (std::size_t i = 0; i < nt; ++i) {
                sy += s[i] * y[i];
                yy += y[i] * y[i];
            }
            const double gamma = sy / std::max(yy, 1e-300);
            for (auto& v : q) v *= gamma;
        }
        for (std::size_t h = 0; h < hist_s.size(); ++h) {
            double b = 0.0;
            for (std::size_t i = 0; i < nt; ++i) b += hist_y[h][i] * q[i];
            b *= hist_rho[h];
            for (std::size_t i = 0; i < nt; ++i) q[i] += (alph[h] - b) * hist_s[h][i];
        }
        double gd = 0.0;
        for (std::size_t i = 0; i < nt; ++i) {
            d[i] = -q[i];
            gd += cur.gradient[i] * d[i];
        }
        if (gd > 0.0) {
            gd = 0.0;
            for (std::size_t i = 0; i < nt; ++i) {
                d[i] = -cur.gradient[i];
                gd -= cur.gradient[i] * cur.gradient[i];
            }
        }
        if (gd > -1e-20) break;
        double step = 1.0;
        bool ok = false;
        ObjectiveEval nxt;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < nt; ++i) tn[i] = theta[i] + step * d[i];
            nxt = smoothed_objective(p, tn, tau, scales);
            if (nxt.value <= cur.value + 1e-4 * step * gd) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;
        std::vector<double> sv(nt), yv(nt);
        double sy = 0.0, sn = 0.0, yn = 0.0;
        for (std::size_t i = 0; i < nt; ++i) {
            sv[i] = tn[i] - theta[i];
            yv[i] = nxt.gradient[i] - cur.gradient[i];
            sy += sv[i] * yv[i];
            sn += sv[i] * sv[i];
            yn += yv[i] * yv[i];
        }
        if (sy > 1e-12 * std::sqrt(sn) * std::sqrt(yn)) {
            hist_s.push_back(std::move(sv));
            hist_y.push_back(std::move(yv));
            hist_rho.push_back(1.0 / sy);
            if (hist_s.size() > mem) {
                hist_s.pop_front();
                hist_y.pop_front();
                hist_rho.pop_front();
            }
        }
        const bool stalled = std::fabs(cur.value - nxt.value) <
                             1e-16 * std::max(1.0, std::fabs(cur.value));
        theta = tn;
        cur = std::move(nxt);
        if (stalled) break;
    }
}

inline std::vector<double> pack_values(const LmiProblem& p, const std::vector<Matrix>& vals) {
    std::vector<double> theta(p.theta_size());
    std::size_t off = 0;
    for (std::size_t vi = 0; vi < p.vars.size(); ++vi) {
        const auto& v = p.vars[vi];
        if (v.symmetric) {
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = i; j < v.rows; ++j) theta[off++] = vals[vi](i, j);
        } else {
            for (std::size_t i = 0; i < v.rows; ++i)
                for (std::size_t j = 0; j < v.cols; ++j) theta[off++] = vals[vi](i, j);
        }
    }
    return theta;
}

inline void renormalize_trace(const LmiProblem& p, std::vector<double>& theta) {
    std::size_t off = 0;
    for (std::size_t vi = 0; vi < p.normalization.var; ++vi) off += p.vars[vi].packed_size();
    const std::size_t nr = p.vars[p.normalization.var].rows;
    std::vector<std::size_t> diag_idx;
    std::size_t k = off;
    for (std::size_t i = 0; i < nr; ++i) {
        diag_idx.push_back(k);
        k += nr - i;
    }
    double tr = 0.0;
    for (std::size_t idx : diag_idx) tr += theta[idx];
    const double corr = (p.normalization.target - tr) / static_cast<double>(nr);
    for (std::size_t idx : diag_idx) theta[idx] += corr;
}

}  // namespace detail

/// Feasibility by smoothed spectral minimax descent (log-sum-exp over block
/// eigenvalues, decreasing temperature, L-BFGS steps), multi-started and
/// reduced deterministically by (best scaled violation, then start index).
inline SolveOutcome solve_feasibility(const LmiProblem& problem,
                                      const SolveOptions& opts = SolveOptions{}) {
    problem.validate();
    const std::size_t nt = problem.theta_size();
    // canonical start: normalized variable = scaled identity, everything else zero
    std::vector<double> theta0(nt, 0.0);
    detail::renormalize_trace(problem, theta0);
    const auto scales = detail::block_scales(problem, detail::unpack(problem, theta0));

    std::vector<std::vector<double>> starts;
    for (const auto& w : opts.warm_starts) starts.push_back(detail::pack_values(problem, w));
    starts.push_back(theta0);
    Rng rng(opts.seed);
    while (starts.size() < std::max<std::size_t>(opts.starts, 1)) {
        std::vector<double> t = theta0;
        for (auto& v : t) v += 0.3 * rng.normal();
        detail::renormalize_trace(problem, t);
        starts.push_back(std::move(t));
    }

    std::optional<std::vector<double>> best_theta;
    double best_viol = 0.0;
    std::size_t best_start = 0;
    for (std::size_t si = 0; si < starts.size(); ++si) {
        std::vector<double> theta = starts[si];
        double tau = 1.0;
        for (std::size_t stage = 0; stage < opts.stages; ++stage) {
            detail::lbfgs_stage(problem, theta, tau, scales, opts.max_iter);
            const auto eval = detail::smoothed_objective(problem, theta, tau, scales);
            tau = std::max(std::min(tau * 0.25, 0.3 * std::fabs(eval.value)), 1e-9);
        }
        const double viol =
            detail::worst_scaled_violation(problem, detail::unpack(problem, theta), scales);
        if (!best_theta || viol < best_viol) {
            best_theta = theta;
            best_viol = viol;
            best_start = si;
        }
    }

    SolveOutcome out;
    out.start_index = best_start;
    out.scaled_violation = best_viol;
    out.certificate.values = detail::unpack(problem, *best_theta);
    out.certificate.margins = detail::true_margins(problem, out.certificate.values);
    out.certificate.pd_margin = opts.pd_margin;
    out.certificate.nsd_slack = opts.nsd_slack;
    out.feasible = true;
    for (std::size_t bi = 0; bi < problem.blocks.size(); ++bi) {
        const double m = out.certificate.margins[bi];
        if (problem.blocks[bi].sense == BlockSense::NegativeSemidefinite) {
            if (!(m <= opts.nsd_slack)) out.feasible = false;
        } else {
            if (!(m >= opts.pd_margin)) out.feasible = false;
        }
    }
    return out;
}

struct VerifyReport {
    bool pass = false;
    std::vector<double> recomputed_margins;
    std::vector<std::string> failures;
};

/// Recompute every block margin from scratch and compare against the stored
/// certificate (absolute 1e-9), then re-check the margin thresholds.
inline VerifyReport verify_certificate(const LmiProblem& problem, const LmiCertificate& cert,
                                       const Tolerances& tol = default_tolerances()) {
    problem.validate();
    VerifyReport rep;
    if (cert.values.size() != problem.vars.size()) {
        rep.failures.push_back("wrong number of decision values");
        return rep;
    }
    for (std::size_t vi = 0; vi < problem.vars.size(); ++vi) {
        const auto& v = problem.vars[vi];
        if (cert.values[vi].rows() != v.rows ||
            cert.values[vi].cols() != (v.symmetric ? v.rows : v.cols)) {
            rep.failures.push_back("decision value shape mismatch");
            return rep;
        }
    }
    rep.recomputed_margins = detail::true_margins(problem, cert.values);
    for (std::size_t bi = 0; bi < problem.blocks.size(); ++bi) {
        const double m = rep.recomputed_margins[bi];
        const std::string label =
            problem.blocks[bi].name.empty() ? "block " + std::to_string(bi) : problem.blocks[bi].name;
        if (bi < cert.margins.size() && std::fabs(m - cert.margins[bi]) > 1e-9)
            rep.failures.push_back(label + ": stored margin drifted");
        if (problem.blocks[bi].sense == BlockSense::NegativeSemidefinite) {
            if (!(m <= cert.nsd_slack)) rep.failures.push_back(label + ": lambda_max above slack");
        } else {
            if (!(m >= cert.pd_margin)) rep.failures.push_back(label + ": lambda_min below margin");
        }
    }
    (void)tol;
    rep.pass = rep.failures.empty();
    return rep;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw ParameterError("matrix json: expected non-empty array");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].is_array() ? j[0].size() : 1;
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].is_array()) {
            if (j[i].size() != cols) throw ParameterError("matrix json: ragged rows");
            for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
        } else {
            m(i, 0) = j[i].get<double>();
        }
    }
    return m;
}

/// Debug dump of a problem and certificate for external cross-checking.
inline nlohmann::json dump_json(const LmiProblem& p, const LmiCertificate& cert) {
    nlohmann::json j;
    j["blocks"] = nlohmann::json::array();
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const auto& b = p.blocks[bi];
        nlohmann::json bj;
        bj["name"] = b.name;
        bj["sense"] =
            b.sense == BlockSense::NegativeSemidefinite ? "negative_semidefinite" : "positive_definite";
        bj["evaluated"] = matrix_to_json(detail::eval_block(b, cert.values));
        if (bi < cert.margins.size()) bj["margin"] = cert.margins[bi];
        j["blocks"].push_back(std::move(bj));
    }
    j["values"] = nlohmann::json::array();
    for (const auto& v : cert.values) j["values"].push_back(matrix_to_json(v));
    j["pd_margin"] = cert.pd_margin;
    j["nsd_slack"] = cert.nsd_slack;
    return j;
}

}  // namespace homobs::lmi
