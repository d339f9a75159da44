#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "homobs/design.hpp"
#include "homobs/rng.hpp"

namespace homobs::sim {

struct SimulationError : Error {
    SimulationError(const std::string& what, double when, std::string who)
        : Error(what), time(when), observer(std::move(who)) {}
    double time = 0.0;
    std::string observer;
};

enum class Method { Euler, Rk4 };

struct Perturbation {
    enum class Kind { None, Sinusoid, Custom } kind = Kind::None;
    double amplitude = 0.0;
    double angular_frequency = 0.0;
    bool through_E = true;  // otherwise through B
    std::vector<double> samples;  // Custom: one value per step, zero-held past the end

    double value(double t, std::size_t step) const {
        switch (kind) {
            case Kind::None: return 0.0;
            case Kind::Sinusoid: return amplitude * std::sin(angular_frequency * t);
            case Kind::Custom: return step < samples.size() ? samples[step] : 0.0;
        }
        return 0.0;
    }
};

struct Noise {
    enum class Kind { None, Uniform } kind = Kind::None;
    double magnitude = 0.0;
};

struct SimConfig {
    double dt = 0.5e-4;
    double t_end = 1.5;
    Vector x0;
    Vector z0;    // defaults to zero
    Vector psi0;  // defaults to zero
    double xi0 = 0.0;
    Matrix feedback_gain;  // m x n, u = K z; empty means zero input
    Perturbation perturbation;
    Noise noise;
    std::uint64_t seed = 0;
    Method method = Method::Euler;
    double sigma_floor = 1e-300;  // guards log(sigma); see README on discretization

    void validate(const design::Plant& plant) const {
        if (!(dt > 0.0)) throw ParameterError("sim config: dt must be positive");
        if (!(t_end >= dt)) throw ParameterError("sim config: t_end must be at least dt");
        if (x0.size() != plant.n()) throw DimensionError("sim config: x0 dimension mismatch");
        if (z0.size() && z0.size() != plant.n())
            throw DimensionError("sim config: z0 dimension mismatch");
        if (psi0.size() && psi0.size() != plant.k())
            throw DimensionError("sim config: psi0 dimension mismatch");
        if (feedback_gain.rows() &&
            (feedback_gain.rows() != plant.m() || feedback_gain.cols() != plant.n()))
            throw DimensionError("sim config: feedback gain must be m x n");
    }
};

struct ObserverState {
    Vector z;
    Vector psi;
    double xi = 0.0;
};

/// sigma = sqrt(max(xi, |psi|^2 / 2))
inline double sigma_of(double xi, const Vector& psi) {
    double p2 = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) p2 += psi[i] * psi[i];
    return std::sqrt(std::max(xi, 0.5 * p2));
}

/// Right-hand side of the filtering observer. The scaled injection
/// sigma^{nu-1} d(ln sigma) L psi is evaluated as
/// expm(ln(sigma) (G_d + nu I)) L (psi/sigma), which keeps both factors
/// bounded (|psi/sigma| <= sqrt(2)); it is exactly zero when psi = 0.
inline ObserverState filtering_rhs(const ObserverState& state, const design::ObserverDesign& d,
                                   const Vector& y, const Vector& u, const Matrix& plant_b,
                                   double sigma_floor = 1e-300) {
    if (d.kind != design::ObserverKind::Filtering)
        throw ParameterError("filtering_rhs: design kind mismatch");
    const std::size_t n = d.n();
    const Matrix& a = d.plant.A;
    const Matrix& c = d.plant.C;
    Vector innov = c * state.z - y;
    const double sigma = std::max(sigma_of(state.xi, state.psi), sigma_floor);
    const double psin = state.psi.norm();
    Vector gain_term(n);
    Vector filt_term(state.psi.size());
    if (psin > 0.0) {
        const Vector dir = (1.0 / sigma) * state.psi;
        const Matrix scaled =
            expm((d.Gd + Matrix::identity(n) * d.nu) * std::log(sigma));
        gain_term = scaled * (d.L * dir);
        filt_term = std::pow(sigma, 1.0 + d.nu) * (d.L_tilde * dir);
    }
    ObserverState out;
    out.z = a * state.z + plant_b * u + d.homogenization.L0 * innov + gain_term;
    out.psi = innov + filt_term;
    double p2 = 0.0;
    for (std::size_t i = 0; i < state.psi.size(); ++i) p2 += state.psi[i] * state.psi[i];
    out.xi = std::fabs(dot(state.psi, innov + filt_term)) -
             d.gamma * signed_power(state.xi - 0.5 * p2, 0.5 * d.nu + 1.0);
    if (!out.z.all_finite() || !out.psi.all_finite() || !std::isfinite(out.xi))
        throw NumericalError("filtering_rhs: non-finite derivative");
    return out;
}

struct PrescribedState {
    Vector z;
    double xi = 0.0;
};

/// Right-hand side of the prescribed-time observer (gain blows up as xi -> 0;
/// integration is expected to halt at the crossing).
inline PrescribedState prescribed_rhs(const PrescribedState& state,
                                      const design::ObserverDesign& d, const Vector& y,
                                      const Vector& u, const Matrix& plant_b) {
    if (d.kind != design::ObserverKind::PrescribedTime)
        throw ParameterError("prescribed_rhs: design kind mismatch");
    if (state.xi == 0.0) throw ParameterError("prescribed_rhs: xi must be nonzero");
    const std::size_t n = d.n();
    const Matrix& a = d.plant.A;
    const Matrix& c = d.plant.C;
    const Vector innov = c * state.z - y;
    const double axi = std::fabs(state.xi);
    const Matrix scaled = expm((d.Gd + Matrix::identity(n) * (d.nu - 1.0)) * std::log(axi));
    const Matrix gain = d.homogenization.L0 + scaled * d.L;
    PrescribedState out;
    out.z = a * state.z + plant_b * u + gain * innov;
    out.xi = -d.rho * std::pow(axi, 1.0 + d.nu) * (state.xi > 0.0 ? 1.0 : -1.0);
    if (!out.z.all_finite() || !std::isfinite(out.xi))
        throw NumericalError("prescribed_rhs: non-finite derivative");
    return out;
}

/// Classical linear observer law.
inline Vector luenberger_rhs(const Vector& z, const Matrix& l_lin, const Matrix& a,
                             const Matrix& b, const Matrix& c, const Vector& y, const Vector& u) {
    return a * z + b * u + l_lin * (c * z - y);
}

/// Closed-form solution of the prescribed-time scaling variable.
inline double xi_closed_form(double xi0, double rho, double nu, double t) {
    if (xi0 == 0.0) throw ParameterError("xi_closed_form: xi0 must be nonzero");
    if (t < 0.0) throw ParameterError("xi_closed_form: time must be nonnegative");
    const double base = std::pow(std::fabs(xi0), -nu) + nu * rho * t;
    if (nu < 0.0) {
        const double t_end = std::pow(std::fabs(xi0), -nu) / (-nu * rho);
        if (t > t_end * (1.0 + 1e-12))
            throw ParameterError("xi_closed_form: time beyond the terminal time");
        if (base <= 0.0) return 0.0;
    }
    return std::copysign(std::pow(base, 1.0 / (-nu)), xi0);
}

struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Vector> x;
    // filtering observer series
    std::vector<Vector> z;
    std::vector<Vector> psi;
    std::vector<double> xi;
    std::vector<double> sigma;
    std::vector<double> err_hom;
    // prescribed-time observer series
    std::vector<Vector> z_presc;
    std::vector<double> xi_presc;
    std::vector<double> err_presc;
    // linear baseline series
    std::vector<Vector> z_lin;
    std::vector<double> err_lin;
    std::optional<double> halted_at;  // prescribed-time crossing
    std::string design_hash;
    nlohmann::json config_echo;

    bool has_filtering() const { return !z.empty(); }
    bool has_prescribed() const { return !z_presc.empty(); }
    bool has_linear() const { return !z_lin.empty(); }
    std::size_t steps() const { return times.size(); }
};

struct Observers {
    std::optional<design::ObserverDesign> filtering;
    std::optional<design::ObserverDesign> prescribed;
    std::optional<Matrix> luenberger;
    double prescribed_xi0 = 1.0;
};

namespace detail {

inline std::string fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace detail

/// Fixed-step simulation of the plant coupled with the enabled observers on a
/// shared measurement stream. The control input u = K z uses the filtering
/// observer's state when present, otherwise the prescribed-time observer's.
inline Trajectory simulate(const design::Plant& plant, const Observers& obs,
                           const SimConfig& config) {
    plant.validate();
    config.validate(plant);
    if (obs.filtering && obs.filtering->kind != design::ObserverKind::Filtering)
        throw ParameterError("simulate: filtering slot holds a non-filtering design");
    if (obs.prescribed && obs.prescribed->kind != design::ObserverKind::PrescribedTime)
        throw ParameterError("simulate: prescribed slot holds a non-prescribed design");
    if (obs.prescribed && obs.prescribed_xi0 == 0.0)
        throw ParameterError("simulate: prescribed-time observer needs xi0 != 0");
    const std::size_t n = plant.n();
    const std::size_t k = plant.k();
    const std::size_t m = plant.m();
    const std::size_t steps = static_cast<std::size_t>(std::llround(config.t_end / config.dt));
    Rng rng(config.seed);

    Vector x = config.x0;
    ObserverState fs;
    fs.z = config.z0.size() ? config.z0 : Vector(n);
    fs.psi = config.psi0.size() ? config.psi0 : Vector(k);
    fs.xi = config.xi0;
    PrescribedState ps;
    ps.z = config.z0.size() ? config.z0 : Vector(n);
    ps.xi = obs.prescribed_xi0;
    Vector zl = config.z0.size() ? config.z0 : Vector(n);

    const Matrix dist = plant.disturbance_matrix();
    const bool through_e = config.perturbation.through_E;

    Trajectory out;
    out.dt = config.dt;
    out.times.reserve(steps + 1);
    if (obs.filtering)
        out.design_hash = detail::fnv1a(design::to_json(*obs.filtering).dump());
    else if (obs.prescribed)
        out.design_hash = detail::fnv1a(design::to_json(*obs.prescribed).dump());

    auto record = [&](double t) {
        out.times.push_back(t);
        out.x.push_back(x);
        if (obs.filtering) {
            out.z.push_back(fs.z);
            out.psi.push_back(fs.psi);
            out.xi.push_back(fs.xi);
            out.sigma.push_back(sigma_of(fs.xi, fs.psi));
            out.err_hom.push_back((fs.z - x).norm());
        }
        if (obs.prescribed) {
            out.z_presc.push_back(ps.z);
            out.xi_presc.push_back(ps.xi);
            out.err_presc.push_back((ps.z - x).norm());
        }
        if (obs.luenberger) {
            out.z_lin.push_back(zl);
            out.err_lin.push_back((zl - x).norm());
        }
    };

    for (std::size_t step = 0; step <= steps; ++step) {
        const double t = static_cast<double>(step) * config.dt;
        record(t);
        if (step == steps || out.halted_at) break;

        Vector qy(k);
        if (config.noise.kind == Noise::Kind::Uniform)
            for (std::size_t i = 0; i < k; ++i) qy[i] = rng.uniform_sym(config.noise.magnitude);
        const Vector y = plant.C * x + qy;

        Vector u(m);
        if (config.feedback_gain.rows()) {
            if (obs.filtering)
                u = config.feedback_gain * fs.z;
            else if (obs.prescribed)
                u = config.feedback_gain * ps.z;
        }

        auto plant_rhs = [&](const Vector& xs, double ts) {
            Vector dx = plant.A * xs + plant.B * u;
            const double q = config.perturbation.value(ts, step);
            if (q != 0.0) {
                const Matrix& g = through_e ? dist : plant.B;
                for (std::size_t i = 0; i < n; ++i) dx[i] += g(i, 0) * q;
            }
            return dx;
        };

        try {
            if (config.method == Method::Euler) {
                const Vector dx = plant_rhs(x, t);
                ObserverState df;
                PrescribedState dp;
                Vector dzl;
                if (obs.filtering)
                    df = filtering_rhs(fs, *obs.filtering, y, u, plant.B, config.sigma_floor);
                if (obs.prescribed) dp = prescribed_rhs(ps, *obs.prescribed, y, u, plant.B);
                if (obs.luenberger)
                    dzl = luenberger_rhs(zl, *obs.luenberger, plant.A, plant.B, plant.C, y, u);
                x += config.dt * dx;
                if (obs.filtering) {
                    fs.z += config.dt * df.z;
                    fs.psi += config.dt * df.psi;
                    fs.xi += config.dt * df.xi;
                }
                if (obs.prescribed) {
                    const double xi_new = ps.xi + config.dt * dp.xi;
                    ps.z += config.dt * dp.z;
                    if ((obs.prescribed->nu < 0.0) && (xi_new == 0.0 || (xi_new > 0.0) != (ps.xi > 0.0)))
                        out.halted_at = t + config.dt;
                    ps.xi = xi_new;
                }
                if (obs.luenberger) zl += config.dt * dzl;
            } else {
                // classical RK4 with the measurement held over the step
                auto deriv_x = [&](const Vector& xs, double ts) { return plant_rhs(xs, ts); };
                const Vector k1 = deriv_x(x, t);
                const Vector k2 = deriv_x(x + (config.dt / 2.0) * k1, t + config.dt / 2.0);
                const Vector k3 = deriv_x(x + (config.dt / 2.0) * k2, t + config.dt / 2.0);
                const Vector k4 = deriv_x(x + config.dt * k3, t + config.dt);
                Vector xn = x + (config.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if (obs.filtering) {
                    auto f = [&](const ObserverState& s) {
                        return filtering_rhs(s, *obs.filtering, y, u, plant.B, config.sigma_floor);
                    };
                    auto advance = [&](const ObserverState& s, const ObserverState& d, double h) {
                        ObserverState o;
                        o.z = s.z + h * d.z;
                        o.psi = s.psi + h * d.psi;
                        o.xi = s.xi + h * d.xi;
                        return o;
                    };
                    const ObserverState f1 = f(fs);
                    const ObserverState f2 = f(advance(fs, f1, config.dt / 2.0));
                    const ObserverState f3 = f(advance(fs, f2, config.dt / 2.0));
                    const ObserverState f4 = f(advance(fs, f3, config.dt));
                    fs.z += (config.dt / 6.0) * (f1.z + 2.0 * f2.z + 2.0 * f3.z + f4.z);
                    fs.psi += (config.dt / 6.0) * (f1.psi + 2.0 * f2.psi + 2.0 * f3.psi + f4.psi);
                    fs.xi += (config.dt / 6.0) * (f1.xi + 2.0 * f2.xi + 2.0 * f3.xi + f4.xi);
                }
                if (obs.prescribed) {
                    const PrescribedState d1 = prescribed_rhs(ps, *obs.prescribed, y, u, plant.B);
                    const double xi_new = ps.xi + config.dt * d1.xi;  // Euler fallback for xi
                    ps.z += config.dt * d1.z;
                    if ((obs.prescribed->nu < 0.0) && (xi_new == 0.0 || (xi_new > 0.0) != (ps.xi > 0.0)))
                        out.halted_at = t + config.dt;
                    ps.xi = xi_new;
                }
                if (obs.luenberger) {
                    auto f = [&](const Vector& zs) {
                        return luenberger_rhs(zs, *obs.luenberger, plant.A, plant.B, plant.C, y, u);
                    };
                    const Vector l1 = f(zl);
                    const Vector l2 = f(zl + (config.dt / 2.0) * l1);
                    const Vector l3 = f(zl + (config.dt / 2.0) * l2);
                    const Vector l4 = f(zl + config.dt * l3);
                    zl += (config.dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                }
                x = xn;
            }
        } catch (const NumericalError& e) {
            throw SimulationError(e.what(), t, obs.filtering ? "filtering" : "prescribed");
        }
        if (!x.all_finite()) throw SimulationError("plant state diverged", t, "plant");
        if (obs.filtering && (!fs.z.all_finite() || !fs.psi.all_finite() || !std::isfinite(fs.xi)))
            throw SimulationError("observer state diverged", t, "filtering");
        if (obs.prescribed && (!ps.z.all_finite() || !std::isfinite(ps.xi)))
            throw SimulationError("observer state diverged", t, "prescribed");
        if (obs.luenberger && !zl.all_finite())
            throw SimulationError("observer state diverged", t, "luenberger");
    }
    return out;
}

struct Metrics {
    double terminal_error = 0.0;
    double rms_error = 0.0;
    double peak_error = 0.0;
    std::optional<double> settling_time;
};

/// Error metrics over a window [t_a, t_b]; settling time is the first instant
/// after which the error stays at or below the threshold.
inline Metrics metrics(const std::vector<double>& times, const std::vector<double>& err,
                       double t_a, double t_b, double settle_threshold = 1e-3) {
    if (times.size() != err.size() || times.empty())
        throw ParameterError("metrics: series mismatch");
    if (!(t_a <= t_b) || t_b > times.back() + 1e-12)
        throw ParameterError("metrics: window outside trajectory span");
    Metrics m;
    m.terminal_error = err.back();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_a - 1e-12 || times[i] > t_b + 1e-12) continue;
        acc += err[i] * err[i];
        ++count;
        m.peak_error = std::max(m.peak_error, err[i]);
    }
    if (count == 0) throw ParameterError("metrics: empty window");
    m.rms_error = std::sqrt(acc / static_cast<double>(count));
    std::size_t idx = times.size();
    for (std::size_t i = times.size(); i-- > 0;) {
        if (err[i] > settle_threshold) break;
        idx = i;
    }
    if (idx < times.size()) m.settling_time = times[idx];
    return m;
}

struct DeltaReport {
    double t_delta = 0.0;          // first time after which xi >= |psi|^2/2 holds on
    bool sigma_equals_sqrt_xi = false;
};

/// Finds when the max() in the gain scale settles on xi, and whether
/// sigma = sqrt(xi) from then on (within a dt-scale tolerance).
inline DeltaReport delta_monotone_check(const Trajectory& traj) {
    if (!traj.has_filtering()) throw ParameterError("delta_monotone_check: filtering run required");
    DeltaReport rep;
    std::size_t first = traj.steps();
    for (std::size_t i = traj.steps(); i-- > 0;) {
        double p2 = 0.0;
        for (std::size_t j = 0; j < traj.psi[i].size(); ++j) p2 += traj.psi[i][j] * traj.psi[i][j];
        if (traj.xi[i] < 0.5 * p2 - 1e-15) break;
        first = i;
    }
    rep.t_delta = (first == traj.steps()) ? traj.times.back() : traj.times[first];
    rep.sigma_equals_sqrt_xi = true;
    for (std::size_t i = first; i < traj.steps(); ++i) {
        const double s = traj.sigma[i];
        const double sv = std::sqrt(std::max(traj.xi[i], 0.0));
        if (std::fabs(s - sv) > 1e-9 + 10.0 * traj.dt * std::max(1.0, s)) {
            rep.sigma_equals_sqrt_xi = false;
            break;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// export

inline void write_csv(std::ostream& os, const Trajectory& t, std::size_t n, std::size_t k) {
    os << "t";
    for (std::size_t i = 1; i <= n; ++i) os << ",x" << i;
    if (t.has_filtering()) {
        for (std::size_t i = 1; i <= n; ++i) os << ",z" << i;
        for (std::size_t i = 1; i <= k; ++i) os << ",psi" << i;
        os << ",xi,sigma,err_hom";
    }
    if (t.has_prescribed()) {
        for (std::size_t i = 1; i <= n; ++i) os << ",zp" << i;
        os << ",xip,err_presc";
    }
    if (t.has_linear()) {
        for (std::size_t i = 1; i <= n; ++i) os << ",zlin" << i;
        os << ",err_lin";
    }
    os << "\n";
    char buf[32];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << ',' << buf;
    };
    for (std::size_t s = 0; s < t.steps(); ++s) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.times[s]);
        os << buf;
        for (std::size_t i = 0; i < n; ++i) emit(t.x[s][i]);
        if (t.has_filtering()) {
            for (std::size_t i = 0; i < n; ++i) emit(t.z[s][i]);
            for (std::size_t i = 0; i < k; ++i) emit(t.psi[s][i]);
            emit(t.xi[s]);
            emit(t.sigma[s]);
            emit(t.err_hom[s]);
        }
        if (t.has_prescribed()) {
            for (std::size_t i = 0; i < n; ++i) emit(t.z_presc[s][i]);
            emit(t.xi_presc[s]);
            emit(t.err_presc[s]);
        }
        if (t.has_linear()) {
            for (std::size_t i = 0; i < n; ++i) emit(t.z_lin[s][i]);
            emit(t.err_lin[s]);
        }
        os << "\n";
    }
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
    nlohmann::json j;
    j["dt"] = t.dt;
    j["times"] = t.times;
    auto pack = [](const std::vector<Vector>& vs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vs) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t i = 0; i < v.size(); ++i) row.push_back(v[i]);
            arr.push_back(std::move(row));
        }
        return arr;
    };
    j["x"] = pack(t.x);
    if (t.has_filtering()) {
        j["z"] = pack(t.z);
        j["psi"] = pack(t.psi);
        j["xi"] = t.xi;
        j["sigma"] = t.sigma;
        j["err_hom"] = t.err_hom;
    }
    if (t.has_prescribed()) {
        j["z_presc"] = pack(t.z_presc);
        j["xi_presc"] = t.xi_presc;
        j["err_presc"] = t.err_presc;
    }
    if (t.has_linear()) {
        j["z_lin"] = pack(t.z_lin);
        j["err_lin"] = t.err_lin;
    }
    if (t.halted_at) j["halted_at"] = *t.halted_at;
    j["design_hash"] = t.design_hash;
    j["config"] = t.config_echo;
    return j;
}

}  // namespace homobs::sim
