#include <doctest.h>

#include <sstream>

#include "homobs/sim.hpp"
#include "pendulum_data.hpp"

using namespace homobs;

namespace {

design::Plant dint_plant() {
    design::Plant p;
    p.A = Matrix{{0.0, 1.0}, {0.0, 0.0}};
    p.B = Matrix{{0.0}, {1.0}};
    p.C = Matrix{{1.0, 0.0}};
    return p;
}

design::ObserverDesign dint_filtering(double rho = 1.0, double gamma = 1.0) {
    static design::ObserverDesign cached = [] {
        auto plant = dint_plant();
        auto h = design::solve_homogenization(plant.A, plant.C);
        design::SynthesisOptions opts;
        opts.lmi.starts = 2;
        opts.lmi.max_iter = 300;
        return design::synthesize_gains_filtering(plant, h, -1.0 / 3.0, 1.0, 1.0, opts);
    }();
    (void)rho;
    (void)gamma;
    return cached;
}

}  // namespace

TEST_CASE("sigma_of") {
    CHECK(sim::sigma_of(2.0, Vector{std::sqrt(2.0)}) == doctest::Approx(std::sqrt(2.0)));
    CHECK(sim::sigma_of(0.0, Vector{0.0}) == 0.0);
    CHECK(sim::sigma_of(-1.0, Vector{1.0}) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("xi_closed_form") {
    CHECK(sim::xi_closed_form(0.7, 2.0, -0.5, 0.0) == doctest::Approx(0.7));
    // nu = -1: xi(t) = 1 - t, zero at t = 1
    CHECK(sim::xi_closed_form(1.0, 1.0, -1.0, 0.5) == doctest::Approx(0.5));
    CHECK(sim::xi_closed_form(1.0, 1.0, -1.0, 1.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(sim::xi_closed_form(1.0, 1.0, -1.0, 1.5), ParameterError);
    // nu = 1: xi(t) = 1/(1+t)
    CHECK(sim::xi_closed_form(1.0, 1.0, 1.0, 3.0) == doctest::Approx(0.25));
    CHECK_THROWS_AS(sim::xi_closed_form(0.0, 1.0, -0.5, 0.1), ParameterError);
}

TEST_CASE("filtering_rhs: error-system equilibrium and d(0) = I") {
    auto d = dint_filtering();
    sim::ObserverState s;
    s.z = Vector{0.3, -0.2};
    s.psi = Vector(1);
    s.xi = 0.0;
    const Vector y = d.plant.C * s.z;  // z = x: zero innovation
    const Vector u{0.5};
    auto dot = sim::filtering_rhs(s, d, y, u, d.plant.B);
    const Vector expect = d.plant.A * s.z + d.plant.B * u;
    CHECK((dot.z - expect).norm() <= 1e-14);
    CHECK(dot.psi.norm() == 0.0);
    CHECK(dot.xi == 0.0);
    // sigma = 1 makes the scaled injection exactly L psi (d(ln 1) = I)
    sim::ObserverState s2;
    s2.z = Vector(2);
    s2.psi = Vector{1.0};
    s2.xi = 1.0;
    auto dot2 = sim::filtering_rhs(s2, d, Vector(1), Vector(1), d.plant.B);
    const Vector gain_expected = d.L * s2.psi;
    const Vector base = d.plant.A * s2.z + d.homogenization.L0 * (d.plant.C * s2.z);
    CHECK((dot2.z - base - gain_expected).norm() <= 1e-12);
}

TEST_CASE("luenberger_rhs") {
    auto plant = dint_plant();
    const Matrix l{{-3.0}, {-2.0}};
    const Vector z{1.0, 2.0};
    const Vector y = plant.C * z;  // zero innovation: pure model copy
    const Vector u{0.0};
    const Vector dz = sim::luenberger_rhs(z, l, plant.A, plant.B, plant.C, y, u);
    CHECK((dz - plant.A * z).norm() <= 1e-15);
    const Vector dz0 = sim::luenberger_rhs(z, Matrix::zeros(2, 1), plant.A, plant.B, plant.C,
                                           Vector{5.0}, u);
    CHECK((dz0 - plant.A * z).norm() <= 1e-15);  // L = 0 ignores the output
}

TEST_CASE("simulate: zero dynamics keeps zero error") {
    design::Plant p;
    p.A = Matrix::zeros(2, 2);
    p.B = Matrix::zeros(2, 1);
    p.C = Matrix{{1.0, 0.0}};
    auto d = dint_filtering();
    d.plant = p;  // same dimensions, zero dynamics
    sim::Observers obs;
    obs.filtering = d;
    sim::SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 0.2;
    cfg.x0 = Vector{0.4, -0.1};
    cfg.z0 = cfg.x0;
    auto traj = sim::simulate(p, obs, cfg);
    for (double e : traj.err_hom) CHECK(e <= 1e-14);
}

TEST_CASE("simulate determinism: identical seeds give identical trajectories") {
    auto d = dint_filtering();
    sim::Observers obs;
    obs.filtering = d;
    obs.luenberger = Matrix{{-3.0}, {-2.0}};
    sim::SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 0.3;
    cfg.x0 = Vector{1.0, -0.5};
    cfg.noise.kind = sim::Noise::Kind::Uniform;
    cfg.noise.magnitude = 0.01;
    cfg.seed = 99;
    auto a = sim::simulate(d.plant, obs, cfg);
    auto b = sim::simulate(d.plant, obs, cfg);
    REQUIRE(a.steps() == b.steps());
    for (std::size_t i = 0; i < a.steps(); ++i) {
        CHECK(a.err_hom[i] == b.err_hom[i]);
        CHECK(a.err_lin[i] == b.err_lin[i]);
    }
    std::ostringstream csv_a, csv_b;
    sim::write_csv(csv_a, a, 2, 1);
    sim::write_csv(csv_b, b, 2, 1);
    CHECK(csv_a.str() == csv_b.str());
}

TEST_CASE("prescribed-time observer: xi tracks the closed form and halts") {
    auto plant = dint_plant();
    auto h = design::solve_homogenization(plant.A, plant.C);
    design::SynthesisOptions opts;
    opts.lmi.starts = 2;
    opts.lmi.max_iter = 300;
    auto d = design::synthesize_gains_prescribed(plant, h, -0.5, 2.0, opts);
    sim::Observers obs;
    obs.prescribed = d;
    obs.prescribed_xi0 = 1.0;
    sim::SimConfig cfg;
    cfg.dt = 1e-4;
    cfg.t_end = 1.5;
    cfg.x0 = Vector{0.5, -0.7};
    auto traj = sim::simulate(plant, obs, cfg);
    REQUIRE(traj.halted_at.has_value());
    const double t0 = std::pow(1.0, 0.5) / (0.5 * 2.0);  // |xi0|^{-nu} / (-nu rho)
    // fractional-power decay gives Euler a few steps of crossing bias
    CHECK(std::fabs(*traj.halted_at - t0) <= 10.0 * cfg.dt);
    double max_rate = 0.0;
    for (std::size_t i = 0; i + 1 < traj.steps(); ++i)
        max_rate = std::max(max_rate,
                            std::fabs(traj.xi_presc[i + 1] - traj.xi_presc[i]) / cfg.dt);
    double worst = 0.0;
    for (std::size_t i = 0; i < traj.steps(); ++i) {
        if (traj.times[i] > t0) break;
        worst = std::max(worst, std::fabs(traj.xi_presc[i] -
                                          sim::xi_closed_form(1.0, 2.0, -0.5, traj.times[i])));
    }
    CHECK(worst <= 10.0 * cfg.dt * max_rate);
}

TEST_CASE("xi Euler recursion crosses zero within two steps of the closed form") {
    // nu = -1 makes the decay exactly linear, so explicit Euler is exact
    const double rho = 1.0, nu = -1.0, dt = 1e-3;
    double xi = 1.0;
    double t = 0.0;
    while (xi > 0.0) {
        xi += dt * (-rho * std::pow(std::fabs(xi), 1.0 + nu) * (xi > 0.0 ? 1.0 : -1.0));
        t += dt;
    }
    const double t0 = std::pow(1.0, -nu) / (-nu * rho);
    CHECK(std::fabs(t - t0) <= 2.0 * dt);
}

TEST_CASE("metrics: zero and ramp series") {
    std::vector<double> times, zero, ramp;
    const double dt = 0.01;
    for (int i = 0; i <= 100; ++i) {
        times.push_back(i * dt);
        zero.push_back(0.0);
        ramp.push_back(i * dt);
    }
    auto mz = sim::metrics(times, zero, 0.0, 1.0);
    CHECK(mz.terminal_error == 0.0);
    CHECK(mz.rms_error == 0.0);
    CHECK(mz.peak_error == 0.0);
    auto mr = sim::metrics(times, ramp, 0.0, 1.0);
    // RMS of t over the uniform grid: sqrt(mean of (i dt)^2)
    double acc = 0.0;
    for (int i = 0; i <= 100; ++i) acc += (i * dt) * (i * dt);
    CHECK(mr.rms_error == doctest::Approx(std::sqrt(acc / 101.0)).epsilon(1e-12));
    CHECK(mr.peak_error == doctest::Approx(1.0));
    CHECK_THROWS_AS(sim::metrics(times, ramp, 0.9, 0.1), ParameterError);
}

TEST_CASE("delta_monotone_check: xi0 dominating keeps T_delta at zero") {
    auto d = dint_filtering();
    sim::Observers obs;
    obs.filtering = d;
    sim::SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_end = 0.5;
    cfg.x0 = Vector{0.1, 0.1};
    cfg.xi0 = 10.0;  // starts far above |psi|^2/2 = 0
    auto traj = sim::simulate(d.plant, obs, cfg);
    auto rep = sim::delta_monotone_check(traj);
    CHECK(rep.t_delta == doctest::Approx(0.0));
    CHECK(rep.sigma_equals_sqrt_xi);
}

TEST_CASE("simulate flags blowup with a timestamp") {
    design::Plant p;
    p.A = Matrix{{10.0}};
    p.B = Matrix{{0.0}};
    p.C = Matrix{{1.0}};
    sim::Observers obs;
    obs.luenberger = Matrix{{0.0}};
    sim::SimConfig cfg;
    cfg.dt = 1.0;  // wildly unstable discretization
    cfg.t_end = 500.0;
    cfg.x0 = Vector{1.0};
    CHECK_THROWS_AS(sim::simulate(p, obs, cfg), sim::SimulationError);
}

namespace {

// autonomous error field of the filtering observer in (psi, eps, xi) order
Vector error_field(const design::ObserverDesign& d, const Vector& v) {
    const std::size_t n = d.n(), k = d.k();
    sim::ObserverState s;
    s.psi = Vector(k);
    s.z = Vector(n);
    for (std::size_t i = 0; i < k; ++i) s.psi[i] = v[i];
    for (std::size_t i = 0; i < n; ++i) s.z[i] = v[k + i];
    s.xi = v[k + n];
    auto rhs = sim::filtering_rhs(s, d, Vector(k), Vector(d.plant.m()),
                                  Matrix::zeros(n, d.plant.m()));
    Vector out(n + k + 1);
    for (std::size_t i = 0; i < k; ++i) out[i] = rhs.psi[i];
    for (std::size_t i = 0; i < n; ++i) out[k + i] = rhs.z[i];
    out[k + n] = rhs.xi;
    return out;
}

Dilation error_dilation(const design::ObserverDesign& d) {
    const std::size_t n = d.n(), k = d.k();
    Matrix g(n + k + 1, n + k + 1);
    g.set_block(0, 0, Matrix::identity(k));
    g.set_block(k, k, d.Gd);
    g(n + k, n + k) = 2.0;
    Matrix p(n + k + 1, n + k + 1);
    p.set_block(0, 0, d.P_bar);
    p(n + k, n + k) = 1.0;
    return make_dilation(g, p);
}

}  // namespace

TEST_CASE("solution symmetry: dilated initial errors give dilated, time-scaled runs") {
    auto d = dint_filtering();
    const Dilation dil = error_dilation(d);
    Rng rng(404);
    Vector v0(4);
    for (auto& x : v0) x = 0.5 * rng.normal();
    const double dt_a = 1e-5;
    const std::size_t steps = 2000;
    for (double s : {-0.5, 0.5}) {
        const Matrix ds = dil.map(s);
        const double dt_b = dt_a * std::exp(-d.nu * s);
        Vector a = v0;
        Vector b = ds * v0;
        double worst = 0.0;
        for (std::size_t i = 0; i < steps; ++i) {
            a += dt_a * error_field(d, a);
            b += dt_b * error_field(d, b);
            const Vector ref = ds * a;
            worst = std::max(worst, (b - ref).norm() / std::max(1.0, ref.norm()));
        }
        CHECK(worst <= 50.0 * dt_a);
    }
}

TEST_CASE("delta variable: adversarial start obeys the settling-time estimate") {
    auto d = dint_filtering();
    sim::Observers obs;
    obs.filtering = d;
    sim::SimConfig cfg;
    cfg.dt = 1e-4;
    cfg.t_end = 3.0;
    cfg.x0 = Vector{0.5, -0.5};
    cfg.z0 = Vector{1.0, 0.0};
    cfg.psi0 = Vector{2.0};  // |psi0|^2/2 = 2 > xi0 = 0
    cfg.xi0 = 0.0;
    auto traj = sim::simulate(d.plant, obs, cfg);
    auto rep = sim::delta_monotone_check(traj);
    CHECK(rep.t_delta > 0.0);
    const double bound = (4.0 - 0.0) / (-d.nu * d.gamma);
    CHECK(rep.t_delta <= bound);
    CHECK(rep.sigma_equals_sqrt_xi);
}

TEST_CASE("finite-time convergence: unit-norm error states contract below 1e-3") {
    // pendulum design, nominal setup: seeded error states of unit homogeneous
    // norm must fall below 1e-3 well before t = 1.5
    design::Plant plant;
    plant.A = pendulum::A();
    plant.B = pendulum::B();
    plant.C = pendulum::C();
    auto h = design::solve_homogenization(plant.A, plant.C);
    design::SynthesisOptions opts;
    opts.lmi.starts = 2;
    auto d = design::synthesize_gains_filtering(plant, h, -1.0 / 3.0, 1.5, 2.75, opts);
    const Dilation dil = error_dilation(d);
    Rng rng(808);
    const double dt = 0.5e-4;
    const std::size_t n = d.n(), k = d.k();
    for (int trial = 0; trial < 10; ++trial) {
        // estimation errors only: the filter and scaling states start at zero
        // exactly as in the nominal setup
        Vector v(dil.dim());
        for (std::size_t i = 0; i < n; ++i) v[k + i] = rng.normal();
        v = dil.map(-std::log(hom_norm(dil, v))) * v;  // unit homogeneous norm
        CHECK(hom_norm(dil, v) == doctest::Approx(1.0).epsilon(1e-8));
        bool reached = false;
        for (double t = 0.0; t < 1.5; t += dt) {
            v += dt * error_field(d, v);
            if (v.norm() < 1e-3) {
                reached = true;
                break;
            }
        }
        CHECK(reached);
    }
}

TEST_CASE("rk4 integrates a linear plant to high order") {
    design::Plant p;
    p.A = Matrix{{0.0, 1.0}, {-4.0, -0.4}};
    p.B = Matrix{{0.0}, {0.0}};
    p.C = Matrix{{1.0, 0.0}};
    sim::Observers none;
    sim::SimConfig cfg;
    cfg.dt = 1e-2;
    cfg.t_end = 1.0;
    cfg.x0 = Vector{1.0, 0.0};
    cfg.method = sim::Method::Rk4;
    auto traj = sim::simulate(p, none, cfg);
    const Vector exact = expm(p.A * 1.0) * cfg.x0;
    CHECK((traj.x.back() - exact).norm() <= 1e-8);
    cfg.method = sim::Method::Euler;
    auto traj_e = sim::simulate(p, none, cfg);
    CHECK((traj_e.x.back() - exact).norm() > 1e-4);  // Euler at the same step is far worse
}

TEST_CASE("csv header reflects enabled observers") {
    auto d = dint_filtering();
    sim::Observers obs;
    obs.filtering = d;
    obs.luenberger = Matrix{{-3.0}, {-2.0}};
    sim::SimConfig cfg;
    cfg.dt = 1e-2;
    cfg.t_end = 0.05;
    cfg.x0 = Vector{1.0, 0.0};
    auto traj = sim::simulate(d.plant, obs, cfg);
    std::ostringstream os;
    sim::write_csv(os, traj, 2, 1);
    const std::string header = os.str().substr(0, os.str().find('\n'));
    CHECK(header == "t,x1,x2,z1,z2,psi1,xi,sigma,err_hom,zlin1,zlin2,err_lin");
    // round-trip through the json writer keeps lengths consistent
    auto j = sim::trajectory_to_json(traj);
    CHECK(j["times"].size() == traj.steps());
    CHECK(j["err_hom"].size() == traj.steps());
}
