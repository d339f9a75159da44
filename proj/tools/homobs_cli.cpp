// Command-line front end: gain synthesis, design verification, scenario
// simulation and the bundled rotary-pendulum reproduction pipeline.
//
// Exit codes: 0 ok, 2 config/parse, 3 synthesis, 4 verification,
//             5 simulation blowup, 6 reproduction mismatch.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "homobs/config.hpp"
#include "homobs/design.hpp"
#include "homobs/sim.hpp"

namespace fs = std::filesystem;
using namespace homobs;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSynthesis = 3;
constexpr int kExitVerification = 4;
constexpr int kExitSimulation = 5;
constexpr int kExitReproduction = 6;

struct GlobalOpts {
    std::uint64_t seed = 1;
    Tolerances tol;
};

std::string slurp_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config::ConfigError("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

design::ObserverDesign load_design(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(slurp_or_throw(path));
    } catch (const nlohmann::json::exception& e) {
        throw config::ConfigError(std::string("design file: ") + e.what());
    }
    return design::design_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config::ConfigError("cannot write file: " + path.string());
    out << text;
}

design::ObserverDesign run_synthesis(const design::Plant& plant, const config::ObserverParams& op,
                                     const GlobalOpts& g) {
    auto h = design::solve_homogenization(plant.A, plant.C, g.tol);
    design::SynthesisOptions sopts;
    sopts.lmi.seed = g.seed;
    if (op.kind == design::ObserverKind::Filtering)
        return design::synthesize_gains_filtering(plant, h, op.nu, op.rho, op.gamma, sopts, g.tol);
    return design::synthesize_gains_prescribed(plant, h, op.nu, op.rho, sopts, g.tol);
}

void print_margins(const design::ObserverDesign& d) {
    std::cout << "certificate margins";
    if (d.certificate.kappa) std::cout << " (gain cap " << *d.certificate.kappa << ")";
    std::cout << ":\n";
    for (std::size_t i = 0; i < d.certificate.margins.size(); ++i) {
        const std::string name = i < d.certificate.block_names.size()
                                     ? d.certificate.block_names[i]
                                     : "block " + std::to_string(i);
        std::cout << "  " << name << ": " << d.certificate.margins[i] << "\n";
    }
}

int cmd_design(const std::string& config_path, const std::string& out_path, const GlobalOpts& g) {
    config::RunConfig rc;
    try {
        rc = config::load_run_config(config_path);
        if (!rc.plant) throw config::ConfigError("config has no [plant] section");
        if (!rc.observer) throw config::ConfigError("config has no [observer] section");
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    design::ObserverDesign d;
    try {
        d = run_synthesis(*rc.plant, *rc.observer, g);
    } catch (const Error& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return kExitSynthesis;
    }
    write_text(out_path, design::to_json(d).dump(2) + "\n");
    print_margins(d);
    std::cout << "design written to " << out_path << "\n";
    return 0;
}

int cmd_verify(const std::string& design_path, const GlobalOpts& g) {
    design::ObserverDesign d;
    try {
        d = load_design(design_path);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    design::DesignVerification v = design::verify_design(d, g.tol);
    std::cout << "check                      result\n";
    for (const auto& [name, ok] : v.checks) {
        std::string shown = ok ? "pass" : "FAIL";
        if (name == "hosm_condition")
            shown = v.hosm.holds ? "holds" : "does not hold (defect " +
                                                 std::to_string(v.hosm.defect) + ")";
        std::cout << "  " << name << std::string(name.size() < 25 ? 25 - name.size() : 1, ' ')
                  << shown << "\n";
    }
    std::cout << "  eq19 residual            " << v.eq19_residual << "\n";
    std::cout << "  eq22 residual            " << v.eq22_residual << "\n";
    // the matched-disturbance row gates the exit status only where the theory
    // applies: filtering designs at the boundary degree
    bool hosm_gates = d.kind == design::ObserverKind::Filtering &&
                      std::fabs(d.nu + 1.0 / static_cast<double>(d.homogenization.n_tilde + 1)) < 1e-9;
    bool ok = v.pass && (!hosm_gates || v.hosm.holds);
    if (!ok) {
        std::cerr << "verification failed\n";
        return kExitVerification;
    }
    return 0;
}

void write_outputs(const fs::path& dir, const std::string& stem, const sim::Trajectory& traj,
                   std::size_t n, std::size_t k) {
    fs::create_directories(dir);
    {
        std::ofstream csv(dir / (stem + "_trajectory.csv"), std::ios::binary);
        sim::write_csv(csv, traj, n, k);
    }
    // per-figure data: time against each error component per observer
    auto figure = [&](const std::string& name, const std::vector<Vector>& zs) {
        if (zs.empty()) return;
        std::ofstream f(dir / (stem + "_" + name + ".csv"), std::ios::binary);
        f << "t";
        for (std::size_t i = 1; i <= n; ++i) f << ",e" << i;
        f << "\n";
        char buf[32];
        for (std::size_t s = 0; s < traj.steps(); ++s) {
            std::snprintf(buf, sizeof(buf), "%.17g", traj.times[s]);
            f << buf;
            for (std::size_t i = 0; i < n; ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", zs[s][i] - traj.x[s][i]);
                f << ',' << buf;
            }
            f << "\n";
        }
    };
    figure("fig_hom", traj.z);
    figure("fig_presc", traj.z_presc);
    figure("fig_lin", traj.z_lin);
}

nlohmann::json metrics_json(const sim::Trajectory& traj, double t_a, double t_b) {
    nlohmann::json j;
    auto add = [&](const std::string& prefix, const std::vector<double>& err) {
        if (err.empty()) return;
        auto m = sim::metrics(traj.times, err, t_a, t_b);
        j[prefix + "terminal_error"] = m.terminal_error;
        j[prefix + "rms_error"] = m.rms_error;
        j[prefix + "peak_error"] = m.peak_error;
        if (m.settling_time) j[prefix + "settling_time"] = *m.settling_time;
    };
    add("hom_", traj.err_hom);
    add("presc_", traj.err_presc);
    add("lin_", traj.err_lin);
    j["window_start"] = t_a;
    j["window_end"] = t_b;
    return j;
}

int cmd_simulate(const std::string& design_path, const std::string& scenario_path,
                 const std::string& out_dir, const GlobalOpts& g) {
    design::ObserverDesign d;
    config::RunConfig rc;
    try {
        d = load_design(design_path);
        rc = config::load_run_config(scenario_path);
        if (!rc.simulation) throw config::ConfigError("scenario has no [simulation] section");
        rc.simulation->validate(d.plant);
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    sim::Observers obs;
    if (d.kind == design::ObserverKind::Filtering)
        obs.filtering = d;
    else
        obs.prescribed = d;
    obs.prescribed_xi0 = rc.prescribed_xi0;
    if (rc.luenberger) obs.luenberger = rc.luenberger;
    sim::Trajectory traj;
    try {
        traj = sim::simulate(d.plant, obs, *rc.simulation);
    } catch (const sim::SimulationError& e) {
        std::cerr << "simulation blowup at t=" << e.time << " (" << e.observer
                  << "): " << e.what() << "\n";
        return kExitSimulation;
    }
    const std::string stem = rc.scenario_tag.empty() ? "run" : rc.scenario_tag;
    const fs::path dir = out_dir;
    write_outputs(dir, stem, traj, d.n(), d.k());
    const double t_end = traj.times.back();
    write_text(dir / (stem + "_metrics.json"),
               metrics_json(traj, t_end / 2.0, t_end).dump(2) + "\n");
    std::cout << "wrote " << (dir / (stem + "_trajectory.csv")).string() << "\n";
    return 0;
}

int cmd_reproduce(const std::string& target, const std::string& out_dir, const GlobalOpts& g) {
    if (target != "pendulum") {
        std::cerr << "unknown reproduction target '" << target << "'\n";
        return kExitConfig;
    }
    design::Plant plant;
    plant.A = {{0.0, 0.0, 1.0, 0.0},
               {0.0, 0.0, 0.0, 1.0},
               {0.0, 152.0057, -12.2542, -0.5005},
               {0.0, 264.3080, -12.1117, -0.8702}};
    plant.B = {{0.0}, {0.0}, {50.6372}, {50.0484}};
    plant.C = {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    const Matrix l_lin{{-10.9008, 0.5005},
                       {12.1117, -22.0156},
                       {34.0122, -147.1205},
                       {121.4870, -343.9178}};
    config::ObserverParams op;
    op.kind = design::ObserverKind::Filtering;
    op.nu = -1.0 / 3.0;
    op.rho = 1.5;
    op.gamma = 2.75;

    design::ObserverDesign d;
    try {
        d = run_synthesis(plant, op, g);
    } catch (const Error& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return kExitSynthesis;
    }
    const fs::path dir = out_dir;
    fs::create_directories(dir);
    write_text(dir / "design.json", design::to_json(d).dump(2) + "\n");
    print_margins(d);

    sim::SimConfig base;
    base.dt = 0.5e-4;
    base.t_end = 1.5;
    base.x0 = Vector{2.0, 2.0, 1.0, 2.0};
    base.feedback_gain = Matrix{{2.0, -35.0, 1.5, -3.0}};
    base.seed = g.seed;

    sim::Observers obs;
    obs.filtering = d;
    obs.luenberger = l_lin;

    struct Scenario {
        std::string name;
        sim::SimConfig cfg;
    };
    std::vector<Scenario> scenarios;
    scenarios.push_back({"nominal", base});
    sim::SimConfig pert = base;
    pert.perturbation.kind = sim::Perturbation::Kind::Sinusoid;
    pert.perturbation.amplitude = 0.1;
    pert.perturbation.angular_frequency = 5.0;
    pert.perturbation.through_E = true;
    scenarios.push_back({"perturbed", pert});
    sim::SimConfig noisy = pert;
    noisy.noise.kind = sim::Noise::Kind::Uniform;
    noisy.noise.magnitude = 0.001;
    scenarios.push_back({"noisy", noisy});

    nlohmann::json summary;
    summary["quoted_terminal_error"] = 0.4e-4;
    bool all_pass = true;
    std::vector<std::string> deltas;
    for (const auto& sc : scenarios) {
        sim::Trajectory traj;
        try {
            traj = sim::simulate(plant, obs, sc.cfg);
        } catch (const sim::SimulationError& e) {
            std::cerr << "simulation blowup in scenario " << sc.name << " at t=" << e.time << "\n";
            return kExitSimulation;
        }
        write_outputs(dir, sc.name, traj, plant.n(), plant.k());
        write_text(dir / (sc.name + "_metrics.json"),
                   metrics_json(traj, 1.0, 1.5).dump(2) + "\n");
        const auto hom = sim::metrics(traj.times, traj.err_hom, 1.0, 1.5);
        const auto lin = sim::metrics(traj.times, traj.err_lin, 1.0, 1.5);
        nlohmann::json sj;
        sj["hom_terminal_error"] = hom.terminal_error;
        sj["hom_rms_1_to_1p5"] = hom.rms_error;
        sj["lin_terminal_error"] = lin.terminal_error;
        sj["lin_rms_1_to_1p5"] = lin.rms_error;
        if (sc.name == "nominal") {
            sj["band"] = {0.4e-5, 0.4e-3};
            sj["band_pass"] = hom.terminal_error >= 0.4e-5 && hom.terminal_error <= 0.4e-3;
            sj["abs_delta_vs_quoted"] = std::fabs(hom.terminal_error - 0.4e-4);
            sj["rel_delta_vs_quoted"] = std::fabs(hom.terminal_error - 0.4e-4) / 0.4e-4;
            if (!sj["band_pass"].get<bool>()) {
                all_pass = false;
                deltas.push_back("nominal terminal error " + std::to_string(hom.terminal_error) +
                                 " outside [4e-06, 4e-04]");
            }
        } else {
            const bool ordering = hom.rms_error < lin.rms_error;
            sj["ordering_pass"] = ordering;
            if (!ordering) {
                all_pass = false;
                deltas.push_back(sc.name + " rms ordering violated");
            }
            if (sc.name == "perturbed") {
                sj["terminal_pass"] = hom.terminal_error <= 1e-2;
                if (hom.terminal_error > 1e-2) {
                    all_pass = false;
                    deltas.push_back("perturbed terminal error above 1e-2");
                }
            }
        }
        summary[sc.name] = std::move(sj);
        std::cout << "scenario " << sc.name << ": hom terminal " << hom.terminal_error
                  << ", lin terminal " << lin.terminal_error << "\n";
    }
    summary["all_pass"] = all_pass;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    if (!all_pass) {
        std::cerr << "reproduction deltas:\n";
        for (const auto& s : deltas) std::cerr << "  " << s << "\n";
        return kExitReproduction;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"homogeneous observer design and simulation toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    std::string tol_path;
    app.add_option("--seed", g.seed, "global random seed");
    app.add_option("--tolerances", tol_path, "TOML file with tolerance overrides");

    std::string design_config, design_out;
    auto* sc_design = app.add_subcommand("design", "synthesize observer gains from a run config");
    sc_design->add_option("--config", design_config, "run config (TOML)")->required();
    sc_design->add_option("--out", design_out, "output design file (JSON)")->required();

    std::string verify_design_path;
    auto* sc_verify = app.add_subcommand("verify", "re-verify a design file");
    sc_verify->add_option("--design", verify_design_path, "design file (JSON)")->required();

    std::string sim_design_path, sim_scenario, sim_out;
    auto* sc_sim = app.add_subcommand("simulate", "simulate a design under a scenario");
    sc_sim->add_option("--design", sim_design_path, "design file (JSON)")->required();
    sc_sim->add_option("--scenario", sim_scenario, "scenario config (TOML)")->required();
    sc_sim->add_option("--out", sim_out, "output directory")->required();

    std::string repro_target, repro_out;
    auto* sc_repro = app.add_subcommand("reproduce", "run a bundled reproduction study");
    sc_repro->add_option("target", repro_target, "study name (pendulum)")->required();
    sc_repro->add_option("--out", repro_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    if (!tol_path.empty()) {
        try {
            g.tol = config::parse_tolerances(slurp_or_throw(tol_path));
        } catch (const Error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfig;
        }
    }

    try {
        if (*sc_design) return cmd_design(design_config, design_out, g);
        if (*sc_verify) return cmd_verify(verify_design_path, g);
        if (*sc_sim) return cmd_simulate(sim_design_path, sim_scenario, sim_out, g);
        if (*sc_repro) return cmd_reproduce(repro_target, repro_out, g);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const design::SynthesisError& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return kExitSynthesis;
    } catch (const design::UnobservableError& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return kExitSynthesis;
    } catch (const sim::SimulationError& e) {
        std::cerr << "simulation blowup at t=" << e.time << ": " << e.what() << "\n";
        return kExitSimulation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
