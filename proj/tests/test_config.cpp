#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "homobs/config.hpp"

using namespace homobs;

TEST_CASE("toml: scalars, arrays, tables, comments") {
    const std::string text = R"(# header comment
title = "demo"
count = 42
ratio = -1.5e-3
flag = true

[outer.inner]
xs = [1, 2.5,
      3]   # multiline array
name = "nested"
)";
    auto root = toml::parse(text);
    CHECK(root.at("title").string() == "demo");
    CHECK(root.at("count").integer() == 42);
    CHECK(root.at("ratio").number() == doctest::Approx(-1.5e-3));
    CHECK(root.at("flag").boolean());
    const auto& inner = root.at("outer").table().at("inner").table();
    CHECK(inner.at("xs").array().size() == 3);
    CHECK(inner.at("xs").array()[1].number() == doctest::Approx(2.5));
    CHECK(inner.at("name").string() == "nested");
}

TEST_CASE("toml: parse errors carry line numbers") {
    try {
        toml::parse("a = 1\nb = \n");
        FAIL("expected a parse error");
    } catch (const toml::ParseError& e) {
        CHECK(e.line_number == 2);
    }
    CHECK_THROWS_AS(toml::parse("x = [1, 2"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = nottrue"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = 1 y = 2"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = 1\nx = 2"), toml::ParseError);
}

namespace {

const char* kFullConfig = R"(scenario = "demo"
output_dir = "out"

[plant]
A = [[0.0, 1.0], [0.0, 0.0]]
B = [[0.0], [1.0]]
C = [[1.0, 0.0]]
q_bound = 0.1

[observer]
kind = "filtering"
nu = -0.3333333333333333
rho = 1.0
gamma = 1.0

[simulation]
dt = 1e-3
t_end = 0.5
x0 = [1.0, 2.0]
seed = 7
feedback_gain = [[0.5, -0.25]]

[simulation.perturbation]
type = "sinusoid"
amplitude = 0.1
angular_frequency = 5.0
through = "B"

[simulation.noise]
type = "uniform"
magnitude = 0.001

[simulation.luenberger]
L = [[-3.0], [-2.0]]
)";

}  // namespace

TEST_CASE("run config parses every section") {
    auto rc = config::parse_run_config(kFullConfig);
    REQUIRE(rc.plant.has_value());
    REQUIRE(rc.observer.has_value());
    REQUIRE(rc.simulation.has_value());
    REQUIRE(rc.luenberger.has_value());
    CHECK(rc.scenario_tag == "demo");
    CHECK(rc.output_dir == "out");
    CHECK(rc.plant->A(0, 1) == 1.0);
    CHECK(rc.plant->q_bound == doctest::Approx(0.1));
    CHECK(rc.observer->kind == design::ObserverKind::Filtering);
    CHECK(rc.observer->gamma == doctest::Approx(1.0));
    CHECK(rc.simulation->dt == doctest::Approx(1e-3));
    CHECK(rc.simulation->seed == 7);
    CHECK(rc.simulation->perturbation.kind == sim::Perturbation::Kind::Sinusoid);
    CHECK_FALSE(rc.simulation->perturbation.through_E);
    CHECK(rc.simulation->noise.magnitude == doctest::Approx(0.001));
    CHECK((*rc.luenberger)(0, 0) == doctest::Approx(-3.0));
}

TEST_CASE("run config rejects unknown keys") {
    CHECK_THROWS_AS(config::parse_run_config("mystery = 1\n"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_run_config("[plant]\nA = [[1.0]]\nB = [[1.0]]\nC = [[1.0]]\nwhat = 2\n"),
                    config::ConfigError);
    CHECK_THROWS_AS(config::parse_run_config("[simulation]\ndt = 0.1\nt_end = 1.0\nx0 = [1.0]\nbogus = 1\n"),
                    config::ConfigError);
}

TEST_CASE("run config validates values") {
    CHECK_THROWS_AS(config::parse_run_config("[observer]\nkind = \"other\"\nnu = 0.0\nrho = 1.0\n"),
                    config::ConfigError);
    CHECK_THROWS_AS(
        config::parse_run_config("[simulation]\ndt = 0.1\nt_end = 1.0\nx0 = [1.0]\nseed = -3\n"),
        config::ConfigError);
    // dt = 0 passes parsing but fails validation against a plant
    auto rc = config::parse_run_config("[simulation]\ndt = 0.0\nt_end = 1.0\nx0 = [1.0, 0.0]\n");
    design::Plant p;
    p.A = Matrix{{0.0, 1.0}, {0.0, 0.0}};
    p.B = Matrix{{0.0}, {1.0}};
    p.C = Matrix{{1.0, 0.0}};
    CHECK_THROWS_AS(rc.simulation->validate(p), ParameterError);
}

TEST_CASE("matrices can come from a json file path") {
    const std::string path = "test_config_matrix.json";
    {
        std::ofstream out(path);
        out << "[[0.0, 1.0], [0.0, 0.0]]";
    }
    const std::string cfg = "[plant]\nA = \"" + path +
                            "\"\nB = [[0.0], [1.0]]\nC = [[1.0, 0.0]]\n";
    auto rc = config::parse_run_config(cfg);
    CHECK(rc.plant->A(0, 1) == 1.0);
    std::remove(path.c_str());
}

TEST_CASE("tolerance overrides") {
    auto t = config::parse_tolerances("residual = 1e-6\npd_margin = 1e-7\n");
    CHECK(t.residual == doctest::Approx(1e-6));
    CHECK(t.pd_margin == doctest::Approx(1e-7));
    CHECK(t.symmetry == doctest::Approx(1e-10));  // untouched default
    CHECK_THROWS_AS(config::parse_tolerances("nonsense = 1\n"), config::ConfigError);
}
