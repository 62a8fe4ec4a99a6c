#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdanse/experiment.hpp"

using namespace cdanse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("cdanse_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// results.csv minus the timestamped comment line
std::string csv_body(const fs::path& p) {
    std::string s = slurp(p);
    if (!s.empty() && s[0] == '#') {
        auto nl = s.find('\n');
        REQUIRE(nl != std::string::npos);
        s = s.substr(nl + 1);
    }
    return s;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("config parsing: defaults", "[experiment]") {
    json j = {{"experiment", "mms_convergence"}, {"h", {0.25}}};
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.experiment == "mms_convergence");
    CHECK(cfg.solution == "paper");
    CHECK(cfg.problem == "nse");
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.seed == 12345UL);
    CHECK(cfg.Re_list == std::vector<double>{1.0});
    CHECK(cfg.observation_mode == ObservationMode::nodal_interp);
    CHECK(cfg.domain.same_as(unit_square(), 1e-12));
    CHECK(cfg.solver.convection == ConvectionForm::skew);
    CHECK_FALSE(cfg.ci_override);
    CHECK_FALSE(cfg.forced_f_dual.has_value());
}

TEST_CASE("config parsing: full document", "[experiment]") {
    json j = {{"experiment", "cda_sweep"},
              {"solution", "homogeneous"},
              {"domain", {0.0, 0.0, 2.0, 1.0}},
              {"h", {0.25, 0.125}},
              {"H", {0.5}},
              {"Re", {1.0, 100.0}},
              {"mu", json::array({10.0, json{{"mu_min_multiple", 5.0}}})},
              {"solver",
               {{"tol_rel", 1e-10},
                {"max_iter", 50},
                {"initial_guess", "zero"},
                {"convection", "plain"},
                {"pressure_constraint", "pin_dof"},
                {"observation_mode", "l2_projection"}}},
              {"theory", {{"M", 2.0}, {"C_I", 0.7}}},
              {"seed", 99},
              {"out", "somewhere"}};
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.h_list.size() == 2);
    CHECK(cfg.mu_list.size() == 2);
    CHECK_FALSE(cfg.mu_list[0].is_multiple);
    CHECK(cfg.mu_list[1].is_multiple);
    CHECK(cfg.mu_list[1].value == 5.0);
    CHECK(cfg.solver.max_iter == 50);
    CHECK(cfg.solver.initial_guess == InitialGuess::zero);
    CHECK(cfg.solver.convection == ConvectionForm::plain);
    CHECK(cfg.solver.pressure_constraint == PressureConstraint::pin_dof);
    CHECK(cfg.observation_mode == ObservationMode::l2_projection);
    CHECK(cfg.theory.M == 2.0);
    CHECK(cfg.ci_override);
    CHECK(cfg.theory.provenance == "user");
    CHECK(cfg.seed == 99UL);
    CHECK(cfg.out_dir == "somewhere");
    CHECK(cfg.domain.width() == 2.0);
}

TEST_CASE("config parsing: rejects malformed documents", "[experiment]") {
    CHECK_THROWS_AS(parse_experiment_config(json::array()), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "nope"}}), ConfigError);
    // missing h
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "mms_convergence"}}), ConfigError);
    // missing H / mu for a sweep
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "cda_sweep"}, {"h", {0.25}}}),
                    ConfigError);
    // bad mu entry
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "cda_sweep"},
                                                 {"h", {0.25}},
                                                 {"H", {0.5}},
                                                 {"mu", json::array({json{{"bogus", 1.0}}})}}),
                    ConfigError);
    // negative mu
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "cda_sweep"},
                                                 {"h", {0.25}},
                                                 {"H", {0.5}},
                                                 {"mu", {-1.0}}}),
                    ConfigError);
    // degenerate domain
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "mms_convergence"},
                                                 {"h", {0.25}},
                                                 {"domain", {0.0, 0.0, 0.0, 1.0}}}),
                    ConfigError);
    // bad solver enum
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "mms_convergence"},
                                                 {"h", {0.25}},
                                                 {"solver", {{"initial_guess", "given"}}}}),
                    ConfigError);
    // unknown solution name
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "mms_convergence"},
                                                 {"h", {0.25}},
                                                 {"solution", "mystery"}}),
                    ConfigError);
}

TEST_CASE("h must divide the domain into whole cells", "[experiment]") {
    fs::path out = fresh_dir("badh");
    json j = {{"experiment", "mms_convergence"}, {"h", {0.3}}, {"out", out.string()}};
    CHECK_THROWS_AS(run_experiment(parse_experiment_config(j)), ConfigError);
    fs::remove_all(out);
}

TEST_CASE("overrides rewrite nested keys", "[experiment]") {
    json j = {{"experiment", "mms_convergence"}, {"h", {0.25}}};
    apply_override(j, "solver.tol_rel=1e-10");
    apply_override(j, "h=[0.5,0.25]");
    apply_override(j, "solution=homogeneous");
    CHECK(j["solver"]["tol_rel"] == 1e-10);
    CHECK(j["h"].size() == 2);
    CHECK(j["solution"] == "homogeneous");
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "=5"), ConfigError);

    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK(cfg.solver.tol_rel == 1e-10);
    CHECK(cfg.solution == "homogeneous");
}

TEST_CASE("mms_convergence writes rows and rates", "[experiment]") {
    fs::path out = fresh_dir("mms");
    json j = {{"experiment", "mms_convergence"},
              {"problem", "stokes"},
              {"h", {0.25, 0.125}},
              {"out", out.string()}};
    run_experiment(parse_experiment_config(j));

    std::string body = csv_body(out / "results.csv");
    CHECK(count_lines(body) == 3);  // header + 2 rows
    CHECK(body.rfind("h,H,Re,mu,e_L2_u,e_H1_u,e_L2_p,div_L2,rate_L2_u,rate_H1_u,iterations,converged",
                     0) == 0);

    // second data row carries the observed rates in columns 9 and 10
    std::istringstream lines(body);
    std::string header, row1, row2;
    std::getline(lines, header);
    std::getline(lines, row1);
    std::getline(lines, row2);
    std::vector<std::string> fields;
    {
        std::istringstream fs2(row2);
        std::string tok;
        while (std::getline(fs2, tok, ',')) fields.push_back(tok);
    }
    REQUIRE(fields.size() >= 12);
    CHECK(fields[8].empty() == false);
    CHECK(std::stod(fields[8]) > 2.5);   // rate_L2_u
    CHECK(std::stod(fields[9]) > 1.7);   // rate_H1_u
    CHECK(fields[11] == "1");            // converged

    json rep = json::parse(slurp(out / "report.json"));
    REQUIRE(rep.contains("cells"));
    REQUIRE(rep["cells"].size() == 2);
    CHECK(rep["cells"][0]["problem"] == "stokes");
    fs::remove_all(out);
}

TEST_CASE("condition_report runs without meshes when fully forced", "[experiment]") {
    fs::path out = fresh_dir("cond");
    json j = {{"experiment", "condition_report"},
              {"H", {0.5}},
              {"mu", {1.0}},
              {"theory", {{"C_I", 1.0}, {"f_dual_norm", 0.5}}},
              {"out", out.string()}};
    run_experiment(parse_experiment_config(j));

    json rep = json::parse(slurp(out / "report.json"));
    REQUIRE(rep.contains("conditions"));
    REQUIRE(rep["conditions"].size() == 1);
    auto& c = rep["conditions"][0];
    CHECK(c["alpha"].get<double>() == 0.5);
    CHECK(c["small_data"].get<bool>() == true);
    CHECK(c["f_dual_is_estimate"].get<bool>() == false);
    CHECK(c["C_I"].get<double>() == 1.0);
    CHECK_FALSE(fs::exists(out / "results.csv"));
    fs::remove_all(out);
}

TEST_CASE("condition_report without forced norm needs a mesh", "[experiment]") {
    // missing h AND missing forced f_dual_norm: rejected at parse time
    CHECK_THROWS_AS(parse_experiment_config(json{{"experiment", "condition_report"},
                                                 {"H", {0.5}},
                                                 {"mu", {1.0}},
                                                 {"theory", {{"C_I", 1.0}}}}),
                    ConfigError);
}

TEST_CASE("cda_sweep end to end on a tiny grid", "[experiment]") {
    fs::path out = fresh_dir("sweep");
    json j = {{"experiment", "cda_sweep"},
              {"solution", "homogeneous"},
              {"h", {0.125}},
              {"H", {0.5}},
              {"mu", json::array({0.0, 100.0, json{{"mu_min_multiple", 2.0}}})},
              {"out", out.string()}};
    run_experiment(parse_experiment_config(j));

    std::string body = csv_body(out / "results.csv");
    CHECK(count_lines(body) == 4);  // header + 3 mu cells
    json rep = json::parse(slurp(out / "report.json"));
    REQUIRE(rep.contains("cells"));
    REQUIRE(rep["cells"].size() == 3);
    for (auto& c : rep["cells"]) {
        CHECK(c["report"]["converged"].get<bool>());
        REQUIRE(c.contains("condition"));
        CHECK(c["condition"]["alpha"].get<double>() > 0.0);
    }
    // the mu_min multiple resolved to a concrete value
    CHECK(rep["cells"][2]["mu"].get<double>() > 0.0);
    fs::remove_all(out);
}

TEST_CASE("observation files: round trip and validation", "[experiment]") {
    fs::path dir = fresh_dir("obsfiles");
    fs::path obs = dir / "obs.csv";
    {
        std::ofstream o(obs);
        o << "x,y,u1,u2\n";
        for (double y : {0.0, 0.5, 1.0})
            for (double x : {0.0, 0.5, 1.0}) o << x << "," << y << "," << x + y << "," << x - y << "\n";
    }
    fs::path out = dir / "out";
    json j = {{"experiment", "cda_sweep"},
              {"solution", "homogeneous"},
              {"observations", obs.string()},
              {"h", {0.125}},
              {"H", {0.5}},
              {"mu", {100.0}},
              {"out", out.string()}};
    run_experiment(parse_experiment_config(j));
    CHECK(fs::exists(out / "results.csv"));

    // a point off the coarse lattice
    fs::path bad1 = dir / "bad1.csv";
    {
        std::ofstream o(bad1);
        o << "x,y,u1,u2\n0.31,0.5,1,2\n";
    }
    json j1 = j;
    j1["observations"] = bad1.string();
    CHECK_THROWS_AS(run_experiment(parse_experiment_config(j1)), ConfigError);

    // a missing node
    fs::path bad2 = dir / "bad2.csv";
    {
        std::ofstream o(bad2);
        o << "x,y,u1,u2\n";
        for (double y : {0.0, 0.5, 1.0})
            for (double x : {0.0, 0.5, 1.0})
                if (!(x == 0.5 && y == 0.5)) o << x << "," << y << ",1,0\n";
    }
    json j2 = j;
    j2["observations"] = bad2.string();
    CHECK_THROWS_AS(run_experiment(parse_experiment_config(j2)), ConfigError);

    // a file that does not exist is rejected at parse time
    json j3 = j;
    j3["observations"] = (dir / "nope.csv").string();
    CHECK_THROWS_AS(parse_experiment_config(j3), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("uniqueness_test emits pair rows", "[experiment]") {
    fs::path out = fresh_dir("uniq");
    json j = {{"experiment", "uniqueness_test"},
              {"solution", "homogeneous"},
              {"h", {0.125}},
              {"H", {0.5}},
              {"mu", {100.0}},
              {"out", out.string()}};
    run_experiment(parse_experiment_config(j));

    std::string body = csv_body(out / "results.csv");
    CHECK(count_lines(body) == 4);  // header + 3 pairs
    CHECK(body.rfind("h,H,Re,mu,guess_a,guess_b,h1_distance,converged_a,converged_b", 0) == 0);
    json rep = json::parse(slurp(out / "report.json"));
    REQUIRE(rep["cells"].size() == 1);
    auto& pairs = rep["cells"][0]["pairs"];
    REQUIRE(pairs.size() == 3);
    for (auto& p : pairs) {
        CHECK(p["converged_a"].get<bool>());
        CHECK(p["converged_b"].get<bool>());
        CHECK(p["h1_distance"].get<double>() < 1e-6);
    }
    fs::remove_all(out);
}

TEST_CASE("worker count does not change the CSV body", "[experiment]") {
    json base = {{"experiment", "cda_sweep"},
                 {"solution", "homogeneous"},
                 {"h", {0.125}},
                 {"H", {0.5, 0.25}},
                 {"mu", {10.0, 1000.0}}};
    fs::path out1 = fresh_dir("det1");
    fs::path out2 = fresh_dir("det2");
    json j1 = base;
    j1["out"] = out1.string();
    json j2 = base;
    j2["out"] = out2.string();
    run_experiment(parse_experiment_config(j1), 1);
    run_experiment(parse_experiment_config(j2), 3);
    CHECK(csv_body(out1 / "results.csv") == csv_body(out2 / "results.csv"));
    CHECK(count_lines(csv_body(out1 / "results.csv")) == 5);
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("version string", "[experiment]") {
    CHECK(std::string(kVersion).find("cdanse") == 0);
}
