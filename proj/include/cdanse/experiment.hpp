#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cdanse/analysis.hpp"
#include "cdanse/mms.hpp"
#include "cdanse/observation.hpp"
#include "cdanse/solver.hpp"
#include "cdanse/theory.hpp"

namespace cdanse {

inline constexpr const char* kVersion = "cdanse 0.1.0";

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// mu entry: an absolute value, or a multiple of mu_min resolved per cell.
struct MuSpec {
    double value = 0.0;
    bool is_multiple = false;
};

struct ExperimentConfig {
    std::string experiment;         // mms_convergence | cda_sweep | uniqueness_test | condition_report
    std::string solution = "paper";
    std::string problem = "nse";    // mms_convergence only: nse | stokes
    std::string observations_file;  // optional CSV of coarse nodal observations
    Rect domain = unit_square();
    std::vector<double> h_list;
    std::vector<double> H_list;
    std::vector<double> Re_list;
    std::vector<MuSpec> mu_list;
    SolveConfig solver;
    ObservationMode observation_mode = ObservationMode::nodal_interp;
    TheoryConstants theory;
    bool ci_override = false;  // theory.C_I came from the config
    std::optional<double> forced_f_dual;
    unsigned long seed = 12345;
    bool vtk = false;
    std::string out_dir = "out";
};

namespace detail {

inline double json_number(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError("config error at " + where + ": expected a number");
    return j.get<double>();
}

inline std::vector<double> number_list(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config error at " + where + ": expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(json_number(j[i], where + "/" + std::to_string(i)));
    return out;
}

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using nlohmann::json;
    if (!j.is_object()) throw ConfigError("config error at /: top level must be a JSON object");
    ExperimentConfig cfg;
    if (!j.contains("experiment") || !j["experiment"].is_string())
        throw ConfigError("config error at /experiment: required string");
    cfg.experiment = j["experiment"].get<std::string>();
    if (cfg.experiment != "mms_convergence" && cfg.experiment != "cda_sweep" &&
        cfg.experiment != "uniqueness_test" && cfg.experiment != "condition_report")
        throw ConfigError("config error at /experiment: unknown experiment '" + cfg.experiment + "'");

    if (j.contains("solution")) {
        if (!j["solution"].is_string()) throw ConfigError("config error at /solution: expected string");
        cfg.solution = j["solution"].get<std::string>();
        try {
            get_builtin_solution(cfg.solution);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config error at /solution: ") + e.what());
        }
    }
    if (j.contains("problem")) {
        cfg.problem = j["problem"].get<std::string>();
        if (cfg.problem != "nse" && cfg.problem != "stokes")
            throw ConfigError("config error at /problem: expected 'nse' or 'stokes'");
    }
    if (j.contains("observations")) {
        if (!j["observations"].is_string())
            throw ConfigError("config error at /observations: expected a file path");
        cfg.observations_file = j["observations"].get<std::string>();
        if (!std::filesystem::exists(cfg.observations_file))
            throw ConfigError("config error at /observations: file not found: " + cfg.observations_file);
    }
    if (j.contains("domain")) {
        auto d = detail::number_list(j["domain"], "/domain");
        if (d.size() != 4) throw ConfigError("config error at /domain: expected [x0, y0, x1, y1]");
        cfg.domain = Rect{d[0], d[1], d[2], d[3]};
        if (!(cfg.domain.x1 > cfg.domain.x0) || !(cfg.domain.y1 > cfg.domain.y0))
            throw ConfigError("config error at /domain: degenerate rectangle");
    }
    if (j.contains("h")) cfg.h_list = detail::number_list(j["h"], "/h");
    if (j.contains("H")) cfg.H_list = detail::number_list(j["H"], "/H");
    if (j.contains("Re")) cfg.Re_list = detail::number_list(j["Re"], "/Re");
    for (double h : cfg.h_list)
        if (!(h > 0.0)) throw ConfigError("config error at /h: mesh sizes must be positive");
    for (double H : cfg.H_list)
        if (!(H > 0.0)) throw ConfigError("config error at /H: mesh sizes must be positive");
    for (double re : cfg.Re_list)
        if (!(re > 0.0)) throw ConfigError("config error at /Re: Reynolds numbers must be positive");

    if (j.contains("mu")) {
        const auto& arr = j["mu"];
        if (!arr.is_array() || arr.empty())
            throw ConfigError("config error at /mu: expected a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "/mu/" + std::to_string(i);
            MuSpec spec;
            if (arr[i].is_number()) {
                spec.value = arr[i].get<double>();
                if (spec.value < 0.0) throw ConfigError("config error at " + where + ": mu must be >= 0");
            } else if (arr[i].is_object() && arr[i].contains("mu_min_multiple")) {
                spec.value = detail::json_number(arr[i]["mu_min_multiple"], where + "/mu_min_multiple");
                spec.is_multiple = true;
                if (!(spec.value > 0.0))
                    throw ConfigError("config error at " + where + ": mu_min_multiple must be > 0");
            } else {
                throw ConfigError("config error at " + where +
                                  ": expected a number or {\"mu_min_multiple\": k}");
            }
            cfg.mu_list.push_back(spec);
        }
    }

    if (j.contains("solver")) {
        const auto& s = j["solver"];
        if (!s.is_object()) throw ConfigError("config error at /solver: expected an object");
        auto& sc = cfg.solver;
        if (s.contains("tol_rel")) sc.tol_rel = detail::json_number(s["tol_rel"], "/solver/tol_rel");
        if (s.contains("tol_abs")) sc.tol_abs = detail::json_number(s["tol_abs"], "/solver/tol_abs");
        if (s.contains("max_iter")) sc.max_iter = int(detail::json_number(s["max_iter"], "/solver/max_iter"));
        if (s.contains("damping")) sc.damping = detail::json_number(s["damping"], "/solver/damping");
        if (s.contains("divergence_guard"))
            sc.divergence_guard = detail::json_number(s["divergence_guard"], "/solver/divergence_guard");
        if (s.contains("quad_degree"))
            sc.quad_degree = int(detail::json_number(s["quad_degree"], "/solver/quad_degree"));
        if (s.contains("initial_guess")) {
            const std::string g = s["initial_guess"].get<std::string>();
            if (g == "zero") sc.initial_guess = InitialGuess::zero;
            else if (g == "stokes") sc.initial_guess = InitialGuess::stokes;
            else throw ConfigError("config error at /solver/initial_guess: expected 'zero' or 'stokes'");
        }
        if (s.contains("convection")) {
            const std::string c = s["convection"].get<std::string>();
            if (c == "skew") sc.convection = ConvectionForm::skew;
            else if (c == "plain") sc.convection = ConvectionForm::plain;
            else throw ConfigError("config error at /solver/convection: expected 'skew' or 'plain'");
        }
        if (s.contains("nudging_variant")) {
            const std::string v = s["nudging_variant"].get<std::string>();
            if (v == "IH_IH") sc.nudging_variant = NudgingVariant::IH_IH;
            else if (v == "IH_v") sc.nudging_variant = NudgingVariant::IH_v;
            else throw ConfigError("config error at /solver/nudging_variant: expected 'IH_IH' or 'IH_v'");
        }
        if (s.contains("pressure_constraint")) {
            const std::string p = s["pressure_constraint"].get<std::string>();
            if (p == "mean_zero_lagrange") sc.pressure_constraint = PressureConstraint::mean_zero_lagrange;
            else if (p == "pin_dof") sc.pressure_constraint = PressureConstraint::pin_dof;
            else
                throw ConfigError(
                    "config error at /solver/pressure_constraint: expected 'mean_zero_lagrange' or 'pin_dof'");
        }
        if (s.contains("observation_mode")) {
            const std::string m = s["observation_mode"].get<std::string>();
            if (m == "nodal_interp") cfg.observation_mode = ObservationMode::nodal_interp;
            else if (m == "l2_projection") cfg.observation_mode = ObservationMode::l2_projection;
            else
                throw ConfigError(
                    "config error at /solver/observation_mode: expected 'nodal_interp' or 'l2_projection'");
        }
        try {
            SolveConfig check = sc;
            check.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config error at /solver: ") + e.what());
        }
    }

    if (j.contains("theory")) {
        const auto& t = j["theory"];
        if (!t.is_object()) throw ConfigError("config error at /theory: expected an object");
        if (t.contains("M")) cfg.theory.M = detail::json_number(t["M"], "/theory/M");
        if (t.contains("M1")) cfg.theory.M1 = detail::json_number(t["M1"], "/theory/M1");
        if (t.contains("M2")) cfg.theory.M2 = detail::json_number(t["M2"], "/theory/M2");
        if (t.contains("C_I") && !t["C_I"].is_null()) {
            cfg.theory.C_I = detail::json_number(t["C_I"], "/theory/C_I");
            cfg.ci_override = true;
        }
        if (t.contains("M") || t.contains("M1") || t.contains("M2")) cfg.theory.provenance = "user";
        if (t.contains("f_dual_norm") && !t["f_dual_norm"].is_null())
            cfg.forced_f_dual = detail::json_number(t["f_dual_norm"], "/theory/f_dual_norm");
        if (!(cfg.theory.M > 0.0) || !(cfg.theory.M1 > 0.0) || !(cfg.theory.M2 > 0.0) ||
            !(cfg.theory.C_I > 0.0))
            throw ConfigError("config error at /theory: constants must be positive");
    }

    if (j.contains("seed")) cfg.seed = j["seed"].get<unsigned long>();
    if (j.contains("vtk")) cfg.vtk = j["vtk"].get<bool>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();

    // per-experiment requirements
    const bool needs_h = cfg.experiment != "condition_report" || !cfg.forced_f_dual || !cfg.ci_override;
    if (needs_h && cfg.h_list.empty()) throw ConfigError("config error at /h: required for this experiment");
    if (cfg.Re_list.empty()) cfg.Re_list.push_back(1.0);
    if (cfg.experiment != "mms_convergence") {
        if (cfg.H_list.empty()) throw ConfigError("config error at /H: required for this experiment");
        if (cfg.mu_list.empty()) throw ConfigError("config error at /mu: required for this experiment");
    }
    return cfg;
}

/// --set key.path=value override applied to the raw JSON document.
inline void apply_override(nlohmann::json& j, const std::string& keyval) {
    const auto eq = keyval.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config error: --set expects key.path=value, got '" + keyval + "'");
    const std::string path = keyval.substr(0, eq);
    const std::string raw = keyval.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;  // unquoted strings
    }
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("config error: empty key segment in --set path '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

namespace detail {

inline int nx_from_size(double h, double width, const std::string& what) {
    const double r = width / h;
    const long n = std::lround(r);
    if (n < 1 || std::abs(r - double(n)) > 1e-6 * std::max(1.0, r))
        throw ConfigError("config error: " + what + "=" + fmt_g(h) +
                          " does not divide the domain into a whole number of cells");
    return int(n);
}

/// Immutable per-run caches, built single-threaded before any sweep cells run.
struct SweepContext {
    const ExperimentConfig& cfg;
    ManufacturedSolution sol;
    bool has_solution = true;
    std::map<int, std::unique_ptr<StructuredTriMesh>> meshes;
    std::map<int, std::unique_ptr<TaylorHoodSpace>> spaces;
    std::map<std::pair<int, int>, std::unique_ptr<ObservationOperator>> ops;
    std::map<std::pair<int, int>, double> ci;        // per (fine nx, coarse nx)
    std::map<int, Eigen::VectorXd> u_obs;            // per fine nx
    std::map<std::pair<int, int>, double> f_dual;    // per (fine nx, Re index)

    explicit SweepContext(const ExperimentConfig& c) : cfg(c) {
        if (!cfg.solution.empty()) sol = get_builtin_solution(cfg.solution);
    }

    const TaylorHoodSpace& space(int nx) {
        auto it = spaces.find(nx);
        if (it != spaces.end()) return *it->second;
        auto mesh = std::make_unique<StructuredTriMesh>(nx, int(std::lround(
            double(nx) * cfg.domain.height() / cfg.domain.width())), cfg.domain);
        auto* mp = mesh.get();
        meshes.emplace(nx, std::move(mesh));
        auto sp = std::make_unique<TaylorHoodSpace>(*mp);
        auto* spp = sp.get();
        spaces.emplace(nx, std::move(sp));
        return *spp;
    }

    const ObservationOperator& op(int fine_nx, int coarse_nx) {
        auto key = std::make_pair(fine_nx, coarse_nx);
        auto it = ops.find(key);
        if (it != ops.end()) return *it->second;
        const TaylorHoodSpace& fine = space(fine_nx);
        StructuredTriMesh coarse(coarse_nx, int(std::lround(double(coarse_nx) * cfg.domain.height() /
                                                            cfg.domain.width())), cfg.domain);
        auto o = std::make_unique<ObservationOperator>(
            build_observation(coarse, fine, cfg.observation_mode, cfg.solver.quad_degree));
        auto* op_p = o.get();
        ops.emplace(key, std::move(o));
        return *op_p;
    }

    double ci_for(int fine_nx, int coarse_nx) {
        if (cfg.ci_override) return cfg.theory.C_I;
        auto key = std::make_pair(fine_nx, coarse_nx);
        auto it = ci.find(key);
        if (it != ci.end()) return it->second;
        const ObservationOperator& o = op(fine_nx, coarse_nx);
        const double v = estimate_CI(o, default_ci_probes(o), cfg.solver.quad_degree);
        ci.emplace(key, v);
        return v;
    }
};

inline std::string csv_timestamp() {
    std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << body;
    if (!f) throw IoError("write failed: " + path.string());
}

template <typename Body>
inline void run_cells(int n, int workers, Body&& body) {
    workers = std::max(1, std::min(workers, n));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& t : pool) t.join();
}

/// Observations file: CSV rows x,y,u1,u2 at the coarse nodes; returns the
/// component-blocked coarse coefficient vector.
inline Eigen::VectorXd load_observation_csv(const std::string& path,
                                            const StructuredTriMesh& coarse) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read observations file: " + path);
    const int vc = coarse.vertex_count();
    Eigen::VectorXd vals = Eigen::VectorXd::Zero(2 * vc);
    std::vector<char> seen(std::size_t(vc), 0);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double x, y, u1, u2;
        if (!(ss >> x >> y >> u1 >> u2)) {
            if (lineno == 1) continue;  // header row
            throw ConfigError("observations file line " + std::to_string(lineno) +
                              ": expected x,y,u1,u2");
        }
        int match = -1;
        for (int v = 0; v < vc; ++v) {
            Vec2 p = coarse.vertex(v);
            if (std::abs(p.x - x) <= 1e-10 && std::abs(p.y - y) <= 1e-10) {
                match = v;
                break;
            }
        }
        if (match < 0)
            throw ConfigError("observations file line " + std::to_string(lineno) +
                              ": point is not a coarse mesh node");
        vals[match] = u1;
        vals[vc + match] = u2;
        seen[std::size_t(match)] = 1;
    }
    for (int v = 0; v < vc; ++v)
        if (!seen[std::size_t(v)])
            throw ConfigError("observations file misses coarse node " + std::to_string(v));
    return vals;
}

}  // namespace detail

/// Per-cell outcome shared by the sweep experiments.
struct CellOutcome {
    double h = 0.0, Hcells = 0.0, Re = 0.0, mu = 0.0;
    bool has_errors = false;
    ErrorRow err;
    SolveReport report;
    bool has_condition = false;
    ConditionReport condition;
    std::string hard_failure;  // non-empty on unexpected exceptions
    // uniqueness pairs: (label_a, label_b, H1 distance, both_converged)
    struct Pair {
        std::string a, b;
        double h1_distance = 0.0;
        bool converged_a = false, converged_b = false;
    };
    std::vector<Pair> pairs;
};

inline nlohmann::json condition_to_json(const ConditionReport& c) {
    nlohmann::json j;
    j["alpha"] = c.alpha;
    j["f_dual_norm"] = c.f_dual_norm;
    j["f_dual_is_estimate"] = c.f_dual_is_estimate;
    j["f_norm_mesh"] = c.f_norm_mesh;
    j["H"] = c.H;
    j["mu"] = c.mu;
    j["lambda"] = c.lambda;
    j["H_max_general"] = c.H_max_general;
    j["H_max_2d"] = c.H_max_2d;
    j["mu_min"] = c.mu_min;
    j["small_data"] = c.small_data;
    j["condition_satisfied_general"] = c.condition_satisfied_general;
    j["condition_satisfied_2d"] = c.condition_satisfied_2d;
    j["constants_provenance"] = c.constants_provenance;
    return j;
}

inline nlohmann::json report_to_json(const SolveReport& r) {
    nlohmann::json j;
    j["converged"] = r.converged;
    j["diverged"] = r.diverged;
    j["linear_failure"] = r.linear_failure;
    if (!r.failure_message.empty()) j["failure_message"] = r.failure_message;
    j["iterations"] = r.iterations;
    j["nonlinear_residual"] = r.nonlinear_residual;
    j["div_l2"] = r.div_l2;
    j["pressure_mean"] = r.pressure_mean;
    j["wall_time_seconds"] = r.wall_time_seconds;
    return j;
}

/// Runs the configured experiment, writing results.csv and report.json (plus
/// optional VTK dumps) under out_dir.  Returns normally even when cells fail
/// to converge; throws ConfigError / IoError for config and I/O problems.
inline void run_experiment(const ExperimentConfig& cfg, int workers = 1,
                           std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    using detail::fmt_g;
    const fs::path out(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());

    detail::SweepContext ctx(cfg);
    nlohmann::json jreport;
    jreport["version"] = kVersion;
    jreport["experiment"] = cfg.experiment;
    jreport["seed"] = cfg.seed;
    std::string csv_body;
    auto logln = [log](const std::string& s) {
        if (log) (*log) << s << "\n";
    };

    if (cfg.experiment == "condition_report") {
        // no nonlinear solves: alpha and the bounds per (Re, H, mu)
        nlohmann::json cells = nlohmann::json::array();
        const bool have_fine = !cfg.h_list.empty();
        const double h_fine = have_fine ? *std::min_element(cfg.h_list.begin(), cfg.h_list.end()) : 0.0;
        const int nx_fine = have_fine ? detail::nx_from_size(h_fine, cfg.domain.width(), "h") : 0;
        for (double Re : cfg.Re_list) {
            const double nu = 1.0 / Re;
            double fdual;
            if (cfg.forced_f_dual) {
                fdual = *cfg.forced_f_dual;
            } else {
                const TaylorHoodSpace& sp = ctx.space(nx_fine);
                VectorFn f = forcing_from_solution(ctx.sol, nu);
                fdual = dual_norm_estimate(f, sp, cfg.solver.quad_degree).second;
            }
            for (double H : cfg.H_list) {
                const int nH = detail::nx_from_size(H, cfg.domain.width(), "H");
                StructuredTriMesh coarse(nH, int(std::lround(double(nH) * cfg.domain.height() /
                                                             cfg.domain.width())), cfg.domain);
                const double Hdiam = coarse.mesh_size();
                double ci_val = cfg.theory.C_I;
                if (!cfg.ci_override) {
                    if (!have_fine)
                        throw ConfigError("config error at /theory/C_I: required when no fine mesh given");
                    ci_val = ctx.ci_for(nx_fine, nH);
                }
                TheoryConstants tc = cfg.theory;
                tc.C_I = ci_val;
                const double alpha = compute_alpha(nu, fdual, tc.M);
                for (const MuSpec& ms : cfg.mu_list) {
                    const double mu =
                        ms.is_multiple ? ms.value * compute_mu_min(nu, ci_val, Hdiam) : ms.value;
                    ConditionReport rep = theorem_bounds(tc, alpha, nu, Hdiam, mu);
                    rep.f_dual_is_estimate = !cfg.forced_f_dual.has_value();
                    rep.f_norm_mesh = have_fine ? "h=" + fmt_g(h_fine) : "forced";
                    nlohmann::json c = condition_to_json(rep);
                    c["Re"] = Re;
                    c["H_cells"] = H;
                    c["C_I"] = ci_val;
                    cells.push_back(c);
                }
            }
        }
        jreport["conditions"] = cells;
        detail::write_text_file(out / "report.json", jreport.dump(2) + "\n");
        logln("condition_report: " + std::to_string(cells.size()) + " cells -> " +
              (out / "report.json").string());
        return;
    }

    if (cfg.experiment == "mms_convergence") {
        struct Cell {
            double h, Re;
            int nx;
        };
        std::vector<Cell> cells;
        for (double Re : cfg.Re_list)
            for (double h : cfg.h_list)
                cells.push_back({h, Re, detail::nx_from_size(h, cfg.domain.width(), "h")});
        for (const Cell& c : cells) ctx.space(c.nx);  // pre-build (threads read only)

        std::vector<CellOutcome> outcomes(cells.size());
        detail::run_cells(int(cells.size()), workers, [&](int i) {
            const Cell& c = cells[std::size_t(i)];
            CellOutcome& oc = outcomes[std::size_t(i)];
            oc.h = c.h;
            oc.Re = c.Re;
            try {
                const TaylorHoodSpace& sp = ctx.space(c.nx);
                SolveConfig scfg = cfg.solver;
                scfg.nu = 1.0 / c.Re;
                scfg.mu = 0.0;
                DirichletData bc = velocity_dirichlet(sp, ctx.sol.velocity);
                VelocityPressureField field(sp);
                if (cfg.problem == "stokes") {
                    VectorFn f = stokes_forcing_from_solution(ctx.sol, scfg.nu);
                    auto [fld, rep] = solve_stokes(sp, scfg, f, bc);
                    field = std::move(fld);
                    oc.report = rep;
                } else {
                    VectorFn f = forcing_from_solution(ctx.sol, scfg.nu);
                    auto [fld, rep] = solve_nse(sp, scfg, f, bc);
                    field = std::move(fld);
                    oc.report = rep;
                }
                if (oc.report.converged) {
                    oc.err = error_vs_exact(field, ctx.sol, cfg.solver.quad_degree);
                    oc.has_errors = true;
                }
                if (cfg.vtk && oc.report.converged) {
                    std::ostringstream os;
                    write_vtk(field, os, "mms h=" + fmt_g(c.h));
                    detail::write_text_file(out / ("cell_" + std::to_string(i) + ".vtk"), os.str());
                }
            } catch (const std::exception& e) {
                oc.hard_failure = e.what();
            }
        });

        // rates between consecutive h within each Re group
        std::ostringstream csv;
        csv << "h,H,Re,mu,e_L2_u,e_H1_u,e_L2_p,div_L2,rate_L2_u,rate_H1_u,iterations,converged\n";
        nlohmann::json jcells = nlohmann::json::array();
        const std::size_t nh = cfg.h_list.size();
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            const CellOutcome& oc = outcomes[i];
            std::string r_l2, r_h1;
            if (i % nh != 0 && oc.has_errors && outcomes[i - 1].has_errors) {
                const ErrorRow& prev = outcomes[i - 1].err;
                if (prev.e_l2_u > 0.0 && oc.err.e_l2_u > 0.0)
                    r_l2 = fmt_g(std::log2(prev.e_l2_u / oc.err.e_l2_u) /
                                 std::log2(outcomes[i - 1].h / oc.h));
                if (prev.e_h1_u > 0.0 && oc.err.e_h1_u > 0.0)
                    r_h1 = fmt_g(std::log2(prev.e_h1_u / oc.err.e_h1_u) /
                                 std::log2(outcomes[i - 1].h / oc.h));
            }
            csv << fmt_g(oc.h) << ",0," << fmt_g(oc.Re) << ",0,";
            if (oc.has_errors)
                csv << fmt_g(oc.err.e_l2_u) << "," << fmt_g(oc.err.e_h1_u) << ","
                    << fmt_g(oc.err.e_l2_p) << "," << fmt_g(oc.err.div_l2) << ",";
            else
                csv << ",,,,";
            csv << r_l2 << "," << r_h1 << "," << oc.report.iterations << ","
                << (oc.report.converged ? 1 : 0) << "\n";
            nlohmann::json jc;
            jc["h"] = oc.h;
            jc["Re"] = oc.Re;
            jc["problem"] = cfg.problem;
            jc["report"] = report_to_json(oc.report);
            if (oc.has_errors) {
                jc["e_L2_u"] = oc.err.e_l2_u;
                jc["e_H1_u"] = oc.err.e_h1_u;
                jc["e_L2_p"] = oc.err.e_l2_p;
                jc["div_L2"] = oc.err.div_l2;
            }
            if (!oc.hard_failure.empty()) jc["hard_failure"] = oc.hard_failure;
            jcells.push_back(jc);
        }
        csv_body = csv.str();
        jreport["cells"] = jcells;
    } else {
        // cda_sweep and uniqueness_test share the (h, Re, H, mu) cell lattice
        struct Cell {
            double h, Re, H;
            MuSpec mu;
            int nx, nH;
        };
        std::vector<Cell> cells;
        for (double h : cfg.h_list)
            for (double Re : cfg.Re_list)
                for (double H : cfg.H_list)
                    for (const MuSpec& ms : cfg.mu_list)
                        cells.push_back({h, Re, H, ms, detail::nx_from_size(h, cfg.domain.width(), "h"),
                                         detail::nx_from_size(H, cfg.domain.width(), "H")});

        // single-threaded cache warm-up
        const bool from_file = !cfg.observations_file.empty();
        for (const Cell& c : cells) {
            ctx.space(c.nx);
            const ObservationOperator& o = ctx.op(c.nx, c.nH);
            if (!cfg.ci_override) ctx.ci_for(c.nx, c.nH);
            if (!ctx.u_obs.count(c.nx)) {
                if (from_file) {
                    Eigen::VectorXd coarse_vals =
                        detail::load_observation_csv(cfg.observations_file, o.coarse);
                    ctx.u_obs.emplace(c.nx, o.prolong(coarse_vals));
                } else {
                    ctx.u_obs.emplace(
                        c.nx, interpolate_function(ctx.space(c.nx), ctx.sol.velocity).velocity);
                }
            }
        }
        for (std::size_t ri = 0; ri < cfg.Re_list.size(); ++ri)
            for (const Cell& c : cells) {
                if (cfg.forced_f_dual) continue;
                auto key = std::make_pair(c.nx, int(ri));
                if (ctx.f_dual.count(key)) continue;
                const double nu = 1.0 / cfg.Re_list[ri];
                VectorFn f = forcing_from_solution(ctx.sol, nu);
                ctx.f_dual.emplace(key,
                                   dual_norm_estimate(f, ctx.space(c.nx), cfg.solver.quad_degree).second);
            }

        std::vector<CellOutcome> outcomes(cells.size());
        detail::run_cells(int(cells.size()), workers, [&](int i) {
            const Cell& c = cells[std::size_t(i)];
            CellOutcome& oc = outcomes[std::size_t(i)];
            oc.h = c.h;
            oc.Hcells = c.H;
            oc.Re = c.Re;
            try {
                const TaylorHoodSpace& sp = ctx.space(c.nx);
                const ObservationOperator& o = ctx.op(c.nx, c.nH);
                const double nu = 1.0 / c.Re;
                const double ci_val = cfg.ci_override ? cfg.theory.C_I : ctx.ci.at({c.nx, c.nH});
                const double mu =
                    c.mu.is_multiple ? c.mu.value * compute_mu_min(nu, ci_val, o.H) : c.mu.value;
                oc.mu = mu;

                SolveConfig scfg = cfg.solver;
                scfg.nu = nu;
                scfg.mu = mu;
                CdaProblem prob;
                prob.space = &sp;
                prob.config = scfg;
                prob.f = forcing_from_solution(ctx.sol, nu);
                prob.bc = velocity_dirichlet(sp, ctx.sol.velocity);
                prob.op = &o;
                const Eigen::VectorXd& uobs = ctx.u_obs.at(c.nx);
                prob.u_obs = &uobs;

                // per-cell condition report from cached quantities
                TheoryConstants tc = cfg.theory;
                tc.C_I = ci_val;
                double fdual = cfg.forced_f_dual ? *cfg.forced_f_dual : 0.0;
                if (!cfg.forced_f_dual) {
                    const auto rit = std::find(cfg.Re_list.begin(), cfg.Re_list.end(), c.Re);
                    fdual = ctx.f_dual.at({c.nx, int(rit - cfg.Re_list.begin())});
                }
                oc.condition = theorem_bounds(tc, compute_alpha(nu, fdual, tc.M), nu, o.H, mu);
                oc.condition.f_norm_mesh = "h=" + fmt_g(c.h);
                oc.has_condition = true;

                if (cfg.experiment == "cda_sweep") {
                    auto [field, rep] = solve_cda_nse(prob);
                    oc.report = rep;
                    if (!from_file && rep.converged) {
                        oc.err = error_vs_exact(field, ctx.sol, cfg.solver.quad_degree);
                        oc.has_errors = true;
                    }
                    if (cfg.vtk && rep.converged) {
                        std::ostringstream os;
                        write_vtk(field, os, "cda cell " + std::to_string(i));
                        detail::write_text_file(out / ("cell_" + std::to_string(i) + ".vtk"), os.str());
                    }
                } else {  // uniqueness_test
                    struct Run {
                        std::string label;
                        VelocityPressureField field;
                        SolveReport rep;
                    };
                    std::vector<Run> runs;
                    VelocityPressureField exact_interp =
                        interpolate_function(sp, ctx.sol.velocity, ctx.sol.pressure);
                    for (const char* label : {"zero", "stokes", "perturbed"}) {
                        CdaProblem p2 = prob;
                        VelocityPressureField guess(sp);
                        if (std::string(label) == "zero") {
                            p2.config.initial_guess = InitialGuess::zero;
                        } else if (std::string(label) == "stokes") {
                            p2.config.initial_guess = InitialGuess::stokes;
                        } else {
                            p2.config.initial_guess = InitialGuess::given;
                            std::mt19937 gen(unsigned(cfg.seed) + 7919u * unsigned(i));
                            std::uniform_real_distribution<double> dist(-1.0, 1.0);
                            VelocityPressureField pert(sp);
                            for (Eigen::Index k = 0; k < pert.velocity.size(); ++k)
                                pert.velocity[k] = dist(gen);
                            for (int d : sp.boundary_velocity_dofs()) pert.velocity[d] = 0.0;
                            const double pn = norms(pert, cfg.solver.quad_degree).h1_semi;
                            if (pn > 0.0) pert.velocity *= 0.5 / pn;
                            guess = exact_interp;
                            guess.velocity += pert.velocity;
                            p2.guess = &guess;
                        }
                        auto [field, rep] = solve_cda_nse(p2);
                        runs.push_back({label, std::move(field), rep});
                    }
                    oc.report = runs[0].rep;
                    for (std::size_t a = 0; a < runs.size(); ++a)
                        for (std::size_t b = a + 1; b < runs.size(); ++b) {
                            CellOutcome::Pair pr;
                            pr.a = runs[a].label;
                            pr.b = runs[b].label;
                            pr.h1_distance =
                                difference_norms(runs[a].field, runs[b].field, cfg.solver.quad_degree)
                                    .h1_semi;
                            pr.converged_a = runs[a].rep.converged;
                            pr.converged_b = runs[b].rep.converged;
                            oc.pairs.push_back(pr);
                        }
                }
            } catch (const std::exception& e) {
                oc.hard_failure = e.what();
            }
        });

        std::ostringstream csv;
        nlohmann::json jcells = nlohmann::json::array();
        if (cfg.experiment == "cda_sweep") {
            csv << "h,H,Re,mu,e_L2_u,e_H1_u,e_L2_p,div_L2,rate_L2_u,rate_H1_u,iterations,converged\n";
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                const CellOutcome& oc = outcomes[i];
                csv << fmt_g(oc.h) << "," << fmt_g(oc.Hcells) << "," << fmt_g(oc.Re) << ","
                    << fmt_g(oc.mu) << ",";
                if (oc.has_errors)
                    csv << fmt_g(oc.err.e_l2_u) << "," << fmt_g(oc.err.e_h1_u) << ","
                        << fmt_g(oc.err.e_l2_p) << "," << fmt_g(oc.err.div_l2) << ",";
                else
                    csv << ",,,,";
                csv << ",," << oc.report.iterations << "," << (oc.report.converged ? 1 : 0) << "\n";
            }
        } else {
            csv << "h,H,Re,mu,guess_a,guess_b,h1_distance,converged_a,converged_b\n";
            for (const CellOutcome& oc : outcomes)
                for (const auto& pr : oc.pairs)
                    csv << fmt_g(oc.h) << "," << fmt_g(oc.Hcells) << "," << fmt_g(oc.Re) << ","
                        << fmt_g(oc.mu) << "," << pr.a << "," << pr.b << ","
                        << fmt_g(pr.h1_distance) << "," << (pr.converged_a ? 1 : 0) << ","
                        << (pr.converged_b ? 1 : 0) << "\n";
        }
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            const CellOutcome& oc = outcomes[i];
            nlohmann::json jc;
            jc["h"] = oc.h;
            jc["H"] = oc.Hcells;
            jc["Re"] = oc.Re;
            jc["mu"] = oc.mu;
            jc["report"] = report_to_json(oc.report);
            if (oc.has_condition) jc["condition"] = condition_to_json(oc.condition);
            if (oc.has_errors) {
                jc["e_L2_u"] = oc.err.e_l2_u;
                jc["e_H1_u"] = oc.err.e_h1_u;
                jc["e_L2_p"] = oc.err.e_l2_p;
                jc["div_L2"] = oc.err.div_l2;
            }
            for (const auto& pr : oc.pairs) {
                nlohmann::json jp;
                jp["a"] = pr.a;
                jp["b"] = pr.b;
                jp["h1_distance"] = pr.h1_distance;
                jp["converged_a"] = pr.converged_a;
                jp["converged_b"] = pr.converged_b;
                jc["pairs"].push_back(jp);
            }
            if (!oc.hard_failure.empty()) jc["hard_failure"] = oc.hard_failure;
            jcells.push_back(jc);
        }
        csv_body = csv.str();
        jreport["cells"] = jcells;
    }

    detail::write_text_file(out / "results.csv",
                            "# " + std::string(kVersion) + " " + cfg.experiment + " generated " +
                                detail::csv_timestamp() + "\n" + csv_body);
    detail::write_text_file(out / "report.json", jreport.dump(2) + "\n");
    logln(cfg.experiment + ": wrote " + (out / "results.csv").string() + " and " +
          (out / "report.json").string());
}

}  // namespace cdanse
