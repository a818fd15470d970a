// ddec: batch analysis of linear difference delay equations with distributed
// delays. File-in / file-out; subcommands mirror the library modules.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ddec/frequency.hpp"
#include "ddec/fundamental.hpp"
#include "ddec/json_io.hpp"
#include "ddec/measure.hpp"
#include "ddec/simulate.hpp"
#include "ddec/synthesis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string system_path;
    std::string out_dir = ".";
    double T = -1.0;       // resolved per subcommand
    double h = -1.0;       // default 1e-3 * Lambda_1
    double lambda = -1.0;  // auto
    double q = 2.0;
    double re_min = 10.0;  // magnitude of the left edge
    double re_max = std::nan("");
    double im_max = std::nan("");
    double rank_tol = 1e-8;
    int max_atoms = 20000;
    double window = -1.0;  // default 2 d Lambda_N + Lambda_N
    double tol = 1e-8;
    std::string phi_path, u_path, target_path, T_list_spec;
};

double resolved_h(const Options& opt, const ddec::DelaySystem& sys) {
    if (opt.h > 0.0) return opt.h;
    return 1e-3 * sys.lambda_min();
}

double resolved_T(const Options& opt, const ddec::DelaySystem& sys) {
    if (opt.T > 0.0) return opt.T;
    return 2.0 * sys.d * sys.lambda_max();
}

ddec::Rectangle resolved_rect(const Options& opt, const ddec::DelaySystem& sys) {
    ddec::Rectangle r = ddec::default_rectangle(sys, opt.re_min);
    if (!std::isnan(opt.re_max)) r.re_max = opt.re_max;
    if (!std::isnan(opt.im_max)) {
        r.im_max = opt.im_max;
        r.im_min = -opt.im_max;
    }
    return r;
}

std::vector<double> parse_T_list(const std::string& spec) {
    std::vector<double> out;
    std::istringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell == "pi")
            out.push_back(std::numbers::pi);
        else
            out.push_back(std::stod(cell));
    }
    return out;
}

json config_echo(const std::string& sub, const Options& opt, const ddec::DelaySystem& sys) {
    json j;
    j["subcommand"] = sub;
    j["system"] = opt.system_path;
    j["out"] = opt.out_dir;
    j["T"] = resolved_T(opt, sys);
    j["h"] = resolved_h(opt, sys);
    j["lambda"] = opt.lambda > 0 ? json(opt.lambda) : json("auto");
    j["q"] = opt.q;
    j["rank_tol"] = opt.rank_tol;
    j["max_atoms"] = opt.max_atoms;
    j["window"] = opt.window > 0 ? opt.window
                                 : 2.0 * sys.d * sys.lambda_max() + sys.lambda_max();
    j["tol"] = opt.tol;
    ddec::Rectangle r = resolved_rect(opt, sys);
    j["rectangle"] = {{"re_min", r.re_min},
                      {"re_max", r.re_max},
                      {"im_min", r.im_min},
                      {"im_max", r.im_max}};
    return j;
}

void range_check(const Options& opt) {
    if (opt.T != -1.0 && opt.T <= 0.0)
        throw std::invalid_argument("config: --T out of range (must be positive)");
    if (opt.h != -1.0 && opt.h <= 0.0)
        throw std::invalid_argument("config: --h out of range (must be positive)");
    if (opt.lambda != -1.0 && opt.lambda <= 0.0)
        throw std::invalid_argument("config: --lambda out of range (must be positive)");
    if (opt.q < 1.0) throw std::invalid_argument("config: --q out of range (must be >= 1)");
    if (!(opt.rank_tol > 0.0 && opt.rank_tol < 1.0))
        throw std::invalid_argument("config: --rank-tol out of range (must be in (0,1))");
    if (opt.max_atoms < 1) throw std::invalid_argument("config: --max-atoms out of range");
    if (opt.window != -1.0 && opt.window <= 0.0)
        throw std::invalid_argument("config: --window out of range (must be positive)");
    if (opt.tol <= 0.0) throw std::invalid_argument("config: --tol out of range");
}

ddec::GridFunction default_phi(const ddec::DelaySystem& sys, double h) {
    return ddec::GridFunction::zeros(sys.d, 1, -sys.lambda_max(), h,
                                     ddec::segment_grid_size(sys.lambda_max(), h));
}

int run(const std::string& sub, const Options& opt) {
    range_check(opt);
    ddec::DelaySystem sys = ddec::load_system(opt.system_path);
    const double h = resolved_h(opt, sys);
    fs::create_directories(opt.out_dir);
    auto outpath = [&](const std::string& name) { return (fs::path(opt.out_dir) / name).string(); };

    std::cout << config_echo(sub, opt, sys).dump() << "\n";

    if (sub == "simulate") {
        const double T = resolved_T(opt, sys);
        ddec::GridFunction phi =
            opt.phi_path.empty() ? default_phi(sys, h) : ddec::load_grid_csv(opt.phi_path, sys.d);
        std::optional<ddec::GridFunction> u;
        if (!opt.u_path.empty()) u = ddec::load_grid_csv(opt.u_path, sys.m);
        ddec::Trajectory traj = ddec::solve_ivp(sys, phi, u, T, h);
        ddec::write_text(outpath("trajectory.csv"), ddec::trajectory_csv(traj));
        return 0;
    }
    if (sub == "fundamental") {
        const double T = resolved_T(opt, sys);
        auto fund = ddec::fundamental_solution(sys, T, h, opt.max_atoms);
        ddec::write_json(outpath("fundamental.json"), ddec::fundamental_json(fund));
        return 0;
    }
    if (sub == "invert-q") {
        const double window =
            opt.window > 0 ? opt.window : 2.0 * sys.d * sys.lambda_max() + sys.lambda_max();
        auto [Q, P] = ddec::build_QP(sys, h);
        auto [Qinv, report] = ddec::invert_Q(Q, window, opt.tol);
        ddec::write_json(outpath("qinv.json"), ddec::measure_json(Qinv));
        ddec::write_json(outpath("neumann_report.json"), ddec::neumann_json(report));
        return 0;
    }
    if (sub == "check") {
        auto verdict = ddec::check_controllability(sys, resolved_rect(opt, sys), opt.rank_tol);
        ddec::write_json(outpath("verdict.json"), ddec::verdict_json(verdict));
        std::cout << ddec::outcome_name(verdict.outcome) << "\n";
        return verdict.outcome == ddec::Outcome::CONTROLLABLE_UP_TO_REGION ? 0 : 2;
    }
    if (sub == "synthesize") {
        const double T = resolved_T(opt, sys);
        if (opt.target_path.empty())
            throw std::invalid_argument("config: synthesize requires --target CSV");
        ddec::GridFunction psi = ddec::load_grid_csv(opt.target_path, sys.d);
        psi.set_exponent(opt.q);
        auto res = ddec::synthesize_control(sys, psi, T, h, opt.lambda, opt.q);
        ddec::write_text(outpath("control.csv"), ddec::control_csv(res.u));
        ddec::write_json(outpath("synthesis.json"), ddec::synthesis_json(res, T, h));
        return 0;
    }
    if (sub == "residual-curve") {
        if (opt.target_path.empty())
            throw std::invalid_argument("config: residual-curve requires --target CSV");
        ddec::GridFunction psi = ddec::load_grid_csv(opt.target_path, sys.d);
        psi.set_exponent(opt.q);
        std::vector<double> T_list;
        if (!opt.T_list_spec.empty()) {
            T_list = parse_T_list(opt.T_list_spec);
        } else {
            const double lam = sys.lambda_max(), top = 2.0 * sys.d * lam + lam;
            for (int i = 0; i < 6; ++i) T_list.push_back(lam + (top - lam) * i / 5.0);
        }
        for (double& T : T_list) T = std::max(h, std::round(T / h) * h);
        auto pts = ddec::residual_curve(sys, psi, T_list, h, opt.lambda);
        ddec::write_text(outpath("residual_curve.csv"),
                         ddec::residual_csv(pts, opt.lambda, h));
        return 0;
    }
    throw std::invalid_argument("unknown subcommand: " + sub);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"difference delay equation simulation and controllability toolkit"};
    app.require_subcommand(1);

    Options opt;
    std::vector<CLI::App*> subs;
    for (const char* name : {"simulate", "fundamental", "invert-q", "check", "synthesize",
                             "residual-curve"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("system", opt.system_path, "system description JSON")->required();
        sub->add_option("--T", opt.T, "horizon");
        sub->add_option("--h", opt.h, "grid step (default 1e-3 Lambda_1)");
        sub->add_option("--lambda", opt.lambda, "Tikhonov parameter (default auto)");
        sub->add_option("--q", opt.q, "norm exponent");
        sub->add_option("--re-min", opt.re_min, "left edge magnitude of the scan rectangle");
        sub->add_option("--re-max", opt.re_max, "right edge of the scan rectangle");
        sub->add_option("--im-max", opt.im_max, "imaginary extent of the scan rectangle");
        sub->add_option("--rank-tol", opt.rank_tol, "relative singular value threshold");
        sub->add_option("--max-atoms", opt.max_atoms, "delay lattice size cap");
        sub->add_option("--window", opt.window, "inversion window");
        sub->add_option("--tol", opt.tol, "Neumann series tail tolerance");
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--phi", opt.phi_path, "initial segment CSV (t,x1..xd)");
        sub->add_option("--u", opt.u_path, "control CSV (t,u1..um)");
        sub->add_option("--target", opt.target_path, "target segment CSV (theta,x1..xd)");
        sub->add_option("--T-list", opt.T_list_spec, "comma separated horizons");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        for (CLI::App* sub : subs)
            if (sub->parsed()) return run(sub->get_name(), opt);
        std::cerr << json{{"error", "no subcommand"}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
}
