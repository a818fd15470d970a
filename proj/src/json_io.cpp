#include "ddec/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ddec {

namespace {

using nlohmann::json;

double number_or_pi(const json& j, const char* what) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string() && j.get<std::string>() == "pi") return std::numbers::pi;
    throw std::invalid_argument(std::string("config: ") + what +
                                " must be a number or the string \"pi\"");
}

Eigen::MatrixXd parse_matrix(const json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw std::invalid_argument(std::string("config: ") + what + " must be a matrix");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Eigen::MatrixXd M(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw std::invalid_argument(std::string("config: ragged matrix in ") + what);
        for (int c = 0; c < cols; ++c) M(r, c) = number_or_pi(j[r][c], what);
    }
    return M;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw std::invalid_argument(std::string("config: unknown key \"") + it.key() +
                                        "\" in " + where);
    }
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json matrix_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (int r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

json grid_json(const GridFunction& g) {
    json out;
    out["t_start"] = g.t_start();
    out["h"] = g.step();
    out["rows"] = g.rows();
    out["cols"] = g.cols();
    json vals = json::array();
    for (int k = 0; k < g.size(); ++k) {
        json col = json::array();
        for (int i = 0; i < g.data().rows(); ++i) col.push_back(g.data()(i, k));
        vals.push_back(col);
    }
    out["values"] = vals;
    return out;
}

}  // namespace

DelaySystem parse_system_json(const json& j) {
    reject_unknown(j, {"d", "m", "delays", "A", "B", "kernel"}, "system");
    for (const char* key : {"d", "m", "delays", "A", "B"})
        if (!j.contains(key))
            throw std::invalid_argument(std::string("config: missing key \"") + key + "\"");

    RawSystem raw;
    raw.d = j["d"].get<int>();
    raw.m = j["m"].get<int>();
    for (const auto& v : j["delays"]) raw.delays.push_back(number_or_pi(v, "delays"));
    for (const auto& a : j["A"]) raw.A.push_back(parse_matrix(a, "A"));
    raw.B = parse_matrix(j["B"], "B");

    if (j.contains("kernel") && !j["kernel"].is_null()) {
        const json& k = j["kernel"];
        reject_unknown(k, {"breakpoints", "pieces"}, "kernel");
        std::vector<double> bps;
        for (const auto& v : k["breakpoints"]) bps.push_back(number_or_pi(v, "breakpoints"));
        std::vector<std::vector<Eigen::MatrixXd>> pieces;
        for (const auto& piece : k["pieces"]) {
            std::vector<Eigen::MatrixXd> coeffs;
            for (const auto& c : piece) coeffs.push_back(parse_matrix(c, "kernel pieces"));
            pieces.push_back(std::move(coeffs));
        }
        raw.kernel = PiecewisePolyKernel(std::move(bps), std::move(pieces));
    }
    return validate_system(raw);
}

DelaySystem load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open system file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
    }
    return parse_system_json(j);
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream out;
    out << "t";
    for (int i = 1; i <= traj.system.d; ++i) out << ",x" << i;
    out << "\n";
    for (int k = 0; k < traj.x.size(); ++k) {
        out << fmt17(traj.x.node(k));
        for (int r = 0; r < traj.system.d; ++r) out << "," << fmt17(traj.x.data()(r, k));
        out << "\n";
    }
    return out.str();
}

std::string control_csv(const GridFunction& u) {
    std::ostringstream out;
    out << "t";
    for (int i = 1; i <= u.rows(); ++i) out << ",u" << i;
    out << "\n";
    for (int k = 0; k < u.size(); ++k) {
        out << fmt17(u.node(k));
        for (int r = 0; r < u.rows(); ++r) out << "," << fmt17(u.data()(r, k));
        out << "\n";
    }
    return out.str();
}

std::string residual_csv(const std::vector<ResidualPoint>& pts, double lambda, double h) {
    std::ostringstream out;
    out << "T,residual,lambda,h\n";
    for (const auto& p : pts)
        out << fmt17(p.T) << "," << fmt17(p.residual) << "," << fmt17(lambda) << "," << fmt17(h)
            << "\n";
    return out.str();
}

json fundamental_json(const BVFundamentalSolution& fund) {
    json out;
    out["T"] = fund.T;
    json atoms = json::array();
    for (const auto& a : fund.atoms) {
        json atom;
        atom["tau"] = a.tau;
        atom["J"] = matrix_json(a.J);
        json mi = json::array();
        for (const auto& idx : a.multi_indices) mi.push_back(idx);
        atom["multi_indices"] = mi;
        atoms.push_back(atom);
    }
    out["atoms"] = atoms;
    out["density"] = grid_json(fund.ac_density);
    return out;
}

json measure_json(const CompactMeasure& m) {
    json out;
    out["rows"] = m.rows();
    out["cols"] = m.cols();
    out["support"] = {m.l(), m.r()};
    json atoms = json::array();
    for (const auto& a : m.atoms()) {
        json atom;
        atom["tau"] = a.loc;
        atom["J"] = matrix_json(a.W);
        atoms.push_back(atom);
    }
    out["atoms"] = atoms;
    if (auto g = m.density_grid())
        out["density"] = grid_json(*g);
    else
        out["density"] = nullptr;
    return out;
}

json neumann_json(const NeumannReport& rep) {
    json out;
    out["split_skipped"] = rep.split_skipped;
    out["epsilon"] = rep.epsilon;
    out["sigma"] = rep.sigma;
    out["g1_l1"] = rep.g1_l1;
    out["g1_terms"] = rep.g1_terms;
    out["G_terms"] = rep.G_terms;
    out["window"] = rep.window;
    out["atom_defect"] = rep.atom_defect;
    out["density_defect_l1"] = rep.density_defect_l1;
    return out;
}

json verdict_json(const ControllabilityVerdict& v) {
    json out;
    out["outcome"] = outcome_name(v.outcome);
    if (v.witness)
        out["witness"] = {{"re", v.witness->real()}, {"im", v.witness->imag()}};
    else
        out["witness"] = nullptr;
    out["rank_margin_anb"] = v.rank_margin_anb;
    out["min_root_margin"] = v.min_root_margin;
    out["rank_tol"] = v.rank_tol;
    out["time_bound"] = v.time_bound;
    out["right_edge_bound"] = v.right_edge_bound;
    out["region"] = {{"re_min", v.region.re_min},
                     {"re_max", v.region.re_max},
                     {"im_min", v.region.im_min},
                     {"im_max", v.region.im_max}};
    json roots = json::array();
    for (const auto& r : v.roots) {
        roots.push_back({{"re", r.p.real()},
                         {"im", r.p.imag()},
                         {"multiplicity", r.multiplicity},
                         {"abs_detH", r.abs_detH},
                         {"margin", r.margin}});
    }
    out["roots"] = roots;
    return out;
}

json synthesis_json(const SynthesisResult& r, double T, double h) {
    json out;
    out["T"] = T;
    out["h"] = h;
    out["lambda"] = r.lambda;
    out["q"] = r.q;
    out["residual"] = r.residual;
    out["sigma_max_sq"] = r.sigma_max_sq;
    out["gram_cond_bound"] = r.gram_cond_bound;
    return out;
}

GridFunction load_grid_csv(const std::string& path, int expected_rows) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open grid file: " + path);
    std::vector<double> ts;
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (...) {
                numeric = false;
                break;
            }
        }
        if (!numeric) continue;  // header
        if (vals.size() < 2) throw std::invalid_argument("grid csv: need t plus values");
        ts.push_back(vals[0]);
        rows.push_back(std::vector<double>(vals.begin() + 1, vals.end()));
    }
    if (ts.size() < 2) throw std::invalid_argument("grid csv: need at least two rows");
    const int k = static_cast<int>(rows[0].size());
    if (expected_rows > 0 && k != expected_rows)
        throw std::invalid_argument("grid csv: value column count mismatch");
    const double h = ts[1] - ts[0];
    for (size_t i = 0; i + 1 < ts.size(); ++i)
        if (std::abs(ts[i + 1] - ts[i] - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw std::invalid_argument("grid csv: nonuniform time column");
    Eigen::MatrixXd data(k, ts.size());
    for (size_t i = 0; i < ts.size(); ++i)
        for (int r = 0; r < k; ++r) data(r, i) = rows[i][r];
    return GridFunction(k, 1, ts[0], h, std::move(data));
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void write_json(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

}  // namespace ddec
