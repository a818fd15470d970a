#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(DDEC_CLI_PATH) + " " + args + " > /dev/null 2>/dev/null";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path config(const std::string& name) { return fs::path(DDEC_CONFIG_DIR) / name; }

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("ddec_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("check exit codes follow the verdict contract") {
    auto out = fresh_dir("check");
    CHECK(run_cli("check " + config("scalar_pi.json").string() + " --out " + out.string()) == 0);
    CHECK(run_cli("check " + config("rank_deficient_2d.json").string() + " --out " +
                  out.string()) == 2);
    CHECK(run_cli("check " + config("decoupled_2d.json").string() + " --out " + out.string()) ==
          2);
    std::string verdict = slurp(out / "verdict.json");
    CHECK(verdict.find("UNCONTROLLABLE_FREQUENCY") != std::string::npos);
}

TEST_CASE("errors surface as exit 1") {
    CHECK(run_cli("simulate " + config("memoryless.json").string() + " --T -1") == 1);
    CHECK(run_cli("simulate /nonexistent/sys.json") == 1);
    CHECK(run_cli("explode " + config("memoryless.json").string()) != 0);
    CHECK(run_cli("simulate " + config("memoryless.json").string() + " --no-such-flag 3") != 0);
}

TEST_CASE("simulate emits a trajectory CSV with 17 significant digits") {
    auto out = fresh_dir("sim");
    CHECK(run_cli("simulate " + config("pure_difference.json").string() + " --T 2 --h 0.01" +
                  " --out " + out.string()) == 0);
    std::string csv = slurp(out / "trajectory.csv");
    CHECK(csv.rfind("t,x1", 0) == 0);
    CHECK(csv.find("0.2500000000000000") != std::string::npos);  // 0.5^2 region values
}

TEST_CASE("invert-q on the shift system writes the single-atom inverse") {
    auto out = fresh_dir("inv");
    // memoryless: Q = delta_{-1} I
    CHECK(run_cli("invert-q " + config("memoryless.json").string() + " --window 2 --out " +
                  out.string()) == 0);
    std::string qinv = slurp(out / "qinv.json");
    CHECK(qinv.find("\"tau\": 1.0") != std::string::npos);
    CHECK(slurp(out / "neumann_report.json").find("atom_defect") != std::string::npos);
}

TEST_CASE("runs are deterministic byte for byte") {
    auto out1 = fresh_dir("det1");
    auto out2 = fresh_dir("det2");
    std::string base = "check " + config("scalar_pi.json").string() + " --im-max 8 --out ";
    CHECK(run_cli(base + out1.string()) == 0);
    CHECK(run_cli(base + out2.string()) == 0);
    CHECK(slurp(out1 / "verdict.json") == slurp(out2 / "verdict.json"));
}

TEST_CASE("pi literals parse in system files") {
    auto out = fresh_dir("pi");
    // delays [1, pi]: fundamental atoms must include tau = pi
    CHECK(run_cli("fundamental " + config("scalar_pi.json").string() + " --T 4 --h 0.01 --out " +
                  out.string()) == 0);
    std::string fund = slurp(out / "fundamental.json");
    CHECK(fund.find("3.14159265358979") != std::string::npos);
}

TEST_CASE("synthesize and residual-curve artifacts") {
    auto out = fresh_dir("synth");
    // target: constant 1 on [-Lambda_N, 0]
    fs::path target = out / "target.csv";
    {
        std::ofstream t(target);
        t << "theta,x1\n";
        for (int k = 0; k <= 100; ++k) t << (-1.0 + 0.01 * k) << ",1.0\n";
    }
    std::string sys = config("pure_difference.json").string();
    CHECK(run_cli("synthesize " + sys + " --T 2 --h 0.02 --target " + target.string() +
                  " --out " + out.string()) == 0);
    CHECK(slurp(out / "control.csv").rfind("t,u1", 0) == 0);
    CHECK(slurp(out / "synthesis.json").find("residual") != std::string::npos);

    CHECK(run_cli("residual-curve " + sys + " --h 0.02 --T-list 1,2,3 --target " +
                  target.string() + " --out " + out.string()) == 0);
    std::string curve = slurp(out / "residual_curve.csv");
    CHECK(curve.rfind("T,residual,lambda,h", 0) == 0);
    int lines = 0;
    for (char ch : curve)
        if (ch == '\n') ++lines;
    CHECK(lines == 4);

    CHECK(run_cli("synthesize " + sys + " --T 2 --h 0.02 --out " + out.string()) == 1);
}
