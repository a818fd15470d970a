#pragma once

#include <string>

#include <json.hpp>

#include "ddec/frequency.hpp"
#include "ddec/fundamental.hpp"
#include "ddec/grid_function.hpp"
#include "ddec/measure.hpp"
#include "ddec/simulate.hpp"
#include "ddec/synthesis.hpp"
#include "ddec/system.hpp"

namespace ddec {

/// System description, JSON syntax:
/// {"d":int,"m":int,"delays":[real],"A":[[[real]]],"B":[[real]],
///  "kernel":{"breakpoints":[real],"pieces":[[[[real]]]]}}
/// pieces[i][k] is the coefficient matrix of s^k on piece i. The string "pi"
/// is accepted anywhere a real is, and expands to 16-digit precision.
/// Unknown keys are rejected. "kernel" may be omitted or null (g == 0).
DelaySystem parse_system_json(const nlohmann::json& j);
DelaySystem load_system(const std::string& path);

std::string trajectory_csv(const Trajectory& traj);
std::string control_csv(const GridFunction& u);
std::string residual_csv(const std::vector<ResidualPoint>& pts, double lambda, double h);

nlohmann::json fundamental_json(const BVFundamentalSolution& fund);
nlohmann::json measure_json(const CompactMeasure& m);
nlohmann::json neumann_json(const NeumannReport& rep);
nlohmann::json verdict_json(const ControllabilityVerdict& v);
nlohmann::json synthesis_json(const SynthesisResult& r, double T, double h);

/// Simple CSV grid input: header optional, columns "t,v1,...,vk", uniform t.
GridFunction load_grid_csv(const std::string& path, int expected_rows);

void write_text(const std::string& path, const std::string& content);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace ddec
