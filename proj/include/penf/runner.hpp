#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "penf/calculus.hpp"
#include "penf/scenario.hpp"

namespace penf {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "penf-report/1";

struct CapExceeded : EngineError {
    using EngineError::EngineError;
};

struct ExactModel {
    BaseModel base;
    std::vector<ProcessTable> drivers;  // on the base space
    EnlargedSpace space;
    std::optional<DensityParams> density;
    std::optional<NaturalParams> natural_params;
    std::optional<NaturalModel> natural;
};

// Base branches for a step keyword: quiet, coin or tri.
std::vector<Branch> step_branches(const std::string& kind);

ExactModel build_exact_model(const Scenario& sc);

// Base atoms carrying a point-mass kernel, with the time per atom; nullopt otherwise.
std::optional<std::vector<int>> point_mass_times(const EnlargedSpace& s);

// Stops each still-running block of stage k with probability 1/3 (raw rng() % 3); everything stops at the terminal index.
StoppingTime random_stopping_time(const Filtration& f, std::mt19937_64& rng);

enum class Command { model, check, mc };

struct RunOutcome {
    Json report;
    int exit_code = 0;
};

// Engine errors are caught and reported with exit code 2.
RunOutcome run(const Scenario& sc, Command cmd, unsigned threads = 1);

struct Artifact {
    std::string name;
    std::string content;
};

// Everything except report.json is rendered from the report alone, so `report` can redo it.
std::vector<Artifact> render_artifacts(const Json& report, const std::vector<std::string>& formats);
std::string render_summary(const Json& report);

// Each file goes to a temporary name in dir and is renamed into place.
void write_artifacts(const std::string& dir, const std::vector<Artifact>& artifacts);

}  // namespace penf
