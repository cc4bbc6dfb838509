// scenario.hpp — Config-driven runs: parse a scenario, sweep the requested
// time grid computing K_sc against the exact oracle, and emit CSV/JSON
// reports. Also hosts the property suites behind the `check` subcommand.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semiprop/dynamics.hpp"

namespace semiprop {

struct FamilyConfig {
    std::string kind = "canonical"; // canonical | spin | sun
    int d = 1;
    int cutoff = 24;
    std::vector<double> J;
    int n = 2;
    int N = 1;
    double hbar = 1.0;

    Family build() const;
};

struct CoeffConfig {
    bool is_profile = false;
    cplx value{};
    std::string profile; // cos | sin | ramp
    double scale = 1.0, omega = 1.0, phase = 0.0;

    Coefficient build() const;
};

struct TermConfig {
    CoeffConfig coeff;
    std::vector<std::string> ops;
};

struct SeedConfig {
    std::string mode = "ring"; // ring | gaussian
    int count = 8;
    double radius = 0.5;
    std::uint64_t rng_seed = 20240915ULL;
    double dedup_tol = 1e-6;

    SeedStrategy build() const;
};

struct RunConfig {
    std::vector<cplx> z_i, z_f;
    double t_i = 0.0, t_f = 1.0;
    int samples = 1;        // number of final times in [t_i, t_f]
    double ode_tol = 1e-10;
    double bvp_tol = 1e-10;
    SeedConfig seeds;
    bool filter_spurious = false;
    bool with_riccati = false;
};

struct OutputConfig {
    std::string dir = "out";
    std::string csv = "run.csv";
    std::string json = "run.json";
};

struct ScenarioConfig {
    FamilyConfig family;
    std::vector<TermConfig> hamiltonian;
    RunConfig run;
    OutputConfig output;
};

/// Strict parse: unknown keys are rejected with ConfigError.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig parse_config_file(const std::string& path);

/// Canonical serialization (sorted keys); parse(serialize(c)) == c.
std::string serialize_config(const ScenarioConfig& cfg);

/// FNV-1a hash of the canonical serialization, stamped on every report row.
std::uint64_t config_hash(const ScenarioConfig& cfg);

struct SampleRow {
    int index = 0;
    double t = 0.0;
    cplx ksc{};
    cplx kexact{};
    double abs_err = 0.0;
    double rel_err = 0.0;
    int n_traj = 0;
    bool converged = true;
    std::string note;
};

struct RunReport {
    std::uint64_t config_hash = 0;
    std::vector<SampleRow> rows;
    bool any_failure = false;
};

/// Execute the scenario over its time grid. Worker count is capped by the
/// SEMIPROP_THREADS environment variable; report rows come back in sample
/// order regardless of scheduling.
RunReport run_scenario(const ScenarioConfig& cfg);

void write_report_csv(const RunReport& report, const std::string& path);
void write_report_json(const RunReport& report, const ScenarioConfig& cfg, const std::string& path);

/// run + write outputs; returns the process exit code (0 ok, 2 partial failure).
int run_scenario_files(const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// property suites (`check` subcommand)
// ---------------------------------------------------------------------------

struct PropertyOptions {
    std::string family = "all"; // canonical | spin | sun | all
    double J = 1.5;             // spin selector
    int n = 3, N = 2;           // sun selector
    std::uint64_t rng_seed = 7071ULL;
};

struct PropertyResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct PropertyReport {
    std::vector<PropertyResult> results;
    bool all_pass() const;
};

/// Metric/Poisson/identity-resolution/trace-identity/Riccati-equivalence
/// suites with their measured deviations.
PropertyReport run_properties(const PropertyOptions& opts);

std::string property_report_text(const PropertyReport& report);
void write_property_json(const PropertyReport& report, const std::string& path);

} // namespace semiprop
