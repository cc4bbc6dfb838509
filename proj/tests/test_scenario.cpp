#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "semiprop/scenario.hpp"

using namespace semiprop;

namespace {
const char* kHoConfig = R"({
  "family": {"kind": "canonical", "d": 1, "cutoff": 24, "hbar": 1.0},
  "hamiltonian": {"terms": [
    {"coeff": [1.0, 0.0], "ops": ["a1+", "a1"]},
    {"coeff": [0.5, 0.0], "ops": []}
  ]},
  "run": {
    "z_i": [[0.7, 0.3]],
    "z_f": [[-0.2, 0.5]],
    "t_i": 0.0,
    "t_f": 3.0,
    "samples": 4,
    "ode_tol": 1e-10,
    "bvp_tol": 1e-10,
    "seeds": {"mode": "ring", "count": 2, "radius": 0.4},
    "filter_spurious": false,
    "with_riccati": false
  },
  "output": {"dir": "out_test", "csv": "ho.csv", "json": "ho.json"}
})";
} // namespace

TEST_CASE("config parsing and validation") {
    SUBCASE("valid config parses") {
        ScenarioConfig cfg = parse_config(kHoConfig);
        CHECK(cfg.family.kind == "canonical");
        CHECK(cfg.run.samples == 4);
        CHECK(cfg.run.seeds.count == 2);
        CHECK(cfg.output.csv == "ho.csv");
    }
    SUBCASE("unknown keys are rejected") {
        std::string bad = kHoConfig;
        bad.replace(bad.find("\"hbar\""), 6, "\"hbarr\"");
        CHECK_THROWS_AS(parse_config(bad), ConfigError);
    }
    SUBCASE("empty time grid is a config error") {
        std::string bad = kHoConfig;
        bad.replace(bad.find("\"samples\": 4"), 12, "\"samples\": 0");
        CHECK_THROWS_AS(parse_config(bad), ConfigError);
    }
    SUBCASE("dimension mismatch is a config error") {
        std::string bad = kHoConfig;
        bad.replace(bad.find("\"z_i\": [[0.7, 0.3]]"), 19, "\"z_i\": [[0.7, 0.3], [0.1, 0.0]]");
        CHECK_THROWS_AS(parse_config(bad), ConfigError);
    }
    SUBCASE("bad generator token is caught at parse time") {
        std::string bad = kHoConfig;
        bad.replace(bad.find("\"a1+\""), 5, "\"J+1\"");
        CHECK_THROWS_AS(parse_config(bad), ConfigError);
    }
    SUBCASE("round trip: parse . serialize . parse is stable") {
        ScenarioConfig a = parse_config(kHoConfig);
        std::string s1 = serialize_config(a);
        ScenarioConfig b = parse_config(s1);
        std::string s2 = serialize_config(b);
        CHECK(s1 == s2);
        CHECK(config_hash(a) == config_hash(b));
    }
}

TEST_CASE("scenario run and reports") {
    ScenarioConfig cfg = parse_config(kHoConfig);
    RunReport rep = run_scenario(cfg);
    REQUIRE(rep.rows.size() == 4);
    CHECK(!rep.any_failure);
    SUBCASE("harmonic oscillator samples are exact to 1e-8") {
        for (const auto& row : rep.rows) {
            CHECK(row.converged);
            CHECK(row.n_traj == 1);
            CHECK(row.rel_err < 1e-8);
        }
        CHECK(rep.rows[0].t == 0.0); // includes the degenerate sample
    }
    SUBCASE("rows carry the config hash and CSV output is bit-stable") {
        auto tmp = std::filesystem::temp_directory_path();
        std::string p1 = (tmp / "semiprop_rep1.csv").string();
        std::string p2 = (tmp / "semiprop_rep2.csv").string();
        write_report_csv(rep, p1);
        RunReport rep2 = run_scenario(cfg);
        write_report_csv(rep2, p2);
        std::ifstream f1(p1), f2(p2);
        std::stringstream s1, s2;
        s1 << f1.rdbuf();
        s2 << f2.rdbuf();
        CHECK(s1.str() == s2.str());
        char want[32];
        std::snprintf(want, sizeof(want), "%016llx",
                      static_cast<unsigned long long>(config_hash(cfg)));
        CHECK(s1.str().find(want) != std::string::npos);
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }
}

TEST_CASE("property suites report measured tolerances") {
    PropertyOptions opts;
    opts.family = "spin";
    opts.J = 1.5;
    PropertyReport rep = run_properties(opts);
    CHECK(rep.all_pass());
    bool saw_identity = false, saw_kappa = false, saw_riccati = false, saw_trace = false;
    for (const auto& r : rep.results) {
        if (r.name.rfind("identity_resolution", 0) == 0) {
            saw_identity = true;
            CHECK(r.measured < 1e-6);
        }
        if (r.name.rfind("measure.kappa", 0) == 0) saw_kappa = true;
        if (r.name.rfind("riccati_equivalence", 0) == 0) saw_riccati = true;
        if (r.name.rfind("trace_identity", 0) == 0) saw_trace = true;
    }
    CHECK(saw_identity);
    CHECK(saw_kappa);
    CHECK(saw_riccati);
    CHECK(saw_trace);
}

#ifndef SEMIPROP_CONFIG_DIR
#define SEMIPROP_CONFIG_DIR "configs"
#endif

TEST_CASE("bundled scenarios meet their accuracy targets") {
    SUBCASE("harmonic oscillator config: rel error uniformly < 1e-8") {
        ScenarioConfig cfg =
            parse_config_file(std::string(SEMIPROP_CONFIG_DIR) + "/harmonic_oscillator.json");
        RunReport rep = run_scenario(cfg);
        CHECK(!rep.any_failure);
        for (const auto& row : rep.rows) CHECK(row.rel_err < 1e-8);
    }
    SUBCASE("spin precession configs J in {1/2, 1, 5}: rel error < 1e-8") {
        for (const char* name :
             {"/spin_precession.json", "/spin_precession_j1.json", "/spin_precession_j5.json"}) {
            ScenarioConfig cfg = parse_config_file(std::string(SEMIPROP_CONFIG_DIR) + name);
            RunReport rep = run_scenario(cfg);
            CHECK(!rep.any_failure);
            for (const auto& row : rep.rows) CHECK(row.rel_err < 1e-8);
        }
    }
}

TEST_CASE("partial failure is reported with exit code 2") {
    // a canonical basis far too small for the requested labels: every seed
    // trips the truncation budget, the sample records the failure
    ScenarioConfig cfg = parse_config(R"({
      "family": {"kind": "canonical", "d": 1, "cutoff": 6, "hbar": 1.0},
      "hamiltonian": {"terms": [{"coeff": [1.0, 0.0], "ops": ["a1+", "a1"]}]},
      "run": {
        "z_i": [[2.5, 0.0]],
        "z_f": [[2.5, 0.1]],
        "t_f": 1.0,
        "samples": 2,
        "seeds": {"count": 1}
      },
      "output": {"dir": "out_fail"}
    })");
    RunReport rep = run_scenario(cfg);
    CHECK(rep.any_failure);
    bool some_failed = false;
    for (const auto& row : rep.rows)
        if (!row.converged) {
            some_failed = true;
            CHECK(row.n_traj == 0);
            CHECK(!row.note.empty());
        }
    CHECK(some_failed);
    auto dir = std::filesystem::temp_directory_path() / "semiprop_fail_test";
    cfg.output.dir = dir.string();
    CHECK(run_scenario_files(cfg) == 2);
    CHECK(std::filesystem::exists(dir / "run.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("worker pool size does not change the report") {
    ScenarioConfig cfg = parse_config(kHoConfig);
    setenv("SEMIPROP_THREADS", "1", 1);
    RunReport serial = run_scenario(cfg);
    setenv("SEMIPROP_THREADS", "4", 1);
    RunReport parallel = run_scenario(cfg);
    unsetenv("SEMIPROP_THREADS");
    REQUIRE(serial.rows.size() == parallel.rows.size());
    for (size_t k = 0; k < serial.rows.size(); ++k) {
        CHECK(serial.rows[k].ksc == parallel.rows[k].ksc);
        CHECK(serial.rows[k].kexact == parallel.rows[k].kexact);
    }
}
