#include "semiprop/scenario.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "semiprop/exact.hpp"
#include "semiprop/propagator.hpp"

namespace semiprop {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

Family FamilyConfig::build() const {
    if (kind == "canonical") return Family::canonical(d, cutoff, hbar);
    if (kind == "spin") return Family::spin(J, hbar);
    if (kind == "sun") return Family::sun(n, N, hbar);
    throw ConfigError("unknown family kind '" + kind + "'");
}

Coefficient CoeffConfig::build() const {
    if (!is_profile) return Coefficient(value);
    if (profile == "cos") {
        double s = scale, w = omega, p = phase;
        return Coefficient(std::function<cplx(double)>(
            [s, w, p](double t) { return cplx(s * std::cos(w * t + p), 0.0); }));
    }
    if (profile == "sin") {
        double s = scale, w = omega, p = phase;
        return Coefficient(std::function<cplx(double)>(
            [s, w, p](double t) { return cplx(s * std::sin(w * t + p), 0.0); }));
    }
    if (profile == "ramp") {
        double s = scale;
        return Coefficient(std::function<cplx(double)>([s](double t) { return cplx(s * t, 0.0); }));
    }
    throw ConfigError("unknown coefficient profile '" + profile + "'");
}

SeedStrategy SeedConfig::build() const {
    SeedStrategy s;
    if (mode == "ring") s.mode = SeedStrategy::Mode::Ring;
    else if (mode == "gaussian") s.mode = SeedStrategy::Mode::Gaussian;
    else throw ConfigError("unknown seed mode '" + mode + "'");
    s.count = count;
    s.radius = radius;
    s.rng_seed = rng_seed;
    s.dedup_tol = dedup_tol;
    return s;
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

cplx parse_complex(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError("expected complex [re, im] in " + where);
    return cplx(j[0].get<double>(), j[1].get<double>());
}

std::vector<cplx> parse_complex_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError("expected array of complex [re, im] in " + where);
    std::vector<cplx> out;
    for (const auto& e : j) out.push_back(parse_complex(e, where));
    return out;
}

json complex_to_json(cplx c) { return json::array({c.real(), c.imag()}); }

} // namespace

ScenarioConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    reject_unknown_keys(j, {"family", "hamiltonian", "run", "output"}, "config root");
    if (!j.contains("family") || !j.contains("hamiltonian") || !j.contains("run"))
        throw ConfigError("config needs 'family', 'hamiltonian' and 'run' blocks");

    ScenarioConfig cfg;
    {
        const json& f = j["family"];
        reject_unknown_keys(f, {"kind", "d", "cutoff", "J", "n", "N", "hbar"}, "family");
        cfg.family.kind = f.at("kind").get<std::string>();
        if (f.contains("d")) cfg.family.d = f["d"].get<int>();
        if (f.contains("cutoff")) cfg.family.cutoff = f["cutoff"].get<int>();
        if (f.contains("J")) cfg.family.J = f["J"].get<std::vector<double>>();
        if (f.contains("n")) cfg.family.n = f["n"].get<int>();
        if (f.contains("N")) cfg.family.N = f["N"].get<int>();
        if (f.contains("hbar")) cfg.family.hbar = f["hbar"].get<double>();
        if (cfg.family.kind == "spin" && cfg.family.J.empty())
            throw ConfigError("spin family requires a J list");
    }
    {
        const json& h = j["hamiltonian"];
        reject_unknown_keys(h, {"terms"}, "hamiltonian");
        if (!h.contains("terms") || !h["terms"].is_array())
            throw ConfigError("hamiltonian needs a 'terms' array");
        for (const auto& tj : h["terms"]) {
            reject_unknown_keys(tj, {"coeff", "ops"}, "hamiltonian term");
            TermConfig tc;
            const json& cj = tj.at("coeff");
            if (cj.is_array()) {
                tc.coeff.value = parse_complex(cj, "term coeff");
            } else if (cj.is_object()) {
                reject_unknown_keys(cj, {"profile", "scale", "omega", "phase"}, "term coeff");
                tc.coeff.is_profile = true;
                tc.coeff.profile = cj.at("profile").get<std::string>();
                if (cj.contains("scale")) tc.coeff.scale = cj["scale"].get<double>();
                if (cj.contains("omega")) tc.coeff.omega = cj["omega"].get<double>();
                if (cj.contains("phase")) tc.coeff.phase = cj["phase"].get<double>();
            } else {
                throw ConfigError("term coeff must be [re, im] or a profile object");
            }
            tc.ops = tj.at("ops").get<std::vector<std::string>>();
            cfg.hamiltonian.push_back(std::move(tc));
        }
    }
    {
        const json& r = j["run"];
        reject_unknown_keys(r,
                            {"z_i", "z_f", "t_i", "t_f", "samples", "ode_tol", "bvp_tol", "seeds",
                             "filter_spurious", "with_riccati"},
                            "run");
        cfg.run.z_i = parse_complex_vector(r.at("z_i"), "run.z_i");
        cfg.run.z_f = parse_complex_vector(r.at("z_f"), "run.z_f");
        if (r.contains("t_i")) cfg.run.t_i = r["t_i"].get<double>();
        cfg.run.t_f = r.at("t_f").get<double>();
        cfg.run.samples = r.at("samples").get<int>();
        if (r.contains("ode_tol")) cfg.run.ode_tol = r["ode_tol"].get<double>();
        if (r.contains("bvp_tol")) cfg.run.bvp_tol = r["bvp_tol"].get<double>();
        if (r.contains("filter_spurious")) cfg.run.filter_spurious = r["filter_spurious"].get<bool>();
        if (r.contains("with_riccati")) cfg.run.with_riccati = r["with_riccati"].get<bool>();
        if (r.contains("seeds")) {
            const json& s = r["seeds"];
            reject_unknown_keys(s, {"mode", "count", "radius", "rng_seed", "dedup_tol"}, "run.seeds");
            if (s.contains("mode")) cfg.run.seeds.mode = s["mode"].get<std::string>();
            if (s.contains("count")) cfg.run.seeds.count = s["count"].get<int>();
            if (s.contains("radius")) cfg.run.seeds.radius = s["radius"].get<double>();
            if (s.contains("rng_seed")) cfg.run.seeds.rng_seed = s["rng_seed"].get<std::uint64_t>();
            if (s.contains("dedup_tol")) cfg.run.seeds.dedup_tol = s["dedup_tol"].get<double>();
        }
    }
    if (j.contains("output")) {
        const json& o = j["output"];
        reject_unknown_keys(o, {"dir", "csv", "json"}, "output");
        if (o.contains("dir")) cfg.output.dir = o["dir"].get<std::string>();
        if (o.contains("csv")) cfg.output.csv = o["csv"].get<std::string>();
        if (o.contains("json")) cfg.output.json = o["json"].get<std::string>();
    }

    // validation before any computation
    if (cfg.run.samples < 1) throw ConfigError("run.samples must be >= 1 (empty time grid)");
    if (cfg.run.t_f < cfg.run.t_i) throw ConfigError("run.t_f must be >= run.t_i");
    try {
        Family fam = cfg.family.build();
        if (int(cfg.run.z_i.size()) != fam.dim() || int(cfg.run.z_f.size()) != fam.dim())
            throw ConfigError("run.z_i / run.z_f must have the family dimension d=" +
                              std::to_string(fam.dim()));
        std::vector<Term> terms;
        for (const auto& tc : cfg.hamiltonian) {
            Term t;
            t.coeff = tc.coeff.build();
            for (const auto& op : tc.ops) t.ops.push_back(parse_generator(fam, op));
            terms.push_back(std::move(t));
        }
        (void)build_poly(fam, terms);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ScenarioConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ScenarioConfig& cfg) {
    json f;
    f["kind"] = cfg.family.kind;
    f["hbar"] = cfg.family.hbar;
    if (cfg.family.kind == "canonical") {
        f["d"] = cfg.family.d;
        f["cutoff"] = cfg.family.cutoff;
    } else if (cfg.family.kind == "spin") {
        f["J"] = cfg.family.J;
    } else {
        f["n"] = cfg.family.n;
        f["N"] = cfg.family.N;
    }
    json terms = json::array();
    for (const auto& tc : cfg.hamiltonian) {
        json tj;
        if (tc.coeff.is_profile) {
            tj["coeff"] = {{"profile", tc.coeff.profile},
                           {"scale", tc.coeff.scale},
                           {"omega", tc.coeff.omega},
                           {"phase", tc.coeff.phase}};
        } else {
            tj["coeff"] = complex_to_json(tc.coeff.value);
        }
        tj["ops"] = tc.ops;
        terms.push_back(tj);
    }
    json r;
    json zi = json::array(), zf = json::array();
    for (cplx c : cfg.run.z_i) zi.push_back(complex_to_json(c));
    for (cplx c : cfg.run.z_f) zf.push_back(complex_to_json(c));
    r["z_i"] = zi;
    r["z_f"] = zf;
    r["t_i"] = cfg.run.t_i;
    r["t_f"] = cfg.run.t_f;
    r["samples"] = cfg.run.samples;
    r["ode_tol"] = cfg.run.ode_tol;
    r["bvp_tol"] = cfg.run.bvp_tol;
    r["seeds"] = {{"mode", cfg.run.seeds.mode},
                  {"count", cfg.run.seeds.count},
                  {"radius", cfg.run.seeds.radius},
                  {"rng_seed", cfg.run.seeds.rng_seed},
                  {"dedup_tol", cfg.run.seeds.dedup_tol}};
    r["filter_spurious"] = cfg.run.filter_spurious;
    r["with_riccati"] = cfg.run.with_riccati;
    json o;
    o["dir"] = cfg.output.dir;
    o["csv"] = cfg.output.csv;
    o["json"] = cfg.output.json;
    json root;
    root["family"] = f;
    root["hamiltonian"] = {{"terms", terms}};
    root["run"] = r;
    root["output"] = o;
    return root.dump(2);
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
    std::string s = serialize_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// scenario execution
// ---------------------------------------------------------------------------

namespace {

int worker_count(int njobs) {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SEMIPROP_THREADS")) {
        long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) hw = std::min<unsigned>(hw, unsigned(cap));
    }
    return int(std::min<unsigned>(hw, unsigned(std::max(1, njobs))));
}

void parallel_for(int njobs, const std::function<void(int)>& fn) {
    int nw = worker_count(njobs);
    if (nw <= 1) {
        for (int k = 0; k < njobs; ++k) fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w)
        pool.emplace_back([&] {
            for (int k = next.fetch_add(1); k < njobs; k = next.fetch_add(1)) fn(k);
        });
    for (auto& th : pool) th.join();
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

RunReport run_scenario(const ScenarioConfig& cfg) {
    Family fam = cfg.family.build();
    std::vector<Term> terms;
    for (const auto& tc : cfg.hamiltonian) {
        Term t;
        t.coeff = tc.coeff.build();
        for (const auto& op : tc.ops) t.ops.push_back(parse_generator(fam, op));
        terms.push_back(std::move(t));
    }
    OperatorPolynomial H = build_poly(fam, terms);

    VectorXcd z_i = forms::to_eigen(cfg.run.z_i);
    VectorXcd z_f = forms::to_eigen(cfg.run.z_f);
    VectorXcd z_f_star = z_f.conjugate();

    RunReport report;
    report.config_hash = config_hash(cfg);
    report.rows.resize(cfg.run.samples);

    BvpOptions bvp;
    bvp.newton_tol = cfg.run.bvp_tol;
    bvp.ode_tol = cfg.run.ode_tol;
    bvp.final_integration.n_samples = 9;
    bvp.final_integration.with_riccati = cfg.run.with_riccati;
    SeedStrategy seeds = cfg.run.seeds.build();
    AssemblyOptions asm_opts;
    asm_opts.filter_spurious = cfg.run.filter_spurious;

    parallel_for(cfg.run.samples, [&](int k) {
        SampleRow row;
        row.index = k;
        double tf = cfg.run.samples == 1
                        ? cfg.run.t_f
                        : cfg.run.t_i + (cfg.run.t_f - cfg.run.t_i) * double(k) /
                                            double(cfg.run.samples - 1);
        row.t = tf;
        try {
            auto trajs = enumerate_trajectories(fam, H, z_i, z_f_star, cfg.run.t_i, tf, seeds, bvp);
            if (trajs.empty()) throw NoConvergence("no trajectory converged for this sample");
            std::vector<PropagatorContribution> cs;
            for (const auto& tr : trajs) cs.push_back(evaluate_contribution(fam, H, tr));
            row.ksc = assemble_ksc(fam, H, cs, asm_opts);
            row.n_traj = int(trajs.size());
            row.kexact = propagate_exact(fam, H, z_i, z_f, cfg.run.t_i, tf).amplitude;
            row.abs_err = std::abs(row.ksc - row.kexact);
            row.rel_err = row.abs_err / std::max(std::abs(row.kexact), 1e-300);
        } catch (const Error& e) {
            row.converged = false;
            row.note = e.what();
            row.ksc = row.kexact = cplx(std::nan(""), std::nan(""));
            row.abs_err = row.rel_err = std::nan("");
        }
        report.rows[k] = std::move(row);
    });
    for (const auto& row : report.rows)
        if (!row.converged) report.any_failure = true;
    return report;
}

void write_report_csv(const RunReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write CSV report to '" + path + "'");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(report.config_hash));
    out << "# config_hash=" << hash << "\n";
    out << "t,Ksc_re,Ksc_im,Kex_re,Kex_im,abs_err,rel_err,n_traj\n";
    for (const auto& r : report.rows) {
        out << fmt_double(r.t) << ',' << fmt_double(r.ksc.real()) << ',' << fmt_double(r.ksc.imag())
            << ',' << fmt_double(r.kexact.real()) << ',' << fmt_double(r.kexact.imag()) << ','
            << fmt_double(r.abs_err) << ',' << fmt_double(r.rel_err) << ',' << r.n_traj << "\n";
    }
}

void write_report_json(const RunReport& report, const ScenarioConfig& cfg, const std::string& path) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(report.config_hash));
    json rows = json::array();
    for (const auto& r : report.rows) {
        json rj;
        rj["config_hash"] = hash;
        rj["index"] = r.index;
        rj["t"] = r.t;
        rj["Ksc"] = complex_to_json(r.ksc);
        rj["Kexact"] = complex_to_json(r.kexact);
        rj["abs_err"] = r.abs_err;
        rj["rel_err"] = r.rel_err;
        rj["n_traj"] = r.n_traj;
        rj["converged"] = r.converged;
        if (!r.note.empty()) rj["note"] = r.note;
        rows.push_back(rj);
    }
    json root;
    root["config_hash"] = hash;
    root["config"] = json::parse(serialize_config(cfg));
    root["rows"] = rows;
    std::ofstream out(path);
    if (!out) throw Error("cannot write JSON report to '" + path + "'");
    out << root.dump(2) << "\n";
}

int run_scenario_files(const ScenarioConfig& cfg) {
    RunReport report = run_scenario(cfg);
    std::filesystem::create_directories(cfg.output.dir);
    write_report_csv(report, (std::filesystem::path(cfg.output.dir) / cfg.output.csv).string());
    write_report_json(report, cfg,
                      (std::filesystem::path(cfg.output.dir) / cfg.output.json).string());
    return report.any_failure ? 2 : 0;
}

// ---------------------------------------------------------------------------
// property suites
// ---------------------------------------------------------------------------

namespace {

using D1s = Dual<cplx>;

VectorXcd random_regular_point(const Family& fam, std::mt19937_64& rng, double radius = 0.5) {
    std::normal_distribution<double> g(0.0, radius / std::sqrt(2.0));
    while (true) {
        VectorXcd z(fam.dim());
        for (int j = 0; j < fam.dim(); ++j) z[j] = cplx(g(rng), g(rng));
        try {
            forms::check_regular(fam.data(), forms::to_std(z), forms::to_std(z));
            return z;
        } catch (const SingularPoint&) {
        }
    }
}

// pair of labels with a safety margin from the singular sets, for the
// fixed-step finite-difference checks
void regular_pair(const Family& fam, std::mt19937_64& rng, VectorXcd& zb, VectorXcd& zz,
                  double sigma = 0.35) {
    std::normal_distribution<double> g(0.0, sigma);
    while (true) {
        zb.resize(fam.dim());
        zz.resize(fam.dim());
        for (int j = 0; j < fam.dim(); ++j) {
            zb[j] = cplx(g(rng), g(rng));
            zz[j] = cplx(g(rng), g(rng));
        }
        if (fam.kind() == FamilyKind::Spin) {
            bool ok = true;
            for (int k = 0; k < fam.dim(); ++k)
                if (std::abs(1.0 + zb[k] * zz[k]) < 0.5) ok = false;
            if (!ok) continue;
        } else if (fam.kind() == FamilyKind::SuN) {
            cplx s = zb.transpose() * zz;
            if (std::abs(1.0 + s) < 0.5) continue;
        }
        return;
    }
}

double det_metric_closed_form(const Family& fam, const VectorXcd& zbar, const VectorXcd& z,
                              cplx& out) {
    switch (fam.kind()) {
    case FamilyKind::Canonical:
        out = 1.0;
        return 1.0;
    case FamilyKind::Spin: {
        cplx p = 1.0;
        for (int k = 0; k < fam.dim(); ++k) {
            cplx u = 1.0 + zbar[k] * z[k];
            p *= 2.0 * fam.spins()[k] / (u * u);
        }
        out = p;
        return 1.0;
    }
    case FamilyKind::SuN: {
        cplx s = zbar.transpose() * z;
        out = std::pow(double(fam.sun_N()), fam.sun_n() - 1) / std::pow(1.0 + s, fam.sun_n());
        return 1.0;
    }
    }
    throw Error("unreachable");
}

// simple multivariate polynomial in (z, zbar), dual-evaluable
struct TestPoly {
    struct Mono {
        cplx c;
        std::vector<int> az, ab;
    };
    std::vector<Mono> monos;

    template <class S>
    S eval(const std::vector<S>& zbar, const std::vector<S>& z) const {
        S acc{};
        for (const auto& m : monos) {
            S term(m.c);
            for (size_t j = 0; j < m.az.size(); ++j) {
                term = term * powi(z[j], m.az[j]);
                term = term * powi(zbar[j], m.ab[j]);
            }
            acc = acc + term;
        }
        return acc;
    }

    PhaseGradient grad(const Family& fam, const PhasePoint& p) const {
        const int d = fam.dim();
        PhaseGradient g;
        g.dz.resize(d);
        g.dzbar.resize(d);
        auto z0 = forms::to_std(p.z);
        auto zb0 = forms::to_std(p.zbar);
        for (int k = 0; k < d; ++k) {
            std::vector<D1s> zz = lift(z0), zb = lift(zb0);
            zz[k].d = cplx(1.0);
            g.dz[k] = eval(zb, zz).d;
            zz[k].d = cplx(0.0);
            zb[k].d = cplx(1.0);
            g.dzbar[k] = eval(zb, zz).d;
        }
        return g;
    }

    static TestPoly random(int d, std::mt19937_64& rng) {
        std::uniform_int_distribution<int> deg(0, 2);
        std::normal_distribution<double> coef(0.0, 1.0);
        TestPoly p;
        for (int m = 0; m < 4; ++m) {
            Mono mono;
            mono.c = cplx(coef(rng), coef(rng));
            mono.az.resize(d);
            mono.ab.resize(d);
            for (int j = 0; j < d; ++j) {
                mono.az[j] = deg(rng);
                mono.ab[j] = deg(rng);
            }
            p.monos.push_back(mono);
        }
        return p;
    }

    TestPoly times(const TestPoly& o) const {
        TestPoly r;
        for (const auto& a : monos)
            for (const auto& b : o.monos) {
                Mono m;
                m.c = a.c * b.c;
                m.az.resize(a.az.size());
                m.ab.resize(a.ab.size());
                for (size_t j = 0; j < a.az.size(); ++j) {
                    m.az[j] = a.az[j] + b.az[j];
                    m.ab[j] = a.ab[j] + b.ab[j];
                }
                r.monos.push_back(m);
            }
        return r;
    }
};

// bracket as a dual-evaluable function of the point, for the Jacobi identity
template <class S>
S bracket_t(const Family& fam, const TestPoly& A, const TestPoly& B, const std::vector<S>& zbar,
            const std::vector<S>& z) {
    const int d = fam.dim();
    std::vector<S> Az(d), Ab(d), Bz(d), Bb(d);
    for (int k = 0; k < d; ++k) {
        std::vector<Dual<S>> zz = lift(z), zb = lift(zbar);
        zz[k].d = S(1.0);
        Az[k] = A.eval(zb, zz).d;
        Bz[k] = B.eval(zb, zz).d;
        zz[k].d = S(0.0);
        zb[k].d = S(1.0);
        Ab[k] = A.eval(zb, zz).d;
        Bb[k] = B.eval(zb, zz).d;
    }
    SMat<S> xi = forms::metric_inverse_at(fam.data(), zbar, z);
    S t1{}, t2{};
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            t1 = t1 + Az[j] * xi(k, j) * Bb[k]; // Az xi^T Bb
            t2 = t2 + Ab[j] * xi(j, k) * Bz[k];
        }
    return cplx(0.0, -1.0) * (t1 - t2);
}

struct TrajectoryScenario {
    Family fam;
    OperatorPolynomial H;
    VectorXcd z_i, z_f;
    double T;
};

TrajectoryScenario property_scenario(const Family& fam) {
    switch (fam.kind()) {
    case FamilyKind::Canonical: {
        // Kerr oscillator; lift the cutoff beyond the identity-resolution
        // basis so the truncation budget holds along the whole trajectory
        Family wide = Family::canonical(fam.dim(), std::max(fam.fock_cutoff(), 32), fam.hbar());
        auto H = make_poly(wide, {{cplx(1.0), {"a1+", "a1"}}, {cplx(0.2), {"a1+", "a1+", "a1", "a1"}}});
        VectorXcd zi(1), zf(1);
        zi << cplx(0.4, 0.2);
        zf << cplx(0.3, -0.1);
        return {wide, H, zi, zf, 0.9};
    }
    case FamilyKind::Spin: {
        // precession plus one-axis twisting
        auto H = make_poly(fam, {{cplx(1.0), {"Jz1"}}, {cplx(0.3), {"Jz1", "Jz1"}}});
        VectorXcd zi(1), zf(1);
        zi << cplx(0.5, 0.1);
        zf << cplx(0.35, -0.2);
        return {fam, H, zi, zf, 0.8};
    }
    case FamilyKind::SuN: {
        std::vector<std::pair<cplx, std::vector<std::string>>> spec;
        for (int j = 1; j < fam.sun_n(); ++j) {
            std::string a = "E" + std::to_string(j) + "," + std::to_string(j + 1);
            std::string b = "E" + std::to_string(j + 1) + "," + std::to_string(j);
            spec.push_back({cplx(1.0), {a}});
            spec.push_back({cplx(1.0), {b}});
        }
        spec.push_back({cplx(0.3), {"E1,1", "E1,1"}}); // interaction keeps the fluctuations nontrivial
        auto H = make_poly(fam, spec);
        VectorXcd zi(fam.dim()), zf(fam.dim());
        for (int j = 0; j < fam.dim(); ++j) {
            zi[j] = cplx(0.3 - 0.05 * j, 0.15);
            zf[j] = cplx(0.2, -0.1 + 0.04 * j);
        }
        return {fam, H, zi, zf, 0.7};
    }
    }
    throw Error("unreachable");
}

void metric_suite(const Family& fam, std::mt19937_64& rng, PropertyReport& rep) {
    double max_gxi = 0.0, max_det = 0.0, max_fd = 0.0;
    const double fd_step = 3e-5;
    for (int trial = 0; trial < 100; ++trial) {
        VectorXcd zb, zz;
        regular_pair(fam, rng, zb, zz);
        MatrixXcd g = metric(fam, zb, zz);
        MatrixXcd xi = metric_inverse(fam, zb, zz);
        max_gxi = std::max(max_gxi,
                           (g * xi - MatrixXcd::Identity(fam.dim(), fam.dim())).cwiseAbs().maxCoeff());
        cplx want;
        det_metric_closed_form(fam, zb, zz, want);
        cplx det = g.partialPivLu().determinant();
        max_det = std::max(max_det, std::abs(det - want) / std::max(1e-300, std::abs(want)));

        // central differences of kahler().f against the metric orientation;
        // small labels keep |f| ~ O(0.1) so the h^2 quotient noise stays
        // under the tolerance
        regular_pair(fam, rng, zb, zz, 0.2);
        g = metric(fam, zb, zz);
        for (int j = 0; j < fam.dim(); ++j)
            for (int k = 0; k < fam.dim(); ++k) {
                VectorXcd zp = zz, zm = zz;
                zp[j] += fd_step;
                zm[j] -= fd_step;
                VectorXcd zbp = zb, zbm = zb;
                zbp[k] += fd_step;
                zbm[k] -= fd_step;
                cplx fpp = kahler(fam, zbp, zp).f, fpm = kahler(fam, zbm, zp).f;
                cplx fmp = kahler(fam, zbp, zm).f, fmm = kahler(fam, zbm, zm).f;
                cplx fd = (fpp - fpm - fmp + fmm) / (4.0 * fd_step * fd_step);
                max_fd = std::max(max_fd, std::abs(fd - g(j, k)));
            }
    }
    std::string tag = fam.describe();
    rep.results.push_back({"metric.g_xi_identity " + tag, max_gxi, 1e-12, max_gxi <= 1e-12});
    rep.results.push_back({"metric.det_closed_form " + tag, max_det, 1e-12, max_det <= 1e-12});
    rep.results.push_back({"metric.cross_derivative_fd " + tag, max_fd, 1e-6, max_fd <= 1e-6});
}

void poisson_suite(const Family& fam, std::mt19937_64& rng, PropertyReport& rep) {
    const int d = fam.dim();
    double anti = 0.0, lin = 0.0, leib = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        VectorXcd z = random_regular_point(fam, rng, 0.6);
        VectorXcd zb = random_regular_point(fam, rng, 0.6);
        PhasePoint p{z, zb};
        TestPoly A = TestPoly::random(d, rng), B = TestPoly::random(d, rng),
                 C = TestPoly::random(d, rng);
        auto gA = A.grad(fam, p), gB = B.grad(fam, p), gC = C.grad(fam, p);
        cplx ab = poisson_bracket(fam, gA, gB, p);
        cplx ba = poisson_bracket(fam, gB, gA, p);
        anti = std::max(anti, std::abs(ab + ba));

        cplx alpha(0.7, -0.2), beta(-0.3, 0.5);
        TestPoly lincomb;
        for (auto m : A.monos) {
            m.c *= alpha;
            lincomb.monos.push_back(m);
        }
        for (auto m : B.monos) {
            m.c *= beta;
            lincomb.monos.push_back(m);
        }
        cplx lhs = poisson_bracket(fam, lincomb.grad(fam, p), gC, p);
        cplx rhs = alpha * poisson_bracket(fam, gA, gC, p) + beta * poisson_bracket(fam, gB, gC, p);
        lin = std::max(lin, std::abs(lhs - rhs));

        // {A, BC} = B{A,C} + {A,B}C
        TestPoly BC = B.times(C);
        auto zbv = forms::to_std(p.zbar);
        auto zv = forms::to_std(p.z);
        cplx bval = B.eval(zbv, zv), cval = C.eval(zbv, zv);
        cplx l = poisson_bracket(fam, gA, BC.grad(fam, p), p);
        cplx r = bval * poisson_bracket(fam, gA, gC, p) + poisson_bracket(fam, gA, gB, p) * cval;
        leib = std::max(leib, std::abs(l - r));
    }
    std::string tag = fam.describe();
    rep.results.push_back({"poisson.antisymmetry " + tag, anti, 1e-14, anti <= 1e-14});
    rep.results.push_back({"poisson.linearity " + tag, lin, 1e-12, lin <= 1e-12});
    rep.results.push_back({"poisson.leibniz " + tag, leib, 1e-10, leib <= 1e-10});

    // Jacobi identity for (z1, zbar1, z1 zbar1) with AD second derivatives
    TestPoly Z1{{{cplx(1.0), std::vector<int>(d, 0), std::vector<int>(d, 0)}}};
    Z1.monos[0].az[0] = 1;
    TestPoly Zb1{{{cplx(1.0), std::vector<int>(d, 0), std::vector<int>(d, 0)}}};
    Zb1.monos[0].ab[0] = 1;
    TestPoly ZZb = Z1.times(Zb1);
    double jac = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        VectorXcd z = random_regular_point(fam, rng, 0.6);
        VectorXcd zb = random_regular_point(fam, rng, 0.6);
        PhasePoint p{z, zb};
        auto zv = forms::to_std(z);
        auto zbv = forms::to_std(zb);
        auto bracket_grad = [&](const TestPoly& A, const TestPoly& B) {
            PhaseGradient g;
            g.dz.resize(d);
            g.dzbar.resize(d);
            for (int k = 0; k < d; ++k) {
                std::vector<D1s> zz = lift(zv), zbb = lift(zbv);
                zz[k].d = cplx(1.0);
                g.dz[k] = bracket_t(fam, A, B, zbb, zz).d;
                zz[k].d = cplx(0.0);
                zbb[k].d = cplx(1.0);
                g.dzbar[k] = bracket_t(fam, A, B, zbb, zz).d;
            }
            return g;
        };
        cplx term1 = poisson_bracket(fam, bracket_grad(Z1, Zb1), ZZb.grad(fam, p), p);
        cplx term2 = poisson_bracket(fam, bracket_grad(Zb1, ZZb), Z1.grad(fam, p), p);
        cplx term3 = poisson_bracket(fam, bracket_grad(ZZb, Z1), Zb1.grad(fam, p), p);
        jac = std::max(jac, std::abs(term1 + term2 + term3));
    }
    rep.results.push_back({"poisson.jacobi " + tag, jac, 1e-8, jac <= 1e-8});
}

// 2-D quadrature of the identity resolution for d = 1 families
void identity_resolution_suite(const Family& fam, PropertyReport& rep) {
    if (fam.dim() != 1) return;
    const Eigen::Index dim = fam.hilbert_dim();
    int max_pow = 0;
    for (Eigen::Index m = 0; m < dim; ++m)
        max_pow = std::max(max_pow, fam.data().basis_exp[m][0]);
    int n_theta = 4 * max_pow + 8;

    // radial nodes: r = u/(1-u) compactification, composite midpoint on (0,1)
    const int nr = 1600;
    std::vector<double> node(nr), weight(nr);
    for (int i = 0; i < nr; ++i) {
        node[i] = (i + 0.5) / nr;
        weight[i] = 1.0 / nr;
    }

    MatrixXcd acc = MatrixXcd::Zero(dim, dim);
    for (int i = 0; i < nr; ++i) {
        double u = node[i];
        double r = u / (1.0 - u);
        double dr = 1.0 / ((1.0 - u) * (1.0 - u));
        for (int it = 0; it < n_theta; ++it) {
            double th = 2.0 * M_PI * it / n_theta;
            VectorXcd z(1);
            z[0] = std::polar(r, th);
            double w;
            VectorXcd v(dim);
            if (fam.kind() == FamilyKind::Canonical) {
                // projected amplitudes with the exact Gaussian normalization;
                // the truncated-basis resolution is exact entrywise
                auto amps = forms::amplitudes(fam.data(), forms::to_std(z));
                v = forms::to_eigen(amps) * std::exp(-0.5 * r * r);
                w = 1.0 / M_PI;
            } else {
                v = state_vector(fam, z, true);
                w = measure_weight(fam, z);
            }
            double dA = w * r * dr * weight[i] * (2.0 * M_PI / n_theta);
            acc.noalias() += dA * (v * v.adjoint());
        }
    }
    double dev = (acc - MatrixXcd::Identity(dim, dim)).cwiseAbs().maxCoeff();
    rep.results.push_back(
        {"identity_resolution " + fam.describe(), dev, 1e-6, dev <= 1e-6});
}

void kappa_suite(const Family& fam, PropertyReport& rep) {
    double kappa = measure_kappa(fam);
    double want;
    switch (fam.kind()) {
    case FamilyKind::Canonical: want = 1.0; break;
    case FamilyKind::Spin: {
        want = 1.0;
        for (double J : fam.spins()) want *= (2.0 * J + 1.0) / (2.0 * J);
        break;
    }
    case FamilyKind::SuN: {
        want = 1.0;
        for (int j = 1; j <= fam.sun_n() - 1; ++j) want *= double(fam.sun_N() + j) / fam.sun_N();
        break;
    }
    default: want = 0.0;
    }
    double dev = std::abs(kappa - want);
    rep.results.push_back({"measure.kappa " + fam.describe() + " = " + std::to_string(kappa), dev,
                           0.0, dev == 0.0});
}

void trajectory_suite(const Family& fam, PropertyReport& rep) {
    TrajectoryScenario sc = property_scenario(fam);
    BvpOptions opts;
    opts.ode_tol = 1e-11;
    opts.final_integration.n_samples = 17;
    opts.final_integration.with_riccati = true;
    Trajectory tr =
        solve_bvp(sc.fam, sc.H, sc.z_i, sc.z_f.conjugate(), 0.0, sc.T, sc.z_i.conjugate(), opts);

    // trace identity tr[xi B] = tr(R11 - R22)/2 at every stored point
    double trace_dev = 0.0;
    for (const auto& s : tr.samples) {
        MatrixXcd A, B, C;
        variation_abc(sc.fam, sc.H, s.point, s.t, VariationForm::Hessian, A, B, C);
        MatrixXcd xi = metric_inverse(sc.fam, s.point.zbar, s.point.z);
        StabilityBlocks R = stability_blocks(sc.fam, sc.H, s.point, s.t);
        cplx lhs = (xi * B).trace();
        cplx rhs = 0.5 * (R.R11.trace() - R.R22.trace());
        trace_dev = std::max(trace_dev, std::abs(lhs - rhs));
    }
    rep.results.push_back(
        {"trace_identity " + fam.describe(), trace_dev, 1e-8, trace_dev <= 1e-8});

    cplx ric = riccati_reduced_propagator(sc.fam, sc.H, tr);
    cplx tan = ln_reduced_propagator_tangent(sc.fam, sc.H, tr);
    double dev = std::abs(ric - tan);
    rep.results.push_back({"riccati_equivalence " + fam.describe(), dev, 1e-6, dev <= 1e-6});
}

void family_properties(const Family& fam, std::mt19937_64& rng, PropertyReport& rep) {
    metric_suite(fam, rng, rep);
    poisson_suite(fam, rng, rep);
    identity_resolution_suite(fam, rep);
    kappa_suite(fam, rep);
    trajectory_suite(fam, rep);
}

} // namespace

bool PropertyReport::all_pass() const {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

PropertyReport run_properties(const PropertyOptions& opts) {
    PropertyReport rep;
    std::mt19937_64 rng(opts.rng_seed);
    std::vector<Family> fams;
    if (opts.family == "canonical" || opts.family == "all")
        fams.push_back(Family::canonical(1, 12, 1.0));
    if (opts.family == "spin" || opts.family == "all") fams.push_back(Family::spin({opts.J}, 1.0));
    if (opts.family == "sun" || opts.family == "all")
        fams.push_back(Family::sun(opts.n, opts.N, 1.0));
    if (fams.empty()) throw ConfigError("unknown family selector '" + opts.family + "'");
    for (const auto& fam : fams) family_properties(fam, rng, rep);
    // geometry sweep over SU(n) sizes, independent of the selector scenario
    if (opts.family == "sun" || opts.family == "all") {
        for (int n : {2, 3, 4}) {
            if (n == opts.n) continue;
            Family f = Family::sun(n, 3, 1.0);
            metric_suite(f, rng, rep);
        }
    }
    return rep;
}

std::string property_report_text(const PropertyReport& report) {
    std::ostringstream os;
    for (const auto& r : report.results) {
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  measured=" << r.measured
           << " tol=" << r.tolerance << "\n";
    }
    os << (report.all_pass() ? "all properties passed\n" : "PROPERTY FAILURES PRESENT\n");
    return os.str();
}

void write_property_json(const PropertyReport& report, const std::string& path) {
    json rows = json::array();
    for (const auto& r : report.results)
        rows.push_back({{"name", r.name},
                        {"measured", r.measured},
                        {"tolerance", r.tolerance},
                        {"pass", r.pass}});
    json root;
    root["results"] = rows;
    root["all_pass"] = report.all_pass();
    std::ofstream out(path);
    if (!out) throw Error("cannot write property report to '" + path + "'");
    out << root.dump(2) << "\n";
}

} // namespace semiprop
