#include "qsrnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qsrnet/errors.hpp"
#include "qsrnet/lmi.hpp"
#include "qsrnet/rng.hpp"

namespace qsrnet {

namespace {

using nlohmann::json;

/// Best-effort locator: line of the first occurrence of the quoted key.
int line_of(const std::string& text, const std::string& key) {
    const size_t pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

struct Doc {
    const std::string& text;
    const std::string& origin;

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        std::ostringstream os;
        os << origin;
        if (const int line = line_of(text, key)) os << ":" << line;
        os << ": " << msg;
        throw ConfigError(os.str());
    }

    void check_keys(const json& obj, const std::string& section,
                    std::initializer_list<const char*> allowed) const {
        for (const auto& item : obj.items()) {
            bool known = false;
            for (const char* k : allowed) known = known || item.key() == k;
            if (!known) fail(item.key(), "unknown key \"" + item.key() + "\" in " + section);
        }
    }

    const json* find(const json& obj, const std::string& key) const {
        const auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    double number(const json& obj, const std::string& section, const std::string& key,
                  double fallback) const {
        const json* j = find(obj, key);
        if (!j) return fallback;
        if (!j->is_number()) fail(key, section + "." + key + " must be a number");
        return j->get<double>();
    }

    int integer(const json& obj, const std::string& section, const std::string& key,
                int fallback) const {
        const json* j = find(obj, key);
        if (!j) return fallback;
        if (!j->is_number_integer()) fail(key, section + "." + key + " must be an integer");
        return j->get<int>();
    }

    uint64_t seed(const json& obj, const std::string& section, const std::string& key,
                  uint64_t fallback) const {
        const json* j = find(obj, key);
        if (!j) return fallback;
        if (!j->is_number_unsigned()) fail(key, section + "." + key + " must be a nonnegative integer");
        return j->get<uint64_t>();
    }

    bool boolean(const json& obj, const std::string& section, const std::string& key,
                 bool fallback) const {
        const json* j = find(obj, key);
        if (!j) return fallback;
        if (!j->is_boolean()) fail(key, section + "." + key + " must be a boolean");
        return j->get<bool>();
    }

    std::vector<double> number_list(const json& j, const std::string& key) const {
        if (!j.is_array()) fail(key, key + " must be an array of numbers");
        std::vector<double> out;
        for (const json& e : j) {
            if (!e.is_number()) fail(key, key + " must contain numbers only");
            out.push_back(e.get<double>());
        }
        return out;
    }

    Matrix matrix(const json& j, const std::string& key) const {
        if (!j.is_array()) fail(key, key + " must be an array of equal-length rows");
        const int rows = static_cast<int>(j.size());
        if (rows == 0) return Matrix();
        if (!j[0].is_array()) fail(key, key + " must be an array of equal-length rows");
        const int cols = static_cast<int>(j[0].size());
        Matrix M(rows, cols);
        for (int r = 0; r < rows; ++r) {
            if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
                fail(key, key + " rows must all have length " + std::to_string(cols));
            for (int c = 0; c < cols; ++c) {
                if (!j[r][c].is_number()) fail(key, key + " must contain numbers only");
                M(r, c) = j[r][c].get<double>();
            }
        }
        return M;
    }
};

json matrix_to_json(const Matrix& M) {
    json rows = json::array();
    for (int r = 0; r < M.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < M.cols; ++c) row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + ": expected an array of rows");
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Matrix();
    const int cols = static_cast<int>(j[0].size());
    Matrix M(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
            throw ConfigError(what + ": ragged rows");
        for (int c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ConfigError(what + ": non-numeric entry");
            M(r, c) = j[r][c].get<double>();
        }
    }
    return M;
}

void parse_fleet(const Doc& doc, const json& j, FleetConfig& out) {
    doc.check_keys(j, "fleet", {"count", "seed", "nominal", "spread"});
    out.count = doc.integer(j, "fleet", "count", out.count);
    if (out.count <= 0) doc.fail("count", "fleet.count must be positive");
    out.seed = doc.seed(j, "fleet", "seed", out.seed);
    if (const json* n = doc.find(j, "nominal")) {
        doc.check_keys(*n, "fleet.nominal",
                       {"mass", "arm", "ixx", "iyy", "izz", "kf", "km", "gravity"});
        QuadrotorParams& p = out.nominal;
        p.mass = doc.number(*n, "fleet.nominal", "mass", p.mass);
        p.arm = doc.number(*n, "fleet.nominal", "arm", p.arm);
        p.ixx = doc.number(*n, "fleet.nominal", "ixx", p.ixx);
        p.iyy = doc.number(*n, "fleet.nominal", "iyy", p.iyy);
        p.izz = doc.number(*n, "fleet.nominal", "izz", p.izz);
        p.kf = doc.number(*n, "fleet.nominal", "kf", p.kf);
        p.km = doc.number(*n, "fleet.nominal", "km", p.km);
        p.gravity = doc.number(*n, "fleet.nominal", "gravity", p.gravity);
        if (p.mass <= 0 || p.arm <= 0 || p.ixx <= 0 || p.iyy <= 0 || p.izz <= 0 || p.kf <= 0)
            doc.fail("nominal", "fleet.nominal entries must be positive");
    }
    if (const json* s = doc.find(j, "spread")) {
        const std::vector<double> range = doc.number_list(*s, "spread");
        if (range.size() != 2 || range[0] <= 0.0 || range[0] > range[1])
            doc.fail("spread", "fleet.spread must be [lo, hi] with 0 < lo <= hi");
        out.spread_lo = range[0];
        out.spread_hi = range[1];
    }
}

void parse_lqr(const Doc& doc, const json& j, LqrConfig& out) {
    doc.check_keys(j, "lqr", {"q_diag", "r_diag"});
    if (const json* q = doc.find(j, "q_diag")) out.q_diag = doc.number_list(*q, "q_diag");
    if (const json* r = doc.find(j, "r_diag")) out.r_diag = doc.number_list(*r, "r_diag");
    for (double v : out.q_diag)
        if (v < 0.0) doc.fail("q_diag", "lqr.q_diag entries must be nonnegative");
    for (double v : out.r_diag)
        if (v <= 0.0) doc.fail("r_diag", "lqr.r_diag entries must be positive");
}

void parse_agents(const Doc& doc, const json& j, std::vector<Agent>& out) {
    if (!j.is_array()) doc.fail("agents", "agents must be an array");
    for (const json& a : j) {
        if (!a.is_object()) doc.fail("agents", "agents entries must be objects");
        if (doc.find(a, "k")) {
            doc.check_keys(a, "agents[]", {"k"});
            out.push_back(Agent::static_gain(doc.matrix(a["k"], "k")));
        } else {
            doc.check_keys(a, "agents[]", {"a", "b"});
            if (!doc.find(a, "a") || !doc.find(a, "b"))
                doc.fail("agents", "dynamic agents need both \"a\" and \"b\"");
            out.push_back(Agent::dynamic({doc.matrix(a["a"], "a"), doc.matrix(a["b"], "b")}));
        }
    }
}

void parse_topology(const Doc& doc, const json& j, TopologyConfig& out) {
    doc.check_keys(j, "topology", {"builtin", "modes"});
    const json* b = doc.find(j, "builtin");
    const json* m = doc.find(j, "modes");
    if ((b != nullptr) == (m != nullptr))
        doc.fail("topology", "topology needs exactly one of \"builtin\" or \"modes\"");
    if (b) {
        if (!b->is_string()) doc.fail("builtin", "topology.builtin must be a string");
        out.builtin = b->get<std::string>();
        if (out.builtin != "uav-formation-4modes")
            doc.fail("builtin", "unknown builtin topology \"" + out.builtin +
                                    "\" (known: uav-formation-4modes)");
    } else {
        out.builtin.clear();
        if (!m->is_array() || m->empty()) doc.fail("modes", "topology.modes must be a nonempty array");
        for (const json& h : *m) out.modes.push_back(doc.matrix(h, "modes"));
    }
}

void parse_certify(const Doc& doc, const json& j, CertifyOptions& out) {
    doc.check_keys(j, "certify",
                   {"margin_kyp", "margin_qhat", "box_bound", "stage_margin", "tol", "iter_cap",
                    "warm_start"});
    out.margin_kyp = doc.number(j, "certify", "margin_kyp", out.margin_kyp);
    out.margin_qhat = doc.number(j, "certify", "margin_qhat", out.margin_qhat);
    out.box_bound = doc.number(j, "certify", "box_bound", out.box_bound);
    out.stage_margin = doc.number(j, "certify", "stage_margin", out.stage_margin);
    out.tol = doc.number(j, "certify", "tol", out.tol);
    out.iter_cap = doc.integer(j, "certify", "iter_cap", out.iter_cap);
    out.use_warm_start = doc.boolean(j, "certify", "warm_start", out.use_warm_start);
    if (out.margin_kyp <= 0 || out.margin_qhat <= 0 || out.box_bound <= 0 || out.tol <= 0 ||
        out.iter_cap <= 0 || out.stage_margin <= 0 || out.stage_margin >= 1)
        doc.fail("certify", "certify settings out of range");
}

void parse_simulate(const Doc& doc, const json& j, SimulateConfig& out) {
    doc.check_keys(j, "simulate",
                   {"dt", "horizon", "n_switches", "min_dwell", "switch_seed",
                    "disturbance_seed", "rotor_scale", "x0"});
    out.dt = doc.number(j, "simulate", "dt", out.dt);
    out.horizon = doc.number(j, "simulate", "horizon", out.horizon);
    out.n_switches = doc.integer(j, "simulate", "n_switches", out.n_switches);
    out.min_dwell = doc.number(j, "simulate", "min_dwell", out.min_dwell);
    out.switch_seed = doc.seed(j, "simulate", "switch_seed", out.switch_seed);
    out.disturbance_seed = doc.seed(j, "simulate", "disturbance_seed", out.disturbance_seed);
    out.rotor_scale = doc.number(j, "simulate", "rotor_scale", out.rotor_scale);
    if (const json* x = doc.find(j, "x0")) out.x0 = doc.number_list(*x, "x0");
    if (out.dt <= 0 || out.horizon <= 0 || out.n_switches < 0 || out.min_dwell <= 0 ||
        out.rotor_scale <= 0)
        doc.fail("simulate", "simulate settings out of range");
}

void parse_bench(const Doc& doc, const json& j, BenchConfig& out) {
    doc.check_keys(j, "bench", {"repetitions"});
    out.repetitions = doc.integer(j, "bench", "repetitions", out.repetitions);
    if (out.repetitions < 1) doc.fail("repetitions", "bench.repetitions must be at least 1");
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    const Doc doc{text, origin};
    if (!root.is_object()) doc.fail("", "top level must be a JSON object");
    doc.check_keys(root, "the top level",
                   {"fleet", "lqr", "agents", "topology", "certify", "simulate", "bench"});

    RunConfig cfg;
    if (const json* j = doc.find(root, "fleet")) parse_fleet(doc, *j, cfg.fleet);
    if (const json* j = doc.find(root, "lqr")) parse_lqr(doc, *j, cfg.lqr);
    if (const json* j = doc.find(root, "agents")) parse_agents(doc, *j, cfg.agents);
    if (const json* j = doc.find(root, "topology")) parse_topology(doc, *j, cfg.topology);
    if (const json* j = doc.find(root, "certify")) parse_certify(doc, *j, cfg.certify);
    if (const json* j = doc.find(root, "simulate")) parse_simulate(doc, *j, cfg.simulate);
    if (const json* j = doc.find(root, "bench")) parse_bench(doc, *j, cfg.bench);

    if (!cfg.agents.empty() && (doc.find(root, "fleet") || doc.find(root, "lqr")))
        doc.fail("agents", "explicit agents replace the fleet: drop the fleet/lqr sections");
    if (!cfg.agents.empty() && !cfg.topology.builtin.empty())
        doc.fail("agents", "explicit agents require explicit topology.modes");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path);
}

NetworkSpec build_network(const RunConfig& cfg) {
    NetworkSpec spec;
    if (!cfg.agents.empty()) {
        spec.agents = cfg.agents;
    } else {
        if (cfg.lqr.q_diag.size() != 12 || cfg.lqr.r_diag.size() != 4)
            throw ConfigError("lqr weights must have 12 state and 4 input entries");
        Matrix Qw(12, 12), Rw(4, 4);
        for (int i = 0; i < 12; ++i) Qw(i, i) = cfg.lqr.q_diag[i];
        for (int i = 0; i < 4; ++i) Rw(i, i) = cfg.lqr.r_diag[i];
        Rng rng(cfg.fleet.seed);
        std::vector<Matrix> gains;
        for (int i = 0; i < cfg.fleet.count; ++i) {
            QuadrotorParams params = cfg.fleet.nominal;
            params.mass *= rng.uniform(cfg.fleet.spread_lo, cfg.fleet.spread_hi);
            params.arm *= rng.uniform(cfg.fleet.spread_lo, cfg.fleet.spread_hi);
            StateSpace ss = quadrotor_linearize(params);
            gains.push_back(lqr_gain(ss.A, ss.B, Qw, Rw).K);
            spec.agents.push_back(Agent::dynamic(std::move(ss)));
        }
        for (Matrix& K : gains) spec.agents.push_back(Agent::static_gain(std::move(K)));
    }

    if (!cfg.topology.builtin.empty()) {
        if (cfg.fleet.count != 9)
            throw ConfigError("the uav-formation-4modes topology needs a nine-vehicle fleet");
        UavTopology topo = canonical_uav_modes();
        for (int i = 0; i < 4; ++i) spec.modes.push_back({i + 1, topo.Hhat[i]});
    } else {
        int id = 1;
        for (const Matrix& H : cfg.topology.modes) spec.modes.push_back({id++, H});
    }
    spec.validate();
    return spec;
}

std::string certificate_to_json(const Certificate& cert) {
    json root;
    root["format"] = "qsrnet-certificate-v1";
    json agents = json::array();
    for (const AgentCertificate& ac : cert.agents) {
        json a;
        a["q"] = matrix_to_json(ac.qsr.Q);
        a["s"] = matrix_to_json(ac.qsr.S);
        a["r"] = matrix_to_json(ac.qsr.R);
        a["p"] = matrix_to_json(ac.storage.P);
        agents.push_back(std::move(a));
    }
    root["agents"] = std::move(agents);
    root["coupling_max_eig"] = cert.coupling_max_eig;
    root["supply"] = {{"q", cert.supply.q},
                      {"r", cert.supply.r},
                      {"gamma", cert.supply.gamma},
                      {"beta_coeff", cert.supply.beta_coeff},
                      {"epsilons", cert.supply.epsilons}};
    root["solve_margins"] = cert.solve_margins;
    root["solve_seconds"] = cert.solve_seconds;
    root["iterations"] = cert.iterations;
    root["diagnostics"] = cert.diagnostics;
    return root.dump(1) + "\n";
}

Certificate certificate_from_json(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    const Doc doc{text, origin};
    if (!root.is_object()) doc.fail("", "certificate must be a JSON object");
    doc.check_keys(root, "the certificate",
                   {"format", "agents", "coupling_max_eig", "supply", "solve_margins",
                    "solve_seconds", "iterations", "diagnostics"});
    if (!doc.find(root, "format") || root["format"] != "qsrnet-certificate-v1")
        doc.fail("format", "not a qsrnet-certificate-v1 document");

    Certificate cert;
    if (const json* agents = doc.find(root, "agents")) {
        if (!agents->is_array()) doc.fail("agents", "agents must be an array");
        for (const json& a : *agents) {
            doc.check_keys(a, "agents[]", {"q", "s", "r", "p"});
            for (const char* k : {"q", "s", "r", "p"})
                if (!doc.find(a, k))
                    doc.fail("agents", std::string("certificate agent missing \"") + k + "\"");
            AgentCertificate ac;
            ac.qsr.Q = matrix_from_json(a["q"], origin + ": q");
            ac.qsr.S = matrix_from_json(a["s"], origin + ": s");
            ac.qsr.R = matrix_from_json(a["r"], origin + ": r");
            ac.storage.P = matrix_from_json(a["p"], origin + ": p");
            cert.agents.push_back(std::move(ac));
        }
    }
    if (const json* v = doc.find(root, "coupling_max_eig"))
        cert.coupling_max_eig = doc.number_list(*v, "coupling_max_eig");
    if (const json* s = doc.find(root, "supply")) {
        doc.check_keys(*s, "supply", {"q", "r", "gamma", "beta_coeff", "epsilons"});
        cert.supply.q = doc.number(*s, "supply", "q", 0.0);
        cert.supply.r = doc.number(*s, "supply", "r", 0.0);
        cert.supply.gamma = doc.number(*s, "supply", "gamma", 0.0);
        cert.supply.beta_coeff = doc.number(*s, "supply", "beta_coeff", 0.0);
        if (const json* e = doc.find(*s, "epsilons"))
            cert.supply.epsilons = doc.number_list(*e, "epsilons");
    }
    if (const json* v = doc.find(root, "solve_margins"))
        cert.solve_margins = doc.number_list(*v, "solve_margins");
    cert.solve_seconds = doc.number(root, "certificate", "solve_seconds", 0.0);
    cert.iterations = doc.integer(root, "certificate", "iterations", 0);
    if (const json* d = doc.find(root, "diagnostics")) {
        if (!d->is_string()) doc.fail("diagnostics", "diagnostics must be a string");
        cert.diagnostics = d->get<std::string>();
    }
    return cert;
}

void save_certificate(const std::string& path, const Certificate& cert) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    out << certificate_to_json(cert);
    if (!out) throw ConfigError(path + ": write failed");
}

Certificate load_certificate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return certificate_from_json(buf.str(), path);
}

RecheckReport recheck_certificate(const NetworkSpec& spec, const Certificate& cert,
                                  double margin_kyp) {
    spec.validate();
    if (cert.agents.size() != spec.agents.size())
        throw ConfigError("certificate does not match the network: it certifies " +
                          std::to_string(cert.agents.size()) + " agents, the network has " +
                          std::to_string(spec.agents.size()));

    LmiProblem prob;
    Assignment assign;
    std::vector<Matrix> qb, sb, rb;
    for (size_t i = 0; i < spec.agents.size(); ++i) {
        const Agent& ag = spec.agents[i];
        const AgentCertificate& ac = cert.agents[i];
        const bool shapes_ok = ac.qsr.Q.rows == ag.ny() && ac.qsr.Q.cols == ag.ny() &&
                               ac.qsr.S.rows == ag.ny() && ac.qsr.S.cols == ag.nu() &&
                               ac.qsr.R.rows == ag.nu() && ac.qsr.R.cols == ag.nu() &&
                               (ag.kind == AgentKind::Static ||
                                (ac.storage.P.rows == ag.nx() && ac.storage.P.cols == ag.nx()));
        if (!shapes_ok)
            throw ConfigError("certificate does not match the network: agent " +
                              std::to_string(i) + " has mismatched dimensions");
        if (ag.kind == AgentKind::Dynamic) {
            const int p = prob.add_symmetric(ag.nx());
            const int q = prob.add_symmetric(ag.ny());
            const int s = prob.add_rectangular(ag.ny(), ag.nu());
            const int r = prob.add_symmetric(ag.nu());
            assemble_agent_kyp(prob, ag.ss, p, q, s, r, margin_kyp);
            assign.push_back(ac.storage.P);
        } else {
            const int q = prob.add_symmetric(ag.ny());
            const int s = prob.add_rectangular(ag.ny(), ag.nu());
            const int r = prob.add_symmetric(ag.nu());
            assemble_static_gain(prob, ag.K, q, s, r, margin_kyp);
        }
        assign.push_back(ac.qsr.Q);
        assign.push_back(ac.qsr.S);
        assign.push_back(ac.qsr.R);
        qb.push_back(ac.qsr.Q);
        sb.push_back(ac.qsr.S);
        rb.push_back(ac.qsr.R);
    }

    RecheckReport rep;
    rep.agent_margins = verify_assignment(prob, assign);
    const Matrix Qf = block_diag(qb);
    const Matrix Sf = block_diag(sb);
    const Matrix Rf = block_diag(rb);
    bool ok = true;
    for (double m : rep.agent_margins) ok = ok && m <= 0.0;
    for (const TopologyMode& mode : spec.modes) {
        const double lam = sym_eig_max(coupling_matrices(Qf, Sf, Rf, mode.H).Q);
        rep.coupling_max_eig.push_back(lam);
        ok = ok && lam < 0.0;
    }
    rep.passed = ok;
    return rep;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

void write_series_csv(const std::string& path, const std::string& name,
                      const std::vector<double>& t, const std::vector<double>& v) {
    if (t.size() != v.size()) throw InvalidArgument("write_series_csv: length mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    out << "t," << name << "\n";
    for (size_t k = 0; k < t.size(); ++k) out << fmt(t[k]) << "," << fmt(v[k]) << "\n";
    if (!out) throw ConfigError(path + ": write failed");
}

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& rec) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    out << "t";
    for (int c = 0; c < rec.x.cols; ++c) out << ",x" << c;
    for (int c = 0; c < rec.u.cols; ++c) out << ",u" << c;
    out << "\n";
    for (int k = 0; k < rec.samples(); ++k) {
        out << fmt(rec.t[k]);
        for (int c = 0; c < rec.x.cols; ++c) out << "," << fmt(rec.x(k, c));
        for (int c = 0; c < rec.u.cols; ++c) out << "," << fmt(rec.u(k, c));
        out << "\n";
    }
    if (!out) throw ConfigError(path + ": write failed");
}

void write_events_csv(const std::string& path, const SwitchingSignal& sig) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot open for writing");
    out << "t,mode\n";
    for (const SwitchEvent& e : sig.events) out << fmt(e.t) << "," << e.mode << "\n";
    if (!out) throw ConfigError(path + ": write failed");
}

std::vector<std::vector<double>> read_csv(const std::string& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    if (line != header)
        throw ConfigError(path + ": header \"" + line + "\" does not match \"" + header + "\"");
    const size_t cols = 1 + std::count(header.begin(), header.end(), ',');
    std::vector<std::vector<double>> out(cols);
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        size_t start = 0;
        for (size_t c = 0; c < cols; ++c) {
            size_t end = line.find(',', start);
            if (c + 1 == cols) {
                if (end != std::string::npos)
                    throw ConfigError(path + ":" + std::to_string(row) + ": too many fields");
                end = line.size();
            } else if (end == std::string::npos) {
                throw ConfigError(path + ":" + std::to_string(row) + ": too few fields");
            }
            const std::string field = line.substr(start, end - start);
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(field, &used);
            } catch (const std::exception&) {
                throw ConfigError(path + ":" + std::to_string(row) + ": bad number \"" + field +
                                  "\"");
            }
            if (used != field.size())
                throw ConfigError(path + ":" + std::to_string(row) + ": bad number \"" + field +
                                  "\"");
            out[c].push_back(v);
            start = end + 1;
        }
    }
    return out;
}

}  // namespace qsrnet
