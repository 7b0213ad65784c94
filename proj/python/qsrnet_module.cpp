#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "qsrnet/bench.hpp"
#include "qsrnet/config.hpp"
#include "qsrnet/dissipativity.hpp"
#include "qsrnet/errors.hpp"
#include "qsrnet/matrix.hpp"
#include "qsrnet/network.hpp"
#include "qsrnet/riccati.hpp"
#include "qsrnet/sim.hpp"

namespace py = pybind11;
using namespace qsrnet;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows[0].size());
    Matrix M(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(rows[i].size()) != c)
            throw InvalidArgument("matrix rows must have equal length");
        for (int j = 0; j < c; ++j) M(i, j) = rows[i][j];
    }
    return M;
}

Rows to_rows(const Matrix& M) {
    Rows rows(static_cast<size_t>(M.rows), std::vector<double>(static_cast<size_t>(M.cols)));
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) rows[i][j] = M(i, j);
    return rows;
}

std::string status_word(FeasStatus s) {
    switch (s) {
        case FeasStatus::Feasible: return "feasible";
        case FeasStatus::Infeasible: return "infeasible";
        default: return "undecided";
    }
}

DistKind parse_dist_kind(const std::string& name) {
    if (name == "bump") return DistKind::Bump;
    if (name == "sinc") return DistKind::Sinc;
    if (name == "decay") return DistKind::Decay;
    throw InvalidArgument("unknown disturbance kind: " + name + " (want bump|sinc|decay)");
}

const AgentCertificate& agent_at(const Certificate& cert, int i) {
    if (i < 0 || i >= static_cast<int>(cert.agents.size()))
        throw InvalidArgument("agent index out of range");
    return cert.agents[static_cast<size_t>(i)];
}

/// Switched closed-loop run under the certificate's L2 bound, without the
/// file outputs of the command-line front end.
py::dict run_simulation(const NetworkSpec& spec, const Certificate& cert, double dt,
                        double horizon, int n_switches, double min_dwell, uint64_t switch_seed,
                        uint64_t disturbance_seed, double rotor_scale,
                        std::vector<double> x0) {
    if (cert.agents.size() != spec.agents.size())
        throw InvalidArgument("certificate does not match the network's agent count");
    const std::optional<ClosedLoopFamily> fam = closed_loop_family(spec);
    if (!fam) throw InvalidArgument("the network is not a paired plant/gain family; cannot simulate");

    const SwitchingSignal sig = gen_switching(switch_seed, horizon, n_switches,
                                              static_cast<int>(spec.modes.size()), min_dwell);
    const int ne = fam->B.cols + fam->K.cols;
    DisturbanceProfile dist = random_disturbance(disturbance_seed, ne);
    for (int c = 0; c < fam->B.cols; ++c) dist.scale[c] *= rotor_scale;

    if (x0.empty()) x0.assign(static_cast<size_t>(fam->A.rows), 0.0);
    const SimResult sim = simulate(*fam, sig, dist, dt, x0);

    double v0 = 0.0;
    for (int i = 0; i < fam->pairs; ++i) {
        std::vector<double> xi(x0.begin() + fam->off[i], x0.begin() + fam->off[i] + fam->nx[i]);
        v0 += cert.agents[static_cast<size_t>(i)].storage.value(xi);
    }
    const double beta = cert.supply.beta_coeff * std::sqrt(std::max(0.0, v0));
    const GainReport gain = empirical_gain(sim.network, cert.supply.gamma, beta);

    py::list events;
    for (const SwitchEvent& e : sig.events) events.append(py::make_tuple(e.t, e.mode));

    py::dict out;
    out["t"] = sim.network.t;
    out["state_error"] = state_error(sim.network);
    out["events"] = events;
    out["samples"] = sim.network.samples();
    out["gamma"] = cert.supply.gamma;
    out["beta"] = beta;
    out["passed"] = gain.passed;
    out["gain_estimate"] = gain.gain_estimate;
    out["worst_violation"] = gain.worst_violation;
    out["worst_time"] = gain.worst_time;
    out["diverged"] = sim.diverged;
    out["divergence_time"] = sim.divergence_time;
    return out;
}

}  // namespace

PYBIND11_MODULE(_qsrnet, m) {
    m.doc() = "switching-robust L2 certificates for networks of dissipative agents";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

    py::class_<CommonSupply>(m, "CommonSupply")
        .def_readonly("q", &CommonSupply::q)
        .def_readonly("r", &CommonSupply::r)
        .def_readonly("epsilons", &CommonSupply::epsilons)
        .def_readonly("gamma", &CommonSupply::gamma)
        .def_readonly("beta_coeff", &CommonSupply::beta_coeff)
        .def("__repr__", [](const CommonSupply& s) {
            return "CommonSupply(q=" + std::to_string(s.q) + ", r=" + std::to_string(s.r) +
                   ", gamma=" + std::to_string(s.gamma) + ")";
        });

    py::class_<RunConfig>(m, "RunConfig");

    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def_property_readonly(
            "num_agents", [](const NetworkSpec& s) { return static_cast<int>(s.agents.size()); })
        .def_property_readonly(
            "num_modes", [](const NetworkSpec& s) { return static_cast<int>(s.modes.size()); })
        .def("total_ny", &NetworkSpec::total_ny)
        .def("total_nu", &NetworkSpec::total_nu)
        .def("validate", &NetworkSpec::validate)
        .def("__repr__", [](const NetworkSpec& s) {
            return "NetworkSpec(" + std::to_string(s.agents.size()) + " agents, " +
                   std::to_string(s.modes.size()) + " modes)";
        });

    py::class_<Certificate>(m, "Certificate")
        .def_property_readonly(
            "num_agents", [](const Certificate& c) { return static_cast<int>(c.agents.size()); })
        .def_readonly("coupling_max_eig", &Certificate::coupling_max_eig)
        .def_readonly("supply", &Certificate::supply)
        .def_readonly("solve_margins", &Certificate::solve_margins)
        .def_readonly("solve_seconds", &Certificate::solve_seconds)
        .def_readonly("iterations", &Certificate::iterations)
        .def_readonly("diagnostics", &Certificate::diagnostics)
        .def(
            "agent_triple",
            [](const Certificate& c, int i) {
                const AgentCertificate& a = agent_at(c, i);
                return py::make_tuple(to_rows(a.qsr.Q), to_rows(a.qsr.S), to_rows(a.qsr.R));
            },
            py::arg("agent"), "The certified (Q, S, R) supply triple of one agent.")
        .def(
            "agent_storage",
            [](const Certificate& c, int i) { return to_rows(agent_at(c, i).storage.P); },
            py::arg("agent"), "The storage matrix P of one agent (empty for static gains).")
        .def("to_json", [](const Certificate& c) { return certificate_to_json(c); })
        .def_static(
            "from_json",
            [](const std::string& text) { return certificate_from_json(text, "<python>"); },
            py::arg("text"));

    py::class_<CertifyResult>(m, "CertifyResult")
        .def_property_readonly("status",
                               [](const CertifyResult& r) { return status_word(r.status); })
        .def_property_readonly(
            "feasible", [](const CertifyResult& r) { return r.status == FeasStatus::Feasible; })
        .def_readonly("certificate", &CertifyResult::certificate)
        .def_readonly("diagnostics", &CertifyResult::diagnostics)
        .def("__repr__", [](const CertifyResult& r) {
            return "CertifyResult(status=" + status_word(r.status) + ")";
        });

    py::class_<RecheckReport>(m, "RecheckReport")
        .def_readonly("agent_margins", &RecheckReport::agent_margins)
        .def_readonly("coupling_max_eig", &RecheckReport::coupling_max_eig)
        .def_readonly("passed", &RecheckReport::passed);

    py::class_<SwitchingSignal>(m, "SwitchingSignal")
        .def_property_readonly("events",
                               [](const SwitchingSignal& s) {
                                   py::list out;
                                   for (const SwitchEvent& e : s.events)
                                       out.append(py::make_tuple(e.t, e.mode));
                                   return out;
                               })
        .def_readonly("horizon", &SwitchingSignal::horizon)
        .def("mode_at", &SwitchingSignal::mode_at, py::arg("t"));

    py::class_<BenchRecord>(m, "BenchRecord")
        .def_readonly("method", &BenchRecord::method)
        .def_readonly("time_s", &BenchRecord::time_s)
        .def_readonly("verdict", &BenchRecord::verdict)
        .def_readonly("dofs", &BenchRecord::dofs)
        .def("__repr__", [](const BenchRecord& r) {
            return "BenchRecord(" + r.method + ", " + std::to_string(r.time_s) + "s, " +
                   r.verdict + ")";
        });

    py::class_<BenchTable>(m, "BenchTable")
        .def_readonly("rows", &BenchTable::rows)
        .def_readonly("consistent", &BenchTable::consistent)
        .def_readonly("notes", &BenchTable::notes)
        .def("csv", &BenchTable::csv);

    m.def(
        "parse_config",
        [](const std::string& text, const std::string& origin) {
            return parse_run_config(text, origin);
        },
        py::arg("text"), py::arg("origin") = "<config>",
        "Parse a strict JSON run configuration (ConfigError carries origin:line).");
    m.def("load_config", &load_run_config, py::arg("path"));
    m.def("build_network", &build_network, py::arg("config"),
          "Instantiate the configured network: generated fleet + gains or explicit agents.");
    m.def("uav_network", &uav_network, py::arg("seed"),
          "Nine randomized quadrotors with LQR gains in the four canonical formation modes.");

    m.def(
        "certify",
        [](const NetworkSpec& spec, double margin_kyp, double margin_qhat, double box_bound,
           double stage_margin, double tol, int iter_cap, bool use_warm_start) {
            CertifyOptions opts;
            opts.margin_kyp = margin_kyp;
            opts.margin_qhat = margin_qhat;
            opts.box_bound = box_bound;
            opts.stage_margin = stage_margin;
            opts.tol = tol;
            opts.iter_cap = iter_cap;
            opts.use_warm_start = use_warm_start;
            return certify(spec, opts);
        },
        py::arg("spec"), py::arg("margin_kyp") = CertifyOptions{}.margin_kyp,
        py::arg("margin_qhat") = CertifyOptions{}.margin_qhat,
        py::arg("box_bound") = CertifyOptions{}.box_bound,
        py::arg("stage_margin") = CertifyOptions{}.stage_margin,
        py::arg("tol") = CertifyOptions{}.tol, py::arg("iter_cap") = CertifyOptions{}.iter_cap,
        py::arg("use_warm_start") = CertifyOptions{}.use_warm_start,
        "Solve for per-agent QSR certificates valid under every admissible mode.");

    m.def("recheck", &recheck_certificate, py::arg("spec"), py::arg("certificate"),
          py::arg("margin_kyp") = 1e-7,
          "Independently re-verify a certificate against a network.");

    m.def(
        "derive_common_supply",
        [](const std::vector<std::tuple<Rows, Rows, Rows>>& modes,
           const std::vector<double>& epsilons) {
            std::vector<QsrTriple> triples;
            triples.reserve(modes.size());
            for (const auto& [Q, S, R] : modes)
                triples.push_back({to_matrix(Q), to_matrix(S), to_matrix(R)});
            return derive_common_supply(triples, epsilons);
        },
        py::arg("modes"), py::arg("epsilons") = std::vector<double>{},
        "Mode-independent supply -q||y||^2 + r||u||^2 from per-mode (Q, S, R) triples.");

    m.def(
        "coupling_matrices",
        [](const Rows& Q, const Rows& S, const Rows& R, const Rows& H) {
            const QsrTriple hat =
                coupling_matrices(to_matrix(Q), to_matrix(S), to_matrix(R), to_matrix(H));
            return py::make_tuple(to_rows(hat.Q), to_rows(hat.S), to_rows(hat.R));
        },
        py::arg("Q"), py::arg("S"), py::arg("R"), py::arg("H"),
        "Supply-rate transform of the stacked triple under u = e + H y.");

    m.def(
        "care_sign",
        [](const Rows& A, const Rows& B, const Rows& Q, const Rows& R) {
            return to_rows(care_sign(to_matrix(A), to_matrix(B), to_matrix(Q), to_matrix(R)));
        },
        py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"),
        "Stabilising Riccati solution via the matrix sign iteration.");

    m.def(
        "lqr_gain",
        [](const Rows& A, const Rows& B, const Rows& Q, const Rows& R) {
            const LqrResult res = lqr_gain(to_matrix(A), to_matrix(B), to_matrix(Q), to_matrix(R));
            py::dict out;
            out["K"] = to_rows(res.K);
            out["P"] = to_rows(res.P);
            out["care_residual"] = res.care_residual;
            return out;
        },
        py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"),
        "LQR state feedback u = -K x with its Riccati solution.");

    m.def("gen_switching", &gen_switching, py::arg("seed"), py::arg("horizon"),
          py::arg("n_switches"), py::arg("n_modes"), py::arg("min_dwell"),
          "Random mode schedule with a guaranteed minimum dwell time.");

    m.def(
        "l2_disturbance",
        [](const std::string& kind, double t) { return l2_disturbance(parse_dist_kind(kind), t); },
        py::arg("kind"), py::arg("t"),
        "Unit-energy disturbance shapes on t >= 0: bump, sinc, or decay.");

    m.def("simulate_network", &run_simulation, py::arg("spec"), py::arg("certificate"),
          py::arg("dt") = SimulateConfig{}.dt, py::arg("horizon") = SimulateConfig{}.horizon,
          py::arg("n_switches") = SimulateConfig{}.n_switches,
          py::arg("min_dwell") = SimulateConfig{}.min_dwell,
          py::arg("switch_seed") = SimulateConfig{}.switch_seed,
          py::arg("disturbance_seed") = SimulateConfig{}.disturbance_seed,
          py::arg("rotor_scale") = SimulateConfig{}.rotor_scale,
          py::arg("x0") = std::vector<double>{},
          "Run the switched closed loop and check the certificate's L2 bound.");

    m.def("bench_table", &bench_table, py::arg("spec"), py::arg("repetitions") = 3,
          "Time the compositional method against the monolithic and scattering baselines.");
}
