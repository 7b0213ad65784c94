#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsrnet/bench.hpp"
#include "qsrnet/config.hpp"
#include "qsrnet/errors.hpp"
#include "qsrnet/network.hpp"
#include "qsrnet/sim.hpp"

using namespace qsrnet;

namespace {

const char* status_word(FeasStatus s) {
    switch (s) {
        case FeasStatus::Feasible: return "feasible";
        case FeasStatus::Infeasible: return "infeasible";
        default: return "undecided";
    }
}

void count_agents(const NetworkSpec& spec, int& dynamic, int& gains) {
    dynamic = gains = 0;
    for (const Agent& a : spec.agents) (a.kind == AgentKind::Dynamic ? dynamic : gains)++;
}

int cmd_certify(const RunConfig& cfg, const std::string& out_dir) {
    const NetworkSpec spec = build_network(cfg);
    int nd = 0, ns = 0;
    count_agents(spec, nd, ns);
    std::printf("network: %d agents (%d dynamic, %d static), %zu modes\n", nd + ns, nd, ns,
                spec.modes.size());

    const CertifyResult res = certify(spec, cfg.certify);
    std::printf("certified: %s\n", res.status == FeasStatus::Feasible ? "yes" : "no");
    std::printf("solver status: %s\n", status_word(res.status));
    if (!res.diagnostics.empty()) std::printf("notes: %s\n", res.diagnostics.c_str());
    if (res.status != FeasStatus::Feasible) return 2;

    const Certificate& cert = res.certificate;
    std::printf("coupling lambda_max per mode:");
    for (double v : cert.coupling_max_eig) std::printf(" %.6g", v);
    std::printf("\n");
    if (!cert.solve_margins.empty()) {
        double worst = -HUGE_VAL;
        for (double m : cert.solve_margins) worst = std::max(worst, m);
        std::printf("worst verified constraint margin: %.3e\n", worst);
    }
    std::printf("common supply: q=%.6g r=%.6g\n", cert.supply.q, cert.supply.r);
    std::printf("l2 bound: |y|_T <= %.6g |u|_T + %.6g sqrt(V(x0))\n", cert.supply.gamma,
                cert.supply.beta_coeff);
    std::printf("solve: %.2f s, %d iterations\n", cert.solve_seconds, cert.iterations);

    const std::string path = out_dir + "/certificate.json";
    save_certificate(path, cert);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& cert_path) {
    const NetworkSpec spec = build_network(cfg);
    Certificate cert;
    if (std::filesystem::exists(cert_path)) {
        cert = load_certificate(cert_path);
        std::printf("loaded %s\n", cert_path.c_str());
    } else {
        std::printf("no certificate at %s, certifying first\n", cert_path.c_str());
        const CertifyResult res = certify(spec, cfg.certify);
        if (res.status != FeasStatus::Feasible) {
            std::printf("certified: no (%s); nothing to validate\n", status_word(res.status));
            return 2;
        }
        cert = res.certificate;
        save_certificate(cert_path, cert);
        std::printf("wrote %s\n", cert_path.c_str());
    }

    const RecheckReport recheck = recheck_certificate(spec, cert, cfg.certify.margin_kyp);
    if (!recheck.passed)
        throw ConfigError(cert_path + ": certificate fails re-verification on this network");
    std::printf("certificate re-verified against the network\n");

    const std::optional<ClosedLoopFamily> fam = closed_loop_family(spec);
    if (!fam)
        throw ConfigError("the network is not a paired plant/gain family; cannot simulate");

    const SimulateConfig& sc = cfg.simulate;
    const SwitchingSignal sig = gen_switching(sc.switch_seed, sc.horizon, sc.n_switches,
                                              static_cast<int>(spec.modes.size()), sc.min_dwell);
    const int ne = fam->B.cols + fam->K.cols;  // plant channels then gain channels
    DisturbanceProfile dist = random_disturbance(sc.disturbance_seed, ne);
    for (int c = 0; c < fam->B.cols; ++c) dist.scale[c] *= sc.rotor_scale;

    std::vector<double> x0 = sc.x0;
    if (x0.empty()) x0.assign(fam->A.rows, 0.0);
    const SimResult sim = simulate(*fam, sig, dist, sc.dt, x0);

    double v0 = 0.0;
    for (int i = 0; i < fam->pairs; ++i) {
        std::vector<double> xi(x0.begin() + fam->off[i], x0.begin() + fam->off[i] + fam->nx[i]);
        v0 += cert.agents[i].storage.value(xi);
    }
    const double beta = cert.supply.beta_coeff * std::sqrt(std::max(0.0, v0));
    const GainReport gain = empirical_gain(sim.network, cert.supply.gamma, beta);

    write_events_csv(out_dir + "/events.csv", sig);
    write_trajectory_csv(out_dir + "/trajectory.csv", sim.network);
    write_series_csv(out_dir + "/state_error.csv", "e", sim.network.t, state_error(sim.network));
    if (!cfg.topology.builtin.empty()) {
        const int per_group = fam->A.rows / 3;
        for (int g = 0; g < 3; ++g) {
            const std::string path =
                out_dir + "/state_error_group" + std::to_string(g + 1) + ".csv";
            write_series_csv(path, "e", sim.network.t,
                             state_error(sim.network, g * per_group, (g + 1) * per_group));
        }
    }

    nlohmann::json rep;
    rep["gamma"] = cert.supply.gamma;
    rep["beta"] = beta;
    rep["passed"] = gain.passed;
    rep["gain_estimate"] = gain.gain_estimate;
    rep["worst_violation"] = gain.worst_violation;
    rep["worst_time"] = gain.worst_time;
    rep["diverged"] = sim.diverged;
    rep["divergence_time"] = sim.divergence_time;
    {
        std::ofstream out(out_dir + "/empirical_gain.json", std::ios::binary);
        if (!out) throw ConfigError(out_dir + "/empirical_gain.json: cannot open for writing");
        out << rep.dump(1) << "\n";
    }

    std::printf("simulated %.6g s at dt=%.6g (%d samples, %d switches)\n", sig.horizon, sc.dt,
                sim.network.samples(), sc.n_switches);
    if (sim.diverged) {
        std::printf("DIVERGED at t=%.6g\n", sim.divergence_time);
        return 2;
    }
    std::printf("l2 bound %s: max(|y|_T - gamma |u|_T - beta) = %.6g at T=%.6g\n",
                gain.passed ? "holds" : "VIOLATED", gain.worst_violation, gain.worst_time);
    std::printf("empirical gain estimate: %.6g (certified bound %.6g)\n", gain.gain_estimate,
                cert.supply.gamma);
    std::printf("wrote %s/{events,trajectory,state_error*}.csv and empirical_gain.json\n",
                out_dir.c_str());
    return gain.passed ? 0 : 2;
}

int cmd_bench(const RunConfig& cfg, const std::string& out_dir) {
    const NetworkSpec spec = build_network(cfg);
    const BenchTable table = bench_table(spec, cfg.bench.repetitions);
    const std::string path = out_dir + "/bench.csv";
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError(path + ": cannot open for writing");
        out << table.csv();
    }
    std::printf("%-22s %12s  %s\n", "method", "median[s]", "verdict");
    for (const BenchRecord& r : table.rows)
        std::printf("%-22s %12.4f  %s\n", r.method.c_str(), r.time_s, r.verdict.c_str());
    if (!table.notes.empty()) std::printf("notes: %s\n", table.notes.c_str());
    std::printf("wrote %s\n", path.c_str());
    return table.consistent ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Certify L2 stability of switched agent interconnections, validate the\n"
        "certificates in simulation, and benchmark certification methods."};
    app.require_subcommand(1);

    std::string config_path, out_dir, cert_path;
    uint64_t seed = 0;
    bool seed_set = false;

    const auto add_common = [&](CLI::App* sub, bool with_cert) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory (default: $QSRNET_OUT or .)");
        sub->add_option("--seed", seed, "override fleet seed (switch/disturbance seeds follow)")
            ->check(CLI::NonNegativeNumber);
        if (with_cert)
            sub->add_option("--certificate", cert_path,
                            "certificate path (default: <out>/certificate.json)");
    };
    CLI::App* certify_cmd = app.add_subcommand("certify", "solve for a switching-independent "
                                                          "L2 certificate and save it");
    CLI::App* simulate_cmd = app.add_subcommand("simulate", "validate a certificate on a "
                                                            "random switched run");
    CLI::App* bench_cmd = app.add_subcommand("bench", "time certification methods on the "
                                                      "configured network");
    add_common(certify_cmd, false);
    add_common(simulate_cmd, true);
    add_common(bench_cmd, false);
    for (CLI::App* sub : {certify_cmd, simulate_cmd, bench_cmd})
        sub->callback([&, sub] { seed_set = sub->count("--seed") > 0; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (out_dir.empty()) {
            const char* env = std::getenv("QSRNET_OUT");
            out_dir = env && *env ? env : ".";
        }
        std::filesystem::create_directories(out_dir);
        RunConfig cfg = load_run_config(config_path);
        if (seed_set) {
            cfg.fleet.seed = seed;
            cfg.simulate.switch_seed = seed + 1;
            cfg.simulate.disturbance_seed = seed + 2;
        }
        if (cert_path.empty()) cert_path = out_dir + "/certificate.json";

        if (app.got_subcommand(certify_cmd)) return cmd_certify(cfg, out_dir);
        if (app.got_subcommand(simulate_cmd)) return cmd_simulate(cfg, out_dir, cert_path);
        return cmd_bench(cfg, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
