#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "qsrnet/bench.hpp"
#include "qsrnet/dissipativity.hpp"
#include "qsrnet/lmi.hpp"
#include "qsrnet/matrix.hpp"
#include "qsrnet/network.hpp"
#include "qsrnet/riccati.hpp"
#include "qsrnet/rng.hpp"
#include "qsrnet/sim.hpp"

using namespace qsrnet;

namespace {

constexpr uint64_t kFleetSeed = 7;

/// One acceptance criterion: failed expectations accumulate into the
/// diagnostic, and conclude() emits exactly one PASS/FAIL line.
struct Criterion {
    int number;
    const char* title;
    bool ok = true;
    std::string why;

    void expect(bool cond, const std::string& msg) {
        if (!cond) {
            ok = false;
            why += "\n  - " + msg;
        }
    }
};

void conclude(const Criterion& c) {
    std::printf("acceptance criterion %d (%s): %s\n", c.number, c.title, c.ok ? "PASS" : "FAIL");
    std::fflush(stdout);
    CHECK_MESSAGE(c.ok, "criterion " << c.number << " details:" << c.why);
}

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

const NetworkSpec& flagship_spec() {
    static const NetworkSpec spec = uav_network(kFleetSeed);
    return spec;
}

struct Flagship {
    CertifyResult res;
    double seconds = 0.0;
};

const Flagship& flagship() {
    static const Flagship f = [] {
        Flagship g;
        const auto t0 = std::chrono::steady_clock::now();
        g.res = certify(flagship_spec());
        g.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return g;
    }();
    return f;
}

std::vector<double> row_of(const Matrix& M, int k) {
    std::vector<double> v(M.cols);
    for (int c = 0; c < M.cols; ++c) v[c] = M(k, c);
    return v;
}

/// Per-mode network supply triples implied by a certificate.
std::vector<QsrTriple> hatted_triples(const NetworkSpec& spec, const Certificate& cert) {
    std::vector<Matrix> qb, sb, rb;
    for (const AgentCertificate& ac : cert.agents) {
        qb.push_back(ac.qsr.Q);
        sb.push_back(ac.qsr.S);
        rb.push_back(ac.qsr.R);
    }
    const Matrix Qf = block_diag(qb), Sf = block_diag(sb), Rf = block_diag(rb);
    std::vector<QsrTriple> out;
    for (const TopologyMode& mode : spec.modes) out.push_back(coupling_matrices(Qf, Sf, Rf, mode.H));
    return out;
}

/// Tolerance scale of one record: the largest storage value or cumulative
/// supply integral encountered along it.
double dissipation_scale(const TrajectoryRecord& rec, const QuadStorage& storage,
                         const QsrTriple& qsr) {
    const double dt = rec.t.size() > 1 ? rec.t[1] - rec.t[0] : 0.0;
    double scale = 1e-12, cum = 0.0, prev_w = 0.0;
    for (int k = 0; k < rec.samples(); ++k) {
        const double v = storage.value(row_of(rec.x, k));
        const double w = supply_rate(qsr, row_of(rec.y, k), row_of(rec.u, k));
        if (k > 0) cum += 0.5 * dt * (prev_w + w);
        prev_w = w;
        scale = std::max({scale, std::abs(v), std::abs(cum)});
    }
    return scale;
}

}  // namespace

TEST_CASE("end-to-end certification of the vehicle formation") {
    Criterion c{1, "nine-vehicle four-mode network certifies in under 60 s"};
    const Flagship& f = flagship();
    c.expect(f.res.status == FeasStatus::Feasible,
             "certify returned " + std::string(f.res.status == FeasStatus::Infeasible
                                                   ? "infeasible"
                                                   : "undecided") +
                 " (" + f.res.diagnostics + ")");
    c.expect(f.seconds < 60.0, "certification took " + num(f.seconds) + " s");
    if (f.res.status == FeasStatus::Feasible) {
        const Certificate& cert = f.res.certificate;
        c.expect(cert.agents.size() == 18, "expected 18 agent certificates");
        c.expect(cert.coupling_max_eig.size() == 4, "expected four coupling modes");
        for (size_t m = 0; m < cert.coupling_max_eig.size(); ++m)
            c.expect(cert.coupling_max_eig[m] < 0.0,
                     "mode " + std::to_string(m + 1) + " coupling lambda_max " +
                         num(cert.coupling_max_eig[m]) + " is not negative");
        c.expect(!cert.solve_margins.empty(), "no verified margins recorded");
        for (double m : cert.solve_margins)
            c.expect(m <= 1e-9, "a verified constraint margin is " + num(m));
        for (int i = 0; i < 9; ++i) {
            c.expect(cert.agents[i].storage.P.rows == 12, "plant storage has wrong size");
            c.expect(cert.agents[i + 9].storage.P.rows == 0, "gain storage should be empty");
        }
    }
    conclude(c);
}

TEST_CASE("common-supply formulas and dominance") {
    Criterion c{2, "supply formulas match hand values and dominate all modes"};

    const Matrix I2 = Matrix::identity(2);
    const CommonSupply a = derive_common_supply({{-2.0 * I2, Matrix(2, 2), 3.0 * I2}}, {1.0});
    c.expect(std::abs(a.q - 1.0) <= 1e-12, "matrix example: q = " + num(a.q));
    c.expect(std::abs(a.r - 3.0) <= 1e-12, "matrix example: r = " + num(a.r));
    c.expect(std::abs(a.gamma - std::sqrt(3.0)) <= 1e-12, "matrix example: gamma = " + num(a.gamma));

    Matrix q1(1, 1), s1(1, 1), r1(1, 1);
    q1(0, 0) = -2.0;
    s1(0, 0) = 1.0;
    const CommonSupply b = derive_common_supply({{q1, s1, r1}}, {1.0});
    c.expect(std::abs(b.q - 1.0) <= 1e-12, "scalar example: q = " + num(b.q));
    c.expect(std::abs(b.r - 1.0) <= 1e-12, "scalar example: r = " + num(b.r));
    c.expect(std::abs(b.gamma - 1.0) <= 1e-12, "scalar example: gamma = " + num(b.gamma));

    const Flagship& f = flagship();
    c.expect(f.res.status == FeasStatus::Feasible, "no certificate to sample against");
    if (f.res.status == FeasStatus::Feasible) {
        const Certificate& cert = f.res.certificate;
        const std::vector<QsrTriple> hats = hatted_triples(flagship_spec(), cert);
        const int dim = hats[0].Q.rows;
        Rng rng(505);
        double worst = -HUGE_VAL;
        std::vector<double> y(dim), u(dim);
        for (int sample = 0; sample < 100000; ++sample) {
            const int mode = rng.uniform_int(static_cast<int>(hats.size()));
            double ny2 = 0.0, nu2 = 0.0;
            for (int i = 0; i < dim; ++i) {
                y[i] = rng.uniform(-1.0, 1.0);
                u[i] = rng.uniform(-1.0, 1.0);
                ny2 += y[i] * y[i];
                nu2 += u[i] * u[i];
            }
            const double w = supply_rate(hats[mode], y, u);
            const double bound = -cert.supply.q * ny2 + cert.supply.r * nu2;
            worst = std::max(worst, w - bound);
        }
        c.expect(worst <= 1e-9, "dominance violated by " + num(worst));
    }
    conclude(c);
}

TEST_CASE("dissipation inequality holds on random agent records") {
    Criterion c{3, "every certified agent passes 50 random-input dissipation checks"};
    const Flagship& f = flagship();
    c.expect(f.res.status == FeasStatus::Feasible, "no certificate to validate");
    if (f.res.status == FeasStatus::Feasible) {
        const NetworkSpec& spec = flagship_spec();
        const Certificate& cert = f.res.certificate;
        const double dt = 0.01, horizon = 10.0;
        Rng rng(909);
        int failures = 0;
        for (size_t i = 0; i < spec.agents.size(); ++i) {
            const Agent& ag = spec.agents[i];
            const AgentCertificate& ac = cert.agents[i];
            for (int rep = 0; rep < 50; ++rep) {
                DisturbanceProfile dist =
                    random_disturbance(9000 + 100 * i + rep, ag.nu());
                for (double& s : dist.scale) s = rng.uniform(0.25, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
                TrajectoryRecord rec;
                if (ag.kind == AgentKind::Dynamic) {
                    std::vector<double> x0(ag.nx());
                    for (double& v : x0) v = 0.5 * rng.normal();
                    rec = simulate(ag.ss, dist, dt, horizon, x0);
                } else {
                    const int n = static_cast<int>(horizon / dt) + 1;
                    rec.t.resize(n);
                    rec.x = Matrix(n, 0);
                    rec.u = Matrix(n, ag.nu());
                    rec.y = Matrix(n, ag.ny());
                    for (int k = 0; k < n; ++k) {
                        rec.t[k] = k * dt;
                        for (int ch = 0; ch < ag.nu(); ++ch)
                            rec.u(k, ch) = dist.value(ch, rec.t[k]);
                        for (int r = 0; r < ag.ny(); ++r) {
                            double acc = 0.0;
                            for (int ch = 0; ch < ag.nu(); ++ch)
                                acc += ag.K(r, ch) * rec.u(k, ch);
                            rec.y(k, r) = acc;
                        }
                    }
                }
                const double tol = 1e-3 * dissipation_scale(rec, ac.storage, ac.qsr);
                const DissipationReport rep_out =
                    check_dissipation(rec, ac.storage, ac.qsr, tol);
                if (!rep_out.passed) {
                    ++failures;
                    if (failures <= 3)
                        c.expect(false, "agent " + std::to_string(i) + " rep " +
                                            std::to_string(rep) + ": violation " +
                                            num(rep_out.worst_violation) + " over tol " +
                                            num(rep_out.tolerance));
                }
            }
        }
        c.expect(failures == 0, std::to_string(failures) + " of 900 checks failed");
    }
    conclude(c);
}

TEST_CASE("empirical l2 bound holds across random switched scenarios") {
    Criterion c{4, "20 switched disturbance scenarios satisfy the certified bound"};
    const Flagship& f = flagship();
    c.expect(f.res.status == FeasStatus::Feasible, "no certificate to validate");
    if (f.res.status == FeasStatus::Feasible) {
        const NetworkSpec& spec = flagship_spec();
        const Certificate& cert = f.res.certificate;
        const auto fam = closed_loop_family(spec);
        c.expect(fam.has_value(), "flagship network lost its paired structure");
        if (fam) {
            Rng rng(808);
            for (int scenario = 1; scenario <= 20; ++scenario) {
                const SwitchingSignal sig =
                    gen_switching(4000 + scenario, 180.0, 15, 4, 1.0);
                DisturbanceProfile dist = random_disturbance(5000 + scenario, 144);
                for (int ch = 0; ch < 36; ++ch) dist.scale[ch] *= 1000.0;
                std::vector<double> x0(fam->A.rows, 0.0);
                if (scenario > 10)
                    for (double& v : x0) v = 0.2 * rng.uniform(-1.0, 1.0);
                const SimResult sim = simulate(*fam, sig, dist, 1.0 / 24.0, x0);
                c.expect(!sim.diverged,
                         "scenario " + std::to_string(scenario) + " diverged at t=" +
                             num(sim.divergence_time));
                if (sim.diverged) continue;
                double v0 = 0.0;
                for (int i = 0; i < fam->pairs; ++i) {
                    std::vector<double> xi(x0.begin() + fam->off[i],
                                           x0.begin() + fam->off[i] + fam->nx[i]);
                    v0 += cert.agents[i].storage.value(xi);
                }
                const double beta = cert.supply.beta_coeff * std::sqrt(std::max(0.0, v0));
                const GainReport g = empirical_gain(sim.network, cert.supply.gamma, beta);
                c.expect(g.passed, "scenario " + std::to_string(scenario) +
                                       " violated the bound by " + num(g.worst_violation) +
                                       " at T=" + num(g.worst_time));
            }
        }
    }
    conclude(c);
}

TEST_CASE("timing order of certification methods") {
    Criterion c{5, "compositional beats block-diagonal beats full monolithic; eigen step beats identification"};
    const BenchTable table = bench_table(flagship_spec(), 3);
    c.expect(table.rows.size() == 5, "expected five timing rows");
    if (table.rows.size() == 5) {
        const BenchRecord& comp = table.rows[0];
        const BenchRecord& blockd = table.rows[1];
        const BenchRecord& full = table.rows[2];
        const BenchRecord& eigen = table.rows[3];
        const BenchRecord& ident = table.rows[4];
        c.expect(comp.verdict == "feasible", "compositional verdict: " + comp.verdict);
        c.expect(blockd.verdict == "feasible", "monolithic-block verdict: " + blockd.verdict);
        c.expect(full.verdict == "feasible", "monolithic-full verdict: " + full.verdict);
        c.expect(comp.time_s < blockd.time_s,
                 "compositional " + num(comp.time_s) + " s is not under monolithic-block " +
                     num(blockd.time_s) + " s");
        c.expect(blockd.time_s < full.time_s,
                 "monolithic-block " + num(blockd.time_s) + " s is not under monolithic-full " +
                     num(full.time_s) + " s");
        c.expect(eigen.time_s < ident.time_s,
                 "eigen step " + num(eigen.time_s) + " s is not under identification " +
                     num(ident.time_s) + " s");
        c.expect(table.consistent, "verdict consistency flag is down: " + table.notes);
        std::printf("  timings[s]: compositional=%.3f block=%.3f full=%.3f eigen=%.4f identify=%.3f\n",
                    comp.time_s, blockd.time_s, full.time_s, eigen.time_s, ident.time_s);
    }
    conclude(c);
}

TEST_CASE("feasibility solver soundness on known-verdict problems") {
    Criterion c{6, "50 Lyapunov-type problems: no unsound feasible answers, >= 90% decided"};
    Rng rng(606);
    int decided = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const bool known_feasible = trial < 35;
        LmiProblem prob;
        if (known_feasible) {
            const int n = 2 + rng.uniform_int(7);
            Matrix A(n, n);
            for (int r = 0; r < n; ++r)
                for (int col = 0; col < n; ++col)
                    if (r != col) A(r, col) = 0.4 * rng.normal();
            for (int r = 0; r < n; ++r) {
                double off = 0.0;
                for (int col = 0; col < n; ++col) off += std::abs(A(r, col));
                A(r, r) = -(off + 0.5 + rng.uniform());
            }
            const int p = prob.add_symmetric(n);
            AffineMatrixExpr lyap;
            lyap.dim = n;
            lyap.terms.push_back({p, transpose(A), Matrix::identity(n), true});
            prob.add_constraint(std::move(lyap), 1e-4);
            prob.add_psd(p, 1e-3);
        } else {
            const double a = 0.1 + 1.9 * rng.uniform();
            const int p = prob.add_symmetric(1);
            AffineMatrixExpr lyap;
            lyap.dim = 1;
            Matrix coeff(1, 1);
            coeff(0, 0) = a;
            lyap.terms.push_back({p, coeff, Matrix::identity(1), true});
            prob.add_constraint(std::move(lyap), 1e-4);
            prob.add_psd(p, 1e-3);
        }
        const FeasibilityResult res = solve_feasibility(prob);
        if (res.status == FeasStatus::Feasible) {
            ++decided;
            c.expect(known_feasible,
                     "trial " + std::to_string(trial) + ": feasible answer on an infeasible problem");
            const std::vector<double> margins = verify_assignment(prob, res.assignment);
            for (double m : margins)
                c.expect(m <= 0.0, "trial " + std::to_string(trial) +
                                       ": feasible answer fails re-verification (margin " +
                                       num(m) + ")");
        } else if (res.status == FeasStatus::Infeasible) {
            ++decided;
            c.expect(!known_feasible,
                     "trial " + std::to_string(trial) + ": infeasible answer on a feasible problem");
        }
    }
    c.expect(decided >= 45, "only " + std::to_string(decided) + "/50 problems decided");
    std::printf("  decided %d/50\n", decided);
    conclude(c);
}

TEST_CASE("riccati accuracy") {
    Criterion c{7, "scalar solution matches the closed form; 12-state residuals meet the contract"};
    Matrix a1(1, 1), b1(1, 1), q1(1, 1), r1(1, 1);
    a1(0, 0) = -1.0;
    b1(0, 0) = 1.0;
    q1(0, 0) = 1.0;
    r1(0, 0) = 1.0;
    const Matrix p1 = care_sign(a1, b1, q1, r1);
    c.expect(std::abs(p1(0, 0) - (std::sqrt(2.0) - 1.0)) <= 1e-10,
             "scalar solution " + num(p1(0, 0)) + " vs sqrt(2)-1");

    Rng rng(707);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix A(12, 12), B(12, 4);
        for (double& v : A.a) v = rng.uniform(-1.0, 1.0);
        for (double& v : B.a) v = rng.uniform(-1.0, 1.0);
        const Matrix Q = Matrix::identity(12);
        const Matrix R = Matrix::identity(4);
        const Matrix P = care_sign(A, B, Q, R);
        const Matrix res = symmetrize(transpose(A) * P + P * A -
                                      P * B * transpose(B) * P + Q);
        const double rel = frob_norm(res) / (1.0 + frob_norm(P) * frob_norm(P));
        c.expect(rel <= 1e-8,
                 "trial " + std::to_string(trial) + ": residual " + num(rel));
    }
    conclude(c);
}

TEST_CASE("disturbance shapes carry unit energy") {
    Criterion c{8, "numerically integrated disturbance energies sit in [0.99, 1.01]"};
    const struct {
        DistKind kind;
        double horizon;
        const char* name;
    } shapes[] = {{DistKind::Bump, 60.0, "bump"},
                  {DistKind::Sinc, 20000.0, "sinc"},
                  {DistKind::Decay, 10000.0, "decay"}};
    for (const auto& s : shapes) {
        const double dt = 1e-3;
        const auto n = static_cast<long long>(s.horizon / dt);
        double sum = 0.0;
        for (long long k = 0; k <= n; ++k) {
            const double v = l2_disturbance(s.kind, k * dt);
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            sum += w * v * v * dt;
        }
        c.expect(sum >= 0.99 && sum <= 1.01,
                 std::string(s.name) + " energy " + num(sum));
    }
    conclude(c);
}
