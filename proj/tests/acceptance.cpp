#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "feberi/cli/runs.hpp"

using namespace feberi;
using namespace feberi::cli;

namespace {

// Tolerances, fixed here so the report is reproducible.
constexpr double tol_linf = 0.05;
constexpr double max_seconds = 60.0;
constexpr double tol_energy_closed = 1e-12;
constexpr double tol_energy_numeric = 1e-3;
constexpr double zG_target = 0.049, tol_zG = 0.02;
constexpr double tol_zT = 1e-10;
constexpr double Lmax_target = 0.033, tol_Lmax = 0.03;
constexpr double tol_bmax = 1e-3;
constexpr double tol_integral = 1e-10;
constexpr double tol_support = 1e-10;
constexpr double tol_parity = 1e-10;
constexpr double tol_resonance = 1e-3;
constexpr double min_correlation = 0.99;
constexpr double tol_spacing = 0.10;
constexpr double tol_oracle = 1e-8;
constexpr double tol_marginal = 1e-6;
constexpr double tol_talbot = 1e-12;

constexpr double omega = 3e15;
const double T21 = 2.0 * pi / omega;
const double E21 = constants.hbar * omega;

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("criterion %d %s: %s: %s\n", id, ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string num(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3e", x);
    return b;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

ScenarioConfig gaussian(double sigma_over_T, double theta, double phi, double L = 0.0) {
    ScenarioConfig c = base_preset("acceptance", sigma_over_T);
    c.tls.theta = theta;
    c.tls.phi = phi;
    c.qew.L_D = L;
    return c;
}

ScenarioConfig modulated(double sigma_over_T, double theta, double phi, double L, double ratio = 1.0) {
    ScenarioConfig c = modulated_preset("acceptance", sigma_over_T, 1.5);
    c.pinem->omega_b = ratio * omega;
    c.tls.theta = theta;
    c.tls.phi = phi;
    c.qew.L_D = L;
    return c;
}

double worst_numeric_energy = 0.0;

void criterion1() {
    double worst = 0.0, slowest = 0.0;
    for (double th : {pi / 4.0, pi / 2.0})
        for (double ph : {0.0, pi / 2.0}) {
            ScenarioConfig c = gaussian(0.6, th, ph);
            c.numeric.N = 4096;
            c.numeric.method = Integrator::rk4;
            c.numeric.dt_factor = 1.0;
            const Scenario s = resolve(c);
            const UniformGrid g = scenario_grid(s, c.numeric.N).grid;
            const auto t0 = std::chrono::steady_clock::now();
            const NumericRun r = run_numeric(s, sampled_state(s, g));
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const IncrementalSpectrum ref = closed_spectrum(s, g, RecoilSign::as_printed);
            double d = 0.0;
            for (int n = 0; n < g.N; ++n) d = std::max(d, std::abs(r.spectrum.delta[n] - ref.total[n]));
            worst = std::max(worst, d / max_abs(ref.total));
            slowest = std::max(slowest, secs);
            worst_numeric_energy = std::max(worst_numeric_energy, r.energy_rel);
        }
    report(1, "analytic-numeric spectrum agreement", worst <= tol_linf && slowest <= max_seconds,
           "max L-inf " + num(worst) + " of peak (limit " + num(tol_linf) + "), slowest case " + num(slowest) +
               " s (limit " + num(max_seconds) + " s), N=4096 rk4 dt=T/200");
}

void criterion2() {
    double worst = 0.0;
    const double Lmax = preset_L_max(1.5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const double th = i * pi / 4.0, ph = j * 2.0 * pi / 5.0;
            for (RecoilSign sign : {RecoilSign::as_printed, RecoilSign::flipped})
                for (const ScenarioConfig& base : {gaussian(0.6, th, ph, 0.01), modulated(1.0, th, ph, Lmax)}) {
                    ScenarioConfig c = base;
                    c.interaction.recoil_sign = sign;
                    c.numeric.N = 2048;
                    const Scenario s = resolve(c);
                    const UniformGrid g = scenario_grid(s, c.numeric.N).grid;
                    const double res = energy_balance(closed_spectrum(s, g, sign), closed_transition(s), E21, sign);
                    worst = std::max(worst, std::abs(res) / s.tls.E21_eV());
                }
        }
    report(2, "energy conservation",
           worst <= tol_energy_closed && worst_numeric_energy <= tol_energy_numeric,
           "closed residual " + num(worst) + " of E21 over 5x5 angles, both pipelines and signs (limit " +
               num(tol_energy_closed) + "); numeric residual " + num(worst_numeric_energy) + " (limit " +
               num(tol_energy_numeric) + ")");
}

void criterion3() {
    const BeamParams b = derive_beam(0.7);
    const double zG = z_gauss_limit(b, omega);
    const double zT = talbot_length(b, omega);
    const BunchingOptimum o = optimal_bunching_length(make_pinem(1.5, 0.0, omega), 1, zT);
    const double eG = std::abs(zG / zG_target - 1.0);
    const double eT = std::abs(zT / (2.0 * pi * zG) - 1.0);
    const double eL = std::abs(o.L_D / Lmax_target - 1.0);
    const double eB = std::abs(o.b_max - bessel_j(1, 1.8412));
    report(3, "scale reproduction", eG <= tol_zG && eT <= tol_zT && eL <= tol_Lmax && eB <= tol_bmax,
           "z_G " + num(zG) + " m (dev " + num(eG) + "), z_T/(2pi z_G)-1 " + num(eT) + ", L_max " + num(o.L_D) +
               " m (dev " + num(eL) + "), |b1|max " + num(o.b_max) + " (dev " + num(eB) + ")");
}

void criterion4() {
    const Scenario broad = resolve(gaussian(1.0, 0.0, 0.0));
    const double r1 = std::abs(closed_transition(broad).delta_P2) / std::pow(std::sin(1.1e-3), 2);

    const double Lmax = preset_L_max(1.5);
    const Scenario bunched = resolve(modulated(1.0, pi / 2.0, in_phase_phi(Lmax), Lmax));
    const double bmax = optimal_bunching_length(bunched.mod->pinem, 1, bunched.mod->talbot()).b_max;
    const double r2 = std::abs(closed_transition(bunched).first_order) / (1.1e-3 * bmax);
    report(4, "interaction magnitudes", r1 >= 0.5 && r1 <= 2.0 && r2 >= 0.3 && r2 <= 1.0,
           "broad |dP2|/sin^2|g| " + num(r1) + " (range [0.5, 2]), bunched |dP2_1|/(|g| |b1|max) " + num(r2) +
               " (range [0.3, 1])");
}

void criterion5() {
    double worst_int = 0.0;
    for (const ScenarioConfig& c : {gaussian(0.3, pi / 4.0, 1.0), gaussian(0.6, 2.0, 4.0, 0.02), gaussian(1.5, pi / 3.0, 0.5),
                                    modulated(1.0, pi / 2.0, 0.3, preset_L_max(1.5))}) {
        const Scenario s = resolve(c);
        const IncrementalSpectrum sp = closed_spectrum(s, scenario_grid(s, 4096).grid, RecoilSign::as_printed);
        worst_int = std::max(worst_int, std::abs(sp.integral(sp.total)));
    }

    // Large recoil: second-order support only around ±δp.
    const Scenario s = resolve(gaussian(1.5, pi / 3.0, 0.5));
    const UniformGrid g = scenario_grid(s, 4096).grid;
    const IncrementalSpectrum sp = closed_spectrum(s, g, RecoilSign::as_printed);
    const double peak = max_abs(sp.d2), sp_p = s.qew.sigma_p();
    double outside = 0.0;
    int lobes = 0;
    for (int n = 1; n + 1 < g.N; ++n) {
        const double x = g.offset(n);
        if (std::abs(x) > s.delta + 8.0 * sp_p || std::abs(x) < s.delta - 8.0 * sp_p)
            outside = std::max(outside, std::abs(sp.d2[n]));
        if (sp.d2[n] > sp.d2[n - 1] && sp.d2[n] >= sp.d2[n + 1] && sp.d2[n] > 1e-3 * peak) ++lobes;
    }
    const double support = outside / peak;

    // Parity of the first-order term at the waist: even for n = 1, odd for n = 2.
    double worst_parity = 0.0;
    for (int n : {1, 2})
        for (double ph : {0.0, 0.7, 2.0}) {
            ScenarioConfig c = modulated(1.0, pi / 2.0, ph, 0.0, 1.0 / n);
            c.interaction.harmonic_n = n;
            const Scenario m = resolve(c);
            const UniformGrid gm = scenario_grid(m, 4096).grid;
            const IncrementalSpectrum d = closed_spectrum(m, gm, RecoilSign::as_printed);
            const double sgn = n % 2 == 1 ? 1.0 : -1.0;
            const double top = max_abs(d.d1);
            for (int k = 0; k < gm.N; ++k)
                worst_parity = std::max(worst_parity, std::abs(d.d1[k] - sgn * d.d1[gm.N - 1 - k]) / top);
        }
    report(5, "spectrum structure",
           worst_int <= tol_integral && support <= tol_support && lobes == 2 && worst_parity <= tol_parity,
           "max |integral drho| " + num(worst_int) + ", second-order lobes " + std::to_string(lobes) +
               ", support outside +-dp " + num(support) + " of peak, parity defect " + num(worst_parity));
}

void criterion6() {
    // A long envelope keeps the bunching argument nearly fixed while ω_b moves by √2/(ω σ_t0).
    const double st = 10.0;
    const double Lmax = preset_L_max(1.5);
    ScenarioConfig on = modulated(st, pi / 2.0, 0.0, Lmax);
    on.interaction.zeta_mode = ZetaMode::explicit_value;
    on.interaction.zeta = 0.0;
    ScenarioConfig off = on;
    off.pinem->omega_b = omega * (1.0 - std::sqrt(2.0) / (omega * on.qew.sigma_t0));
    const Scenario s_on = resolve(on), s_off = resolve(off);
    const double ratio = closed_transition(s_off).first_order / closed_transition(s_on).first_order;
    const auto X = [&](const Scenario& s) {
        const double kappa = recoil_phase_rate(s.qew, omega);
        return 2.0 * s.mod->pinem.two_gL() * std::sin(0.5 * kappa * s.mod->delta_pL());
    };
    const double bessel_factor = bessel_j(1, X(s_off)) / bessel_j(1, X(s_on));
    const double dev = std::abs(ratio - std::exp(-1.0));

    ScenarioConfig scan = modulated(1.0, pi / 2.0, in_phase_phi(Lmax), Lmax);
    scan.interaction.transition_form = TransitionForm::full_sum;
    scan.numeric.enabled = true;
    scan.numeric.N = 2048;
    scan.scan = ScanConfig{ScanAxis::omega_b_ratio, 0.8, 1.2, 21};
    const std::vector<double> values = axis_values(scan.scan);
    std::vector<ScanPoint> pts(values.size());
    parallel_for(static_cast<int>(values.size()), threads(), [&](int i) { pts[i] = scan_point(scan, values[i]); });
    std::vector<double> closed, numeric;
    for (const auto& p : pts) {
        closed.push_back(p.dP2);
        numeric.push_back(p.dP2_numeric);
    }
    const double corr = correlation(closed, numeric);
    report(6, "resonance", dev <= tol_resonance && corr >= min_correlation,
           "detuned/resonant first order " + num(ratio) + " vs e^-1 (dev " + num(dev) + ", bunching factor " +
               num(bessel_factor) + " at sigma_t0=10T); numeric vs closed correlation " + num(corr) +
               " over 21 points, sigma_t0=T, N=2048");
}

void criterion7() {
    std::string detail;
    bool ok = true;
    for (const PresetRun& r : figure_runs("7")) {
        const Scenario s = resolve(r.config);
        const UniformGrid g = scenario_grid(s, r.config.numeric.N).grid;
        const NumericRun run = run_numeric(s, sampled_state(s, g));
        const TransitionTrace tt = transition_trace(run.trace);
        const double ratio = tt.mean_spacing / T21;
        ok = ok && tt.jump_times.size() >= 3 && std::abs(ratio - 1.0) <= tol_spacing;
        detail += (detail.empty() ? "" : "; ") + r.name + ": " + std::to_string(tt.jump_times.size()) +
                  " jumps, spacing " + num(ratio) + " T21";
    }
    report(7, "temporal jumps", ok, detail + " (limit +-" + num(tol_spacing) + ")");
}

void criterion8() {
    const BeamParams b = derive_beam(0.7);
    const TLSParams tls = make_tls(omega, 2e-9);
    double coupling = 0.0;
    for (double k : {omega / b.v0, 0.3 * omega / b.v0, 3.0 * omega / b.v0}) {
        const FieldSpectrum a = field_transform(k, tls.r_perp0, b), q = field_transform_quadrature(k, tls.r_perp0, b);
        coupling = std::max({coupling, std::abs(a.z - q.z) / std::abs(a.z), std::abs(a.perp - q.perp) / std::abs(a.perp)});
    }

    const GaussianQEW q0 = make_gaussian(b, 0.6 * T21, 0.0);
    const UniformGrid g = scenario_grid(resolve(gaussian(0.6, 1.0, 0.0)), 512).grid;
    const Dipole mu{cplx{0.3e-29, 0.1e-29}, cplx{1e-29, -0.2e-29}};
    const KernelMatrix kc = build_kernel(g, tls, b, mu, KernelMode::closed_form);
    const KernelMatrix kq = build_kernel(g, tls, b, mu, KernelMode::quadrature);
    double top = 0.0, kd = 0.0;
    for (size_t i = 0; i < kc.k21.size(); ++i) {
        top = std::max(top, std::abs(kc.k21[i]));
        kd = std::max({kd, std::abs(kc.k21[i] - kq.k21[i]), std::abs(kc.k12[i] - kq.k12[i])});
    }
    const double kernel = kd / top;

    double marginal = 0.0;
    for (double L : {0.0, 2.0 * rayleigh_length(q0)}) {
        const GaussianQEW q = make_gaussian(b, T21, L);
        const GridWavefunction w = momentum_amplitudes(q, make_grid(b.p0, 2.0 * recoil_momentum(omega, b) + 10.0 * q.sigma_p(), 2048));
        const WignerMap m = wigner_pure(w);
        const std::vector<double> rho = density(w), mp = m.momentum_marginal(), mz = m.position_marginal();
        const double rtop = max_abs(rho);
        for (int n = 0; n < w.grid.N; ++n) marginal = std::max(marginal, std::abs(mp[n] - rho[n]) / rtop);
        const PositionProfile p = position_profile(w);
        double ztop = 0.0;
        for (const auto& v : p.psi) ztop = std::max(ztop, std::norm(v));
        const int M = static_cast<int>(mz.size());
        for (int c = 0; c < M; ++c)
            marginal = std::max(marginal, std::abs(mz[c] - std::norm(p.psi[c - M / 2 + w.grid.N / 2])) / ztop);
    }

    const double zT = talbot_length(b, omega);
    const PinemParams pin = make_pinem(1.5, 0.0, omega);
    double talbot = 0.0;
    for (int m = 1; m <= 4; ++m)
        for (double L : {0.0, 0.004, 0.0123, 0.03, 0.2})
            talbot = std::max(talbot, std::abs(bunching_coefficient(pin, m, L + zT / m, zT) - bunching_coefficient(pin, m, L, zT)));

    report(8, "oracle suites", coupling <= tol_oracle && kernel <= tol_oracle && marginal <= tol_marginal && talbot <= tol_talbot,
           "coupling quadrature " + num(coupling) + ", kernel quadrature " + num(kernel) + ", Wigner marginals " +
               num(marginal) + ", Talbot periodicity " + num(talbot));
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    std::printf("%d of 8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}
