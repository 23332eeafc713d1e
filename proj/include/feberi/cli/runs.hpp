#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "feberi/analytic.hpp"
#include "feberi/cli/config.hpp"
#include "feberi/cli/output.hpp"
#include "feberi/modulation.hpp"
#include "feberi/numeric.hpp"
#include "feberi/phase_space.hpp"

namespace feberi::cli {

namespace fs = std::filesystem;

struct GateFailure : NumericError {
    using NumericError::NumericError;
};

struct RunOptions {
    fs::path out = "out";
    int threads = 1;
    bool no_gate = false;
};

// Every module-level object a run needs, resolved once from the config.
struct Scenario {
    ScenarioConfig cfg;
    BeamParams beam;
    TLSParams tls;
    CouplingSpec coupling;
    TLSQubit qubit;
    GaussianQEW qew;
    std::optional<ModulatedQEW> mod;
    InteractionConfig icfg;
    double delta = 0.0;

    bool modulated() const { return mod.has_value(); }
    double T21() const { return tls.period(); }
    double zeta() const {
        return mod ? resolve_zeta_modulated(icfg, qubit, qew.t_D(), mod->pinem.phi0)
                   : resolve_zeta_gaussian(icfg, qubit, qew.t_D());
    }
};

inline Scenario resolve(const ScenarioConfig& c) {
    validate(c);
    Scenario s;
    s.cfg = c;
    s.beam = derive_beam(c.beam.beta);
    s.tls = make_tls(c.tls.omega21, c.tls.r_perp0, c.tls.dipole);
    s.coupling = resolve_coupling(CouplingSpec{c.coupling.mode, c.coupling.g_abs, c.coupling.phi_g}, s.tls, s.beam);
    s.qubit = make_qubit(c.tls.theta, c.tls.phi);
    s.qew = make_gaussian(s.beam, c.qew.sigma_t0, c.qew.L_D);
    if (c.pinem) s.mod = make_modulated(s.qew, make_pinem(c.pinem->two_gL, c.pinem->phi0, c.pinem->omega_b));
    s.icfg.g = s.coupling.g();
    s.icfg.omega21 = c.tls.omega21;
    s.icfg.n = c.interaction.harmonic_n;
    s.icfg.recoil_sign = c.interaction.recoil_sign;
    if (c.interaction.zeta_mode == ZetaMode::explicit_value) s.icfg.zeta = c.interaction.zeta;
    s.icfg.gamma_b = c.interaction.gamma_b;
    s.delta = recoil_momentum(c.tls.omega21, s.beam);
    return s;
}

inline MomentumGrid scenario_grid(const Scenario& s, int N) {
    const double sp = s.qew.sigma_p();
    const double P = s.mod ? default_cutoff_modulated(s.mod->m_max(), s.mod->delta_pL(), s.delta, sp)
                           : default_cutoff_gaussian(s.delta, sp);
    return build_grid(P * s.cfg.numeric.P_cutoff_factor, N, s.beam, s.tls.omega21, sp);
}

inline GridWavefunction sampled_state(const Scenario& s, const UniformGrid& g) {
    return s.mod ? drift_modulated(*s.mod, g) : momentum_amplitudes(s.qew, g);
}

inline IncrementalSpectrum closed_spectrum(const Scenario& s, const UniformGrid& g, RecoilSign sign) {
    InteractionConfig c = s.icfg;
    c.recoil_sign = sign;
    return s.mod ? spectrum_modulated_closed(*s.mod, s.qubit, c, g) : spectrum_gaussian_closed(s.qew, s.qubit, c, g);
}

inline TransitionResult closed_transition(const Scenario& s) {
    return s.mod ? transition_modulated(*s.mod, s.qubit, s.icfg, s.cfg.interaction.transition_form)
                 : transition_gaussian(s.qew, s.qubit, s.icfg);
}

// The closed spectrum and the transition use the same harmonic only in these cases.
inline bool balance_is_exact(const Scenario& s) {
    return !s.mod || s.cfg.interaction.transition_form == TransitionForm::single_harmonic;
}

inline json derived_scales(const Scenario& s) {
    const DecayFactors d = decay_factors(s.qew, s.tls.omega21);
    json j;
    j["gamma"] = s.beam.gamma;
    j["v0_m_per_s"] = s.beam.v0;
    j["p0_kg_m_per_s"] = s.beam.p0;
    j["kinetic_energy_keV"] = s.beam.kinetic_energy_keV();
    j["E21_eV"] = s.tls.E21_eV();
    j["T21_s"] = s.T21();
    j["delta_p21_kg_m_per_s"] = s.delta;
    j["sigma_p_kg_m_per_s"] = s.qew.sigma_p();
    j["sigma_E_eV"] = joule_to_eV(s.qew.sigma_E());
    j["sigma_t_s"] = broadened_sigma_t(s.qew);
    j["rayleigh_length_m"] = rayleigh_length(s.qew);
    j["z_G_m"] = z_gauss_limit(s.beam, s.tls.omega21);
    j["Gamma"] = d.Gamma;
    j["Gamma0"] = d.Gamma0;
    j["Gamma_D"] = d.Gamma_D;
    j["zeta_rad"] = s.zeta();
    j["g_abs"] = s.coupling.g_abs;
    j["phi_g_rad"] = s.coupling.phi_g;
    j["large_recoil"] = large_recoil(s.qew, s.tls.omega21);
    j["short_wavepacket"] = short_wavepacket(s.qew, s.tls.omega21);
    j["regime"] = to_string(regime_classify(s.qew, s.tls));
    if (s.mod) {
        const double zT = s.mod->talbot();
        const BunchingOptimum opt = optimal_bunching_length(s.mod->pinem, 1, zT);
        j["delta_pL_kg_m_per_s"] = s.mod->delta_pL();
        j["z_T_m"] = zT;
        j["m_max"] = s.mod->m_max();
        j["talbot_phase_rad"] = talbot_phase(*s.mod);
        j["b1_at_L_D"] = bunching_coefficient(s.mod->pinem, 1, s.qew.L_D, zT);
        j["L_D_max_b1_m"] = opt.L_D;
        j["b1_max"] = opt.b_max;
        j["b1_sub_saturated"] = opt.sub_saturated;
    }
    return j;
}

namespace detail {

struct GateBook {
    std::vector<std::string> failed;

    void gate(Manifest& m, const std::string& name, double value, double limit) {
        if (!m.gate(name, value, limit)) failed.push_back(name);
    }
    // Recorded for information; never aborts a run.
    static void check(Manifest& m, const std::string& name, double value, double limit) {
        m.gate(name, value, limit);
        m.doc["validation"][name]["gated"] = false;
    }
    void finish(Manifest& m, const RunOptions& opt) const {
        m.doc["validation"]["gates_failed"] = failed;
        m.doc["validation"]["gates_enforced"] = !opt.no_gate;
        m.write();
        if (!failed.empty() && !opt.no_gate) {
            std::string names;
            for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
            throw GateFailure("validation gate failed: " + names + " (see " + (m.dir / "manifest.json").string() + ")");
        }
    }
};

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double linf_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    const double top = max_abs(b);
    return top > 0.0 ? d / top : d;
}

inline std::vector<std::pair<std::string, std::string>> run_meta(const Scenario& s) {
    return {{"label", s.cfg.meta.label},
            {"pipeline", s.modulated() ? "modulated" : "gaussian"},
            {"recoil_sign", detail::name_of(s.cfg.interaction.recoil_sign, detail::recoil_names)}};
}

inline double relative_balance(double residual_eV, const Scenario& s) { return std::abs(residual_eV) / s.tls.E21_eV(); }

}  // namespace detail

struct NumericRun {
    EvolutionTrace trace;
    NumericSpectrum spectrum;
    double delta_P2 = 0.0;
    double norm_drift = 0.0;
    double energy_rel = 0.0;
    double seconds = 0.0;
};

// Residual of E21·ΔP2 against the electron energy change, relative to E21 times the larger of |ΔP2|
// and the redistributed probability ½∫|Δρ|dp (ΔP2 itself vanishes at some Bloch angles).
inline double numeric_energy_rel(const NumericSpectrum& sp, double delta_P2, double E21) {
    double moved = 0.0;
    for (double v : sp.delta) moved += std::abs(v);
    moved *= 0.5 * sp.grid.dp;
    const double scale = E21 * std::max({std::abs(delta_P2), moved, 1e-300});
    return std::abs(E21 * delta_P2 - sp.energy_change()) / scale;
}

inline Dipole scenario_dipole(const Scenario& s) { return resolved_dipole(s.coupling, s.tls, s.beam); }

inline NumericRun run_numeric(const Scenario& s, const GridWavefunction& w) {
    const auto t0 = std::chrono::steady_clock::now();
    const PassageSetup ps = setup_passage(w, s.qubit, s.tls, scenario_dipole(s), s.cfg.numeric.kernel);
    SolverOptions opt;
    opt.method = s.cfg.numeric.method;
    opt.dt = s.cfg.numeric.dt_factor * s.T21() / 200.0;
    opt.record_every = s.cfg.numeric.record_every;
    opt.check_norm = false;
    NumericRun r;
    r.trace = evolve(ps.initial, ps.kernel, s.beam, s.tls.omega21, ps.t0, ps.t1, opt);
    r.spectrum = final_spectrum(r.trace, w);
    r.delta_P2 = r.trace.P2.back() - r.trace.P2.front();
    r.norm_drift = std::abs(r.trace.norm.back() - r.trace.norm.front());
    r.energy_rel = numeric_energy_rel(r.spectrum, r.delta_P2, s.tls.E21());
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline void apply_axis(ScenarioConfig& c, ScanAxis axis, double v) {
    switch (axis) {
        case ScanAxis::theta: c.tls.theta = v; break;
        case ScanAxis::phi: c.tls.phi = v; break;
        case ScanAxis::L_D: c.qew.L_D = v; break;
        case ScanAxis::omega_b_ratio:
            if (!c.pinem) throw ConfigError("scan.axis: omega_b_ratio requires a pinem block");
            c.pinem->omega_b = v * c.tls.omega21;
            break;
    }
}

inline std::vector<double> axis_values(const ScanConfig& sc) {
    std::vector<double> v(sc.steps);
    for (int i = 0; i < sc.steps; ++i)
        v[i] = sc.steps == 1 ? sc.start : sc.start + (sc.stop - sc.start) * i / (sc.steps - 1);
    return v;
}

inline std::vector<std::string> spectrum_columns() {
    return {"p_index", "p_si", "energy_minus_E0_eV", "rho_initial", "drho0", "drho1", "drho2", "drho_total"};
}

inline json run_spectrum(const ScenarioConfig& c, const RunOptions& opt) {
    const Scenario s = resolve(c);
    Manifest m(opt.out, "spectrum", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s);
    const MomentumGrid mg = scenario_grid(s, c.numeric.N);
    for (const auto& w : mg.warnings) m.warn(w);
    const UniformGrid& g = mg.grid;
    m.doc["derived"]["grid"] = {{"N", g.N}, {"dp", g.dp}, {"P_cutoff", mg.P_cutoff}};

    const IncrementalSpectrum sp = closed_spectrum(s, g, c.interaction.recoil_sign);
    const TransitionResult tr = closed_transition(s);
    const double res = energy_balance(sp, tr, s.tls.E21(), c.interaction.recoil_sign);
    m.doc["derived"]["delta_P2"] = tr.delta_P2;
    m.doc["derived"]["delta_P2_first_order"] = tr.first_order;
    m.doc["derived"]["delta_P2_second_order"] = tr.second_order;
    m.doc["validation"]["integral_drho"] = sp.integral(sp.total);
    if (balance_is_exact(s))
        gates.gate(m, "closed_energy_residual_rel", detail::relative_balance(res, s), c.gates.energy_rel_tol_closed);
    else
        detail::GateBook::check(m, "closed_energy_residual_rel", detail::relative_balance(res, s), c.gates.energy_rel_tol_closed);

    const GridWavefunction w = sampled_state(s, g);
    try {
        const ScatterResult gen = scatter_generic(w, s.qubit, s.icfg);
        detail::GateBook::check(m, "sampled_vs_closed_linf_rel", detail::linf_rel(gen.spectrum.total, sp.total), 1e-6);
    } catch (const NumericError& e) {
        m.warn(std::string("sampled cross-check skipped: ") + e.what());
    }

    std::optional<NumericRun> num;
    if (c.numeric.enabled) {
        num = run_numeric(s, w);
        // The solver follows the as_printed pairing; a flipped run is compared with its mirror.
        const IncrementalSpectrum ref = closed_spectrum(s, g, RecoilSign::as_printed);
        gates.gate(m, "numeric_norm_drift", num->norm_drift, c.gates.norm_tol);
        gates.gate(m, "numeric_energy_residual_rel", num->energy_rel, c.gates.energy_rel_tol_numeric);
        gates.gate(m, "numeric_linf_rel", detail::linf_rel(num->spectrum.delta, ref.total), c.gates.numeric_linf_rel_tol);
        m.doc["derived"]["delta_P2_numeric"] = num->delta_P2;
        m.doc["derived"]["numeric_seconds"] = num->seconds;
    }

    std::vector<std::string> cols = spectrum_columns();
    if (num) {
        cols.push_back("rho_numeric");
        cols.push_back("drho_numeric");
    }
    CsvWriter csv(m.output("spectrum.csv"), "spectrum", cols, detail::run_meta(s));
    for (int n = 0; n < g.N; ++n) {
        std::vector<double> row{double(n), g.p(n), joule_to_eV(energy_offset(s.beam, g.offset(n))), sp.rho_initial[n],
                                sp.d0[n], sp.d1[n], sp.d2[n], sp.total[n]};
        if (num) {
            row.push_back(num->spectrum.rho_final[n]);
            row.push_back(num->spectrum.delta[n]);
        }
        csv.row(row);
    }
    gates.finish(m, opt);
    return m.doc;
}

struct ScanPoint {
    double value = 0.0, dP2 = 0.0, electron_eV = 0.0, tls_eV = 0.0, residual_eV = 0.0;
    double dP2_sampled = std::numeric_limits<double>::quiet_NaN();
    double dP2_numeric = std::numeric_limits<double>::quiet_NaN();
    double norm_drift = 0.0, numeric_energy_rel = 0.0;
    bool exact = true;
    std::string warning;
};

inline ScanPoint scan_point(const ScenarioConfig& base, double v) {
    ScenarioConfig c = base;
    apply_axis(c, base.scan.axis, v);
    const Scenario s = resolve(c);
    ScanPoint p;
    p.value = v;
    p.exact = balance_is_exact(s);
    const UniformGrid g = scenario_grid(s, c.numeric.N).grid;
    const IncrementalSpectrum sp = closed_spectrum(s, g, c.interaction.recoil_sign);
    const TransitionResult tr = closed_transition(s);
    p.dP2 = tr.delta_P2;
    p.electron_eV = joule_to_eV(sp.energy_moment(sp.total));
    p.tls_eV = s.tls.E21_eV() * tr.delta_P2;
    p.residual_eV = energy_balance(sp, tr, s.tls.E21(), c.interaction.recoil_sign);
    std::optional<GridWavefunction> w;
    try {
        w = sampled_state(s, g);
        p.dP2_sampled = scatter_generic(*w, s.qubit, s.icfg).transition.delta_P2;
    } catch (const NumericError& e) {
        p.warning = "value " + fmt(v) + ": sampled cross-check skipped: " + e.what();
    }
    if (c.numeric.enabled) {
        if (!w) throw ResolutionError("numeric scan point " + fmt(v) + " cannot be sampled on the grid");
        const NumericRun r = run_numeric(s, *w);
        p.dP2_numeric = r.delta_P2;
        p.norm_drift = r.norm_drift;
        p.numeric_energy_rel = r.energy_rel;
    }
    return p;
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

inline json run_scan(const ScenarioConfig& c, const RunOptions& opt) {
    if (c.scan.axis == ScanAxis::omega_b_ratio && !c.pinem)
        throw ConfigError("scan.axis: omega_b_ratio requires a pinem block");
    const Scenario s0 = resolve(c);
    Manifest m(opt.out, "scan", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s0);
    const std::vector<double> values = axis_values(c.scan);
    std::vector<ScanPoint> pts(values.size());
    parallel_for(static_cast<int>(values.size()), opt.threads, [&](int i) { pts[i] = scan_point(c, values[i]); });

    double worst = 0.0, worst_norm = 0.0, worst_num = 0.0;
    bool exact = true;
    std::vector<double> closed, numeric;
    for (const auto& p : pts) {
        if (!p.warning.empty()) m.warn(p.warning);
        worst = std::max(worst, detail::relative_balance(p.residual_eV, s0));
        exact = exact && p.exact;
        worst_norm = std::max(worst_norm, p.norm_drift);
        worst_num = std::max(worst_num, p.numeric_energy_rel);
        closed.push_back(p.dP2);
        numeric.push_back(p.dP2_numeric);
    }
    if (exact)
        gates.gate(m, "closed_energy_residual_rel", worst, c.gates.energy_rel_tol_closed);
    else
        detail::GateBook::check(m, "closed_energy_residual_rel", worst, c.gates.energy_rel_tol_closed);
    if (c.numeric.enabled) {
        gates.gate(m, "numeric_norm_drift", worst_norm, c.gates.norm_tol);
        gates.gate(m, "numeric_energy_residual_rel", worst_num, c.gates.energy_rel_tol_numeric);
        m.doc["validation"]["numeric_vs_closed_correlation"] = correlation(numeric, closed);
    }

    std::vector<std::string> cols{"value", "delta_P2", "electron_energy_eV", "tls_energy_eV", "balance_residual_eV",
                                  "delta_P2_sampled"};
    if (c.numeric.enabled) cols.push_back("delta_P2_numeric");
    auto meta = detail::run_meta(s0);
    meta.push_back({"axis", to_string(c.scan.axis)});
    CsvWriter csv(m.output("scan.csv"), "scan", cols, meta);
    for (const auto& p : pts) {
        std::vector<double> row{p.value, p.dP2, p.electron_eV, p.tls_eV, p.residual_eV, p.dP2_sampled};
        if (c.numeric.enabled) row.push_back(p.dP2_numeric);
        csv.row(row);
    }
    gates.finish(m, opt);
    return m.doc;
}

// Closed-form spectra along the scan axis in long format, one frame per axis value.
inline json run_frames(const ScenarioConfig& c, const RunOptions& opt) {
    const Scenario s0 = resolve(c);
    Manifest m(opt.out, "frames", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s0);
    const std::vector<double> values = axis_values(c.scan);
    std::vector<IncrementalSpectrum> spectra(values.size());
    std::vector<double> residual(values.size());
    std::vector<int> exact(values.size());
    parallel_for(static_cast<int>(values.size()), opt.threads, [&](int i) {
        ScenarioConfig ci = c;
        apply_axis(ci, c.scan.axis, values[i]);
        const Scenario s = resolve(ci);
        spectra[i] = closed_spectrum(s, scenario_grid(s, c.numeric.N).grid, c.interaction.recoil_sign);
        residual[i] = detail::relative_balance(
            energy_balance(spectra[i], closed_transition(s), s.tls.E21(), c.interaction.recoil_sign), s);
        exact[i] = balance_is_exact(s);
    });
    const double worst = detail::max_abs(residual);
    if (std::all_of(exact.begin(), exact.end(), [](int e) { return e != 0; }))
        gates.gate(m, "closed_energy_residual_rel", worst, c.gates.energy_rel_tol_closed);
    else
        detail::GateBook::check(m, "closed_energy_residual_rel", worst, c.gates.energy_rel_tol_closed);
    auto meta = detail::run_meta(s0);
    meta.push_back({"axis", to_string(c.scan.axis)});
    CsvWriter csv(m.output("frames.csv"), "frames",
                  {"frame", "value", "p_index", "energy_minus_E0_eV", "drho0", "drho1", "drho2", "drho_total"}, meta);
    for (size_t f = 0; f < values.size(); ++f) {
        const IncrementalSpectrum& sp = spectra[f];
        for (int n = 0; n < sp.grid.N; ++n)
            csv.row({double(f), values[f], double(n), joule_to_eV(energy_offset(sp.beam, sp.grid.offset(n))), sp.d0[n],
                     sp.d1[n], sp.d2[n], sp.total[n]});
    }
    gates.finish(m, opt);
    return m.doc;
}

inline json run_bunching(const ScenarioConfig& c, const RunOptions& opt) {
    if (!c.pinem) throw ConfigError("pinem: the bunching command requires a pinem block");
    const Scenario s = resolve(c);
    Manifest m(opt.out, "bunching", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s);
    const double zT = s.mod->talbot();
    const double L0 = c.bunching.L_start, L1 = c.bunching.L_stop.value_or(zT);
    if (!(L1 > L0)) throw ConfigError("bunching.L_D_stop_m: must exceed bunching.L_D_start_m");
    const int H = c.bunching.harmonics, K = c.bunching.steps;
    const double step = (L1 - L0) / (K - 1);

    std::vector<std::string> cols{"L_D_m"};
    for (int h = 1; h <= H; ++h) cols.push_back("b_" + std::to_string(h));
    CsvWriter csv(m.output("bunching.csv"), "bunching", cols, detail::run_meta(s));
    std::vector<std::vector<double>> b(H, std::vector<double>(K));
    for (int k = 0; k < K; ++k) {
        const double L = L0 + step * k;
        std::vector<double> row{L};
        for (int h = 1; h <= H; ++h) {
            b[h - 1][k] = bunching_coefficient(s.mod->pinem, h, L, zT);
            row.push_back(b[h - 1][k]);
        }
        csv.row(row);
    }
    json optima = json::array();
    for (int h = 1; h <= H; ++h) {
        const BunchingOptimum o = optimal_bunching_length(s.mod->pinem, h, zT);
        // The first maximum lies on the rising lobe L < z_T/(4m); later lobes repeat it.
        const double lobe = zT / (4.0 * h);
        int k_end = K;
        while (k_end > 1 && L0 + step * (k_end - 1) > lobe + 0.5 * step) --k_end;
        const auto it = std::max_element(b[h - 1].begin(), b[h - 1].begin() + k_end);
        const double L_arg = L0 + step * (it - b[h - 1].begin());
        json e{{"m", h}, {"L_D_opt_m", o.L_D}, {"b_max", o.b_max}, {"sub_saturated", o.sub_saturated},
               {"argmax_L_D_m", L_arg}, {"argmax_b", *it}};
        if (o.L_D >= L0 && o.L_D <= L1)
            detail::GateBook::check(m, "b" + std::to_string(h) + "_argmax_offset_steps", std::abs(L_arg - o.L_D) / step, 1.0);
        optima.push_back(e);
    }
    m.doc["derived"]["bunching_optima"] = optima;

    std::vector<double> marks = c.bunching.marks;
    if (marks.empty()) marks = {L0, optimal_bunching_length(s.mod->pinem, 1, zT).L_D};
    double half = 0.0;
    if (c.bunching.profile_half_width) {
        half = *c.bunching.profile_half_width;
    } else {
        for (double L : marks) {
            const GaussianQEW q = make_gaussian(s.beam, c.qew.sigma_t0, L);
            const double walk = s.mod->m_max() * s.mod->delta_pL() * q.t_D() / s.beam.dispersion_mass() / s.beam.v0;
            half = std::max(half, 4.0 * broadened_sigma_t(q) + walk);
        }
    }
    const int P = c.bunching.profile_points;
    std::vector<double> tau(P), zeta(P);
    for (int j = 0; j < P; ++j) {
        tau[j] = -half + 2.0 * half * j / (P - 1);
        zeta[j] = tau[j] * s.beam.v0;
    }
    auto meta = detail::run_meta(s);
    meta.push_back({"density_model", detail::name_of(c.bunching.model, detail::density_names)});
    CsvWriter prof(m.output("profiles.csv"), "density_profiles", {"mark", "L_D_m", "tau_s", "zeta_m", "rho_per_m"}, meta);
    std::vector<std::vector<double>> rho(marks.size());
    parallel_for(static_cast<int>(marks.size()), opt.threads, [&](int i) {
        const ModulatedQEW mq{make_gaussian(s.beam, c.qew.sigma_t0, marks[i]), s.mod->pinem};
        rho[i] = density_profile(mq, zeta, c.bunching.model);
    });
    for (size_t i = 0; i < marks.size(); ++i)
        for (int j = 0; j < P; ++j) prof.row({double(i), marks[i], tau[j], zeta[j], rho[i][j]});
    gates.finish(m, opt);
    return m.doc;
}

inline json run_evolve(const ScenarioConfig& c, const RunOptions& opt) {
    const Scenario s = resolve(c);
    Manifest m(opt.out, "evolve", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s);
    const MomentumGrid mg = scenario_grid(s, c.numeric.N);
    for (const auto& w : mg.warnings) m.warn(w);
    const UniformGrid& g = mg.grid;
    const GridWavefunction w = sampled_state(s, g);
    const NumericRun r = run_numeric(s, w);
    const TransitionTrace tt = transition_trace(r.trace);
    gates.gate(m, "numeric_norm_drift", r.norm_drift, c.gates.norm_tol);
    gates.gate(m, "numeric_energy_residual_rel", r.energy_rel, c.gates.energy_rel_tol_numeric);

    const TransitionResult tr = closed_transition(s);
    m.doc["derived"]["delta_P2_numeric"] = r.delta_P2;
    m.doc["derived"]["delta_P2_closed"] = tr.delta_P2;
    m.doc["derived"]["numeric_seconds"] = r.seconds;
    m.doc["derived"]["jump_times_s"] = tt.jump_times;
    m.doc["derived"]["jump_mean_spacing_s"] = tt.mean_spacing;
    m.doc["derived"]["jump_spacing_over_T21"] = tt.mean_spacing / s.T21();
    const double scale = std::max(std::abs(tr.delta_P2), 1e-300);
    detail::GateBook::check(m, "numeric_vs_closed_delta_P2_rel", std::abs(r.delta_P2 - tr.delta_P2) / scale,
                            c.gates.numeric_linf_rel_tol);

    // Arrival density at the TLS: the solver places the centroid at z = 0 for t = 0, so ζ = −v0 t.
    const PositionProfile pp = position_profile(w);
    auto arrival = [&](double t) {
        const double x = (-s.beam.v0 * t - pp.zeta.front()) / pp.dz;
        const int j = static_cast<int>(std::floor(x));
        if (j < 0 || j + 1 >= static_cast<int>(pp.zeta.size())) return 0.0;
        const double f = x - j;
        return s.beam.v0 * ((1.0 - f) * std::norm(pp.psi[j]) + f * std::norm(pp.psi[j + 1]));
    };
    CsvWriter csv(m.output("trace.csv"), "trace",
                  {"t_s", "P2", "delta_P2", "norm", "dP2_dt", "jump", "arrival_density_per_s"}, detail::run_meta(s));
    size_t jn = 0;
    for (size_t i = 0; i < tt.times.size(); ++i) {
        bool jump = false;
        if (jn < tt.jump_times.size() && tt.jump_times[jn] == tt.times[i]) {
            jump = true;
            ++jn;
        }
        csv.row({tt.times[i], tt.P2[i], tt.P2[i] - tt.P2.front(), r.trace.norm[i], tt.rate[i], jump ? 1.0 : 0.0,
                 arrival(tt.times[i])});
    }
    const IncrementalSpectrum ref = closed_spectrum(s, g, RecoilSign::as_printed);
    CsvWriter fin(m.output("final_spectrum.csv"), "final_spectrum",
                  {"p_index", "p_si", "energy_minus_E0_eV", "rho_initial", "rho_final", "drho_numeric", "drho_closed"},
                  detail::run_meta(s));
    for (int n = 0; n < g.N; ++n)
        fin.row({double(n), g.p(n), joule_to_eV(energy_offset(s.beam, g.offset(n))), r.spectrum.rho_initial[n],
                 r.spectrum.rho_final[n], r.spectrum.delta[n], ref.total[n]});
    gates.finish(m, opt);
    return m.doc;
}

inline void write_map(CsvWriter& csv, const WignerMap& w, const Eigen::MatrixXd& v) {
    std::vector<double> row(v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        for (Eigen::Index k = 0; k < v.cols(); ++k) row[k] = v(r, k);
        csv.row(fmt(w.energy_axis[r]), row);
    }
}

inline json run_wigner(const ScenarioConfig& c, const RunOptions& opt) {
    const Scenario s = resolve(c);
    Manifest m(opt.out, "wigner", to_json(c));
    detail::GateBook gates;
    m.doc["derived"] = derived_scales(s);
    const UniformGrid g = scenario_grid(s, c.wigner.N).grid;
    const GridWavefunction w = sampled_state(s, g);
    const PostInteraction post = post_interaction_amplitudes(w, s.qubit, s.icfg);
    const WignerMap before = wigner_pure(w, c.wigner.M);
    const WignerMap after = wigner_components({post.level1, post.level2}, c.wigner.M);
    const WignerMap inc = wigner_difference(after, before);
    m.doc["derived"]["wigner"] = {{"rows", before.values.rows()},
                                  {"cols", before.values.cols()},
                                  {"phase_space_area_over_hbar", before.phase_space_area() / constants.hbar},
                                  {"min_before", before.min_value()},
                                  {"total_before", before.total()},
                                  {"total_after", after.total()}};
    gates.gate(m, "wigner_norm_before", std::abs(before.total() - 1.0), c.gates.norm_tol);
    gates.gate(m, "wigner_norm_after", std::abs(after.total() - 1.0), c.gates.norm_tol);

    const IncrementalSpectrum sp = closed_spectrum(s, g, RecoilSign::as_printed);
    const std::vector<double> mb = before.momentum_marginal(), ma = after.momentum_marginal(), mi = inc.momentum_marginal();
    detail::GateBook::check(m, "marginal_vs_closed_linf_rel", detail::linf_rel(mi, sp.total), 1e-6);

    std::vector<std::string> cols{"energy_eV"};
    for (double t : before.time_axis) cols.push_back(fmt(t));
    auto meta = detail::run_meta(s);
    meta.push_back({"layout", "rows energy_eV, columns tau_s, values per (m kg m/s)"});
    for (const auto& [name, map] : {std::pair<std::string, const WignerMap*>{"wigner_before.csv", &before},
                                    {"wigner_after.csv", &after}, {"wigner_incremental.csv", &inc}}) {
        CsvWriter csv(m.output(name), "wigner", cols, meta);
        write_map(csv, *map, map->values);
    }
    CsvWriter marg(m.output("marginals.csv"), "wigner_marginals",
                   {"p_index", "energy_eV", "before", "after", "incremental", "drho_closed"}, detail::run_meta(s));
    for (int n = 0; n < g.N; ++n) marg.row({double(n), before.energy_axis[n], mb[n], ma[n], mi[n], sp.total[n]});
    gates.finish(m, opt);
    return m.doc;
}

// Figure presets.

struct PresetRun {
    std::string name;
    std::string command;  // spectrum, scan, frames, bunching, evolve, wigner
    ScenarioConfig config;
};

inline constexpr double preset_omega = 3e15;

inline ScenarioConfig base_preset(const std::string& label, double sigma_over_T) {
    ScenarioConfig c;
    c.beam.beta = 0.7;
    c.tls.omega21 = preset_omega;
    c.tls.r_perp0 = 2e-9;
    c.coupling.g_abs = 1.1e-3;
    c.qew.sigma_t0 = sigma_over_T * 2.0 * pi / preset_omega;
    c.meta.label = label;
    return c;
}

inline ScenarioConfig modulated_preset(const std::string& label, double sigma_over_T, double two_gL) {
    ScenarioConfig c = base_preset(label, sigma_over_T);
    c.pinem = PinemConfig{two_gL, 0.0, preset_omega};
    return c;
}

inline double preset_L_max(double two_gL) {
    const BeamParams b = derive_beam(0.7);
    return optimal_bunching_length(make_pinem(two_gL, 0.0, preset_omega), 1, talbot_length(b, preset_omega)).L_D;
}

// Azimuth that puts the sub-bunch train in phase with the dipole: ζ = 0.
inline double in_phase_phi(double L_D) {
    const double tD = L_D / derive_beam(0.7).v0;
    return std::fmod(preset_omega * tD, 2.0 * pi);
}

inline std::string angle_tag(const std::string& axis, int k) { return axis + "_" + std::to_string(k); }

inline const std::vector<std::string>& figure_ids() {
    static const std::vector<std::string> ids{"2a", "2b", "2c", "2d", "2e", "3",  "4",  "5a", "5b", "5c",
                                              "5d", "5e", "5f", "6",  "7",  "S1", "S2", "S3", "S4"};
    return ids;
}

inline std::vector<PresetRun> figure_runs(const std::string& id, bool numeric = false) {
    std::vector<PresetRun> runs;
    const double T = 2.0 * pi / preset_omega;
    auto add = [&](const std::string& name, const std::string& cmd, ScenarioConfig c) {
        if (numeric && (cmd == "spectrum" || cmd == "scan")) c.numeric.enabled = true;
        runs.push_back({name, cmd, c});
    };
    auto scan = [](ScenarioConfig& c, ScanAxis a, double start, double stop, int steps) {
        c.scan = ScanConfig{a, start, stop, steps};
    };
    const double Lmax = preset_L_max(1.5);

    if (id == "2a") {
        for (int k = 0; k < 8; ++k) {
            ScenarioConfig c = base_preset("fig2a", 0.3);
            c.tls.theta = pi / 4.0;
            c.tls.phi = k * pi / 4.0;
            c.meta.inferred = {"tls.phi_rad"};
            add(angle_tag("phi", k), "spectrum", c);
        }
    } else if (id == "2b") {
        ScenarioConfig c = base_preset("fig2b", 0.3);
        c.tls.phi = pi / 2.0;
        c.meta.inferred = {"tls.phi_rad"};
        scan(c, ScanAxis::theta, 0.0, pi, 37);
        add("theta_scan", "scan", c);
    } else if (id == "2c") {
        ScenarioConfig c = base_preset("fig2c", 0.3);
        c.tls.theta = pi / 2.0;
        c.meta.inferred = {"tls.theta_rad"};
        scan(c, ScanAxis::phi, 0.0, 2.0 * pi, 73);
        add("phi_scan", "scan", c);
    } else if (id == "2d") {
        for (int k = 0; k <= 4; ++k) {
            ScenarioConfig c = base_preset("fig2d", 1.0);
            c.tls.theta = k * pi / 4.0;
            c.meta.inferred = {"tls.theta_rad", "tls.phi_rad"};
            add(angle_tag("theta", k), "spectrum", c);
        }
    } else if (id == "2e") {
        int k = 0;
        for (double th : {pi / 4.0, pi / 2.0})
            for (double ph : {0.0, pi / 2.0}) {
                ScenarioConfig c = base_preset("fig2e", 0.6);
                c.tls.theta = th;
                c.tls.phi = ph;
                c.numeric.enabled = true;
                c.meta.inferred = {"tls.theta_rad", "tls.phi_rad"};
                add(angle_tag("case", k++), "spectrum", c);
            }
    } else if (id == "3") {
        const BeamParams b = derive_beam(0.7);
        const double zR = rayleigh_length(make_gaussian(b, 0.1 * T, 0.0));
        const std::vector<std::tuple<std::string, double, double>> rows{
            {"A_large_recoil", 1.0, 0.0}, {"B_short", 0.3, 0.0}, {"C_chirped", 0.1, 5.5 * zR}};
        for (const auto& [name, st, L] : rows) {
            ScenarioConfig c = base_preset("fig3", st);
            c.qew.L_D = L;
            c.tls.theta = pi / 2.0;
            c.tls.phi = pi / 2.0;
            c.wigner.N = 1024;
            c.meta.inferred = {"qew.sigma_t0_s", "qew.L_D_m"};
            add(name, "wigner", c);
        }
    } else if (id == "4" || id == "S4") {
        const BeamParams b = derive_beam(0.7);
        const double zT = talbot_length(b, preset_omega);
        ScenarioConfig c = modulated_preset(id == "4" ? "fig4" : "movieS4", 2.0, implied_two_gL(0.015, 1, zT));
        c.bunching.L_stop = 0.1;
        c.bunching.steps = 1001;
        c.bunching.model = DensityModel::exact_sidebands;
        c.bunching.profile_half_width = 4.0 * T;
        if (id == "4") {
            c.bunching.marks = {0.0, 0.015, 0.046};
        } else {
            for (int k = 0; k <= 100; ++k) c.bunching.marks.push_back(0.001 * k);
        }
        c.meta.inferred = {"pinem.two_gL"};
        add("bunching", "bunching", c);
    } else if (id == "5a" || id == "5b" || id == "5c" || id == "5d") {
        const bool drifted = id == "5c" || id == "5d";
        const bool phi_axis = id == "5a" || id == "5c";
        for (int k = 0; k < (phi_axis ? 8 : 5); ++k) {
            ScenarioConfig c = modulated_preset("fig" + id, 1.0, 1.5);
            c.qew.L_D = drifted ? Lmax : 0.0;
            c.tls.theta = phi_axis ? pi / 2.0 : k * pi / 4.0;
            c.tls.phi = phi_axis ? k * pi / 4.0 : 0.0;
            c.meta.inferred = {phi_axis ? "tls.theta_rad" : "tls.phi_rad"};
            if (drifted) c.meta.inferred.push_back("qew.L_D_m");
            add(angle_tag(phi_axis ? "phi" : "theta", k), "spectrum", c);
        }
    } else if (id == "5e" || id == "5f") {
        ScenarioConfig c = modulated_preset("fig" + id, 1.0, 1.5);
        c.qew.L_D = Lmax;
        if (id == "5e") {
            c.tls.phi = in_phase_phi(Lmax);
            scan(c, ScanAxis::theta, 0.0, pi, 37);
            c.meta.inferred = {"qew.L_D_m", "tls.phi_rad"};
        } else {
            c.tls.theta = pi / 2.0;
            scan(c, ScanAxis::phi, 0.0, 2.0 * pi, 73);
            c.meta.inferred = {"qew.L_D_m", "tls.theta_rad"};
        }
        add(id == "5e" ? "theta_scan" : "phi_scan", "scan", c);
    } else if (id == "6") {
        for (double st : {1.0, 1.5, 2.0}) {
            ScenarioConfig c = modulated_preset("fig6", st, 1.5);
            c.qew.L_D = Lmax;
            c.tls.theta = pi / 2.0;
            c.tls.phi = in_phase_phi(Lmax);
            c.interaction.transition_form = TransitionForm::full_sum;
            scan(c, ScanAxis::omega_b_ratio, 0.8, 1.2, 41);
            c.meta.inferred = {"qew.sigma_t0_s", "qew.L_D_m", "tls.theta_rad", "tls.phi_rad"};
            char name[32];
            std::snprintf(name, sizeof name, "sigma_%gT", st);
            add(name, "scan", c);
        }
    } else if (id == "7") {
        for (double ratio : {1.0, 0.97}) {
            ScenarioConfig c = modulated_preset("fig7", 1.5, 1.5);
            c.pinem->omega_b = ratio * preset_omega;
            c.qew.L_D = Lmax;
            c.tls.theta = pi / 2.0;
            c.tls.phi = in_phase_phi(Lmax);
            c.numeric.enabled = true;
            c.numeric.N = 2048;
            c.interaction.transition_form = TransitionForm::full_sum;
            c.meta.inferred = {"qew.L_D_m", "tls.theta_rad", "tls.phi_rad"};
            add(ratio == 1.0 ? "resonant" : "detuned_0.97", "evolve", c);
        }
    } else if (id == "S1") {
        ScenarioConfig c = base_preset("movieS1", 0.3);
        c.tls.theta = pi / 4.0;
        scan(c, ScanAxis::phi, 0.0, 2.0 * pi, 73);
        add("phi_frames", "frames", c);
    } else if (id == "S2") {
        ScenarioConfig c = base_preset("movieS2", 1.0);
        scan(c, ScanAxis::theta, 0.0, pi, 37);
        add("theta_frames", "frames", c);
    } else if (id == "S3") {
        for (int k = 0; k <= 6; ++k) {
            ScenarioConfig c = base_preset("movieS3", 0.6);
            c.tls.theta = k * pi / 6.0;
            scan(c, ScanAxis::phi, 0.0, 2.0 * pi, 37);
            add(angle_tag("theta", k) + "_phi_frames", "frames", c);
        }
    } else {
        std::string all;
        for (const auto& f : figure_ids()) all += (all.empty() ? "" : ", ") + f;
        throw ConfigError("figure id '" + id + "' is unknown; expected one of " + all);
    }
    return runs;
}

inline json dispatch(const std::string& command, const ScenarioConfig& c, const RunOptions& opt) {
    if (command == "spectrum") return run_spectrum(c, opt);
    if (command == "scan") return run_scan(c, opt);
    if (command == "frames") return run_frames(c, opt);
    if (command == "bunching") return run_bunching(c, opt);
    if (command == "evolve") return run_evolve(c, opt);
    if (command == "wigner") return run_wigner(c, opt);
    throw ConfigError("unknown command " + command);
}

// Runs every sub-run into <out>/<name>; gate failures are collected and reported after all sub-runs finish.
inline std::vector<std::string> run_figure(const std::string& id, const RunOptions& opt, bool numeric = false) {
    std::vector<std::string> done;
    std::string failed;
    for (const PresetRun& r : figure_runs(id, numeric)) {
        RunOptions o = opt;
        o.out = opt.out / r.name;
        try {
            dispatch(r.command, r.config, o);
        } catch (const GateFailure& e) {
            failed += (failed.empty() ? "" : "; ") + r.name + ": " + e.what();
        }
        done.push_back(r.name);
    }
    if (!failed.empty()) throw GateFailure(failed);
    return done;
}

}  // namespace feberi::cli
