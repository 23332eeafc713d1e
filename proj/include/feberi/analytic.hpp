#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "feberi/errors.hpp"
#include "feberi/modulation.hpp"
#include "feberi/special.hpp"
#include "feberi/units_params.hpp"
#include "feberi/wavepacket.hpp"

namespace feberi {

// Bloch state sin(θ/2)|1⟩ + e^{iφ} cos(θ/2)|2⟩.
struct TLSQubit {
    double theta = 0.0;
    double phi = 0.0;

    double P2() const { return std::cos(0.5 * theta) * std::cos(0.5 * theta); }
    double P1() const { return std::sin(0.5 * theta) * std::sin(0.5 * theta); }
};

inline TLSQubit make_qubit(double theta, double phi) {
    if (!(theta >= 0.0 && theta <= pi)) throw DomainError("tls.theta_rad must lie in [0, pi]");
    return TLSQubit{theta, std::fmod(std::fmod(phi, 2.0 * pi) + 2.0 * pi, 2.0 * pi)};
}

// as_printed: the upper-level population pairs with the |c_{p+δp}|² sideband and
// E21·ΔP2 equals the electron energy gain. flipped: mirrored bookkeeping in which
// the sideband pairing is swapped, Δρ⁽¹⁾ changes sign and E21·ΔP2 equals the electron energy loss.
enum class RecoilSign { as_printed, flipped };

struct InteractionConfig {
    cplx g{0.0, 0.0};
    double omega21 = 0.0;
    int n = 1;
    RecoilSign recoil_sign = RecoilSign::as_printed;
    std::optional<double> zeta;     // explicit arrival phase, replaces the derived value
    std::optional<double> gamma_b;  // override of the envelope decay factor in the modulated transition
};

inline double resolve_zeta_gaussian(const InteractionConfig& cfg, const TLSQubit& q, double t_D) {
    return cfg.zeta.value_or(cfg.omega21 * t_D - q.phi);
}

inline double resolve_zeta_modulated(const InteractionConfig& cfg, const TLSQubit& q, double t_D, double phi0) {
    return cfg.zeta.value_or(cfg.omega21 * t_D - q.phi + cfg.n * phi0);
}

struct IncrementalSpectrum {
    BeamParams beam;
    UniformGrid grid;
    std::vector<double> rho_initial, d0, d1, d2, total;

    std::vector<double> energy_axis_eV() const {
        std::vector<double> e(grid.N);
        for (int n = 0; n < grid.N; ++n) e[n] = joule_to_eV(beam.v0 * grid.offset(n));
        return e;
    }
    double integral(const std::vector<double>& v) const {
        double s = 0.0;
        for (double x : v) s += x;
        return s * grid.dp;
    }
    // ∫(E_p − E0) v dp with the linearized dispersion, in joules.
    double energy_moment(const std::vector<double>& v) const {
        double s = 0.0;
        for (int n = 0; n < grid.N; ++n) s += grid.offset(n) * v[n];
        return s * grid.dp * beam.v0;
    }
    void finish() {
        total.resize(d0.size());
        for (size_t i = 0; i < total.size(); ++i) total[i] = d0[i] + d1[i] + d2[i];
    }
};

struct TransitionResult {
    double delta_P2 = 0.0;
    double P1_final = 0.0;
    double P2_final = 0.0;
    double first_order = 0.0;
    double second_order = 0.0;
};

inline TransitionResult make_transition(const TLSQubit& q, double first, double second) {
    TransitionResult t;
    t.first_order = first;
    t.second_order = second;
    t.delta_P2 = first + second;
    t.P2_final = q.P2() + t.delta_P2;
    t.P1_final = q.P1() - t.delta_P2;
    return t;
}

namespace detail {

inline double gauss(double x, double s) {
    const double e = x * x / (2.0 * s * s);
    return e > 700.0 ? 0.0 : std::exp(-e) / (std::sqrt(2.0 * pi) * s);
}

struct Trig {
    double C2, S2, K, c2, s2;
};

inline Trig trig(double gabs, double theta) {
    const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
    return {std::cos(gabs) * std::cos(gabs), std::sin(gabs) * std::sin(gabs),
            0.5 * std::sin(2.0 * gabs) * std::sin(theta), c * c, s * s};
}

inline void apply_flip(IncrementalSpectrum& s, const std::vector<double>& plus, const std::vector<double>& minus,
                       const Trig& t, RecoilSign sign) {
    // plus = |c_{p+δ}|², minus = |c_{p−δ}|²
    s.d2.resize(plus.size());
    for (size_t i = 0; i < plus.size(); ++i) {
        if (sign == RecoilSign::as_printed)
            s.d2[i] = t.S2 * (t.c2 * plus[i] + t.s2 * minus[i]);
        else
            s.d2[i] = t.S2 * (t.s2 * plus[i] + t.c2 * minus[i]);
    }
    if (sign == RecoilSign::flipped)
        for (auto& v : s.d1) v = -v;
}

}  // namespace detail

// Largest density within δ of the grid edge relative to the peak.
inline void check_momentum_margin(const GridWavefunction& w, double delta) {
    const int band = std::max(1, static_cast<int>(std::ceil(std::abs(delta) / w.grid.dp)));
    if (2 * band >= w.grid.N) throw ResolutionError("momentum grid narrower than the recoil shift");
    double peak = 0.0, edge = 0.0;
    for (int n = 0; n < w.grid.N; ++n) {
        const double d = std::norm(w.amp[n]);
        peak = std::max(peak, d);
        if (n < band || n >= w.grid.N - band) edge = std::max(edge, d);
    }
    if (edge > 1e-12 * peak)
        throw ResolutionError("momentum grid does not leave a recoil-sized margin around the state");
}

struct PostInteraction {
    GridWavefunction level1;
    GridWavefunction level2;
};

// Electron amplitudes attached to each TLS level after the passage, in the drift-aligned representation.
inline PostInteraction post_interaction_amplitudes(const GridWavefunction& w, const TLSQubit& q,
                                                   const InteractionConfig& cfg) {
    const double delta = recoil_momentum(cfg.omega21, w.beam);
    check_momentum_margin(w, delta);
    const std::vector<cplx> up = shifted_amplitudes(w.grid, w.amp, delta);
    const std::vector<cplx> dn = shifted_amplitudes(w.grid, w.amp, -delta);
    const double gabs = std::abs(cfg.g), phig = std::arg(cfg.g);
    const double C = std::cos(gabs), S = std::sin(gabs);
    const double c = std::cos(0.5 * q.theta), s = std::sin(0.5 * q.theta);
    const double wt = cfg.omega21 * w.linear_delay;
    const cplx a1 = -I * S * std::polar(1.0, -phig + q.phi - wt) * c;
    const cplx a2 = -I * S * std::polar(1.0, phig + wt) * s;
    const cplx e_phi = std::polar(1.0, q.phi);
    PostInteraction out{w, w};
    for (int n = 0; n < w.grid.N; ++n) {
        out.level1.amp[n] = C * s * w.amp[n] + a1 * up[n];
        out.level2.amp[n] = C * e_phi * c * w.amp[n] + a2 * dn[n];
    }
    return out;
}

// Reduced TLS density matrix (index 0 = level 1) from the autocorrelations I(δ) and I(2δ).
inline Eigen::Matrix2cd tls_density_closed(const TLSQubit& q, cplx g, cplx I1, cplx I2) {
    const double gabs = std::abs(g), phig = std::arg(g);
    const double C = std::cos(gabs), S = std::sin(gabs);
    const double c = std::cos(0.5 * q.theta), s = std::sin(0.5 * q.theta);
    const double K = 0.5 * std::sin(2.0 * gabs) * std::sin(q.theta);
    const cplx x = I * std::polar(1.0, phig - q.phi) * I1;
    Eigen::Matrix2cd r;
    r(0, 0) = C * C * s * s + S * S * c * c + K * x.real();
    r(1, 1) = C * C * c * c + S * S * s * s - K * x.real();
    r(0, 1) = C * C * s * c * std::polar(1.0, -q.phi) + I * C * S * std::polar(1.0, -phig) * (s * s - c * c) * std::conj(I1) +
              S * S * s * c * std::polar(1.0, q.phi - 2.0 * phig) * std::conj(I2);
    r(1, 0) = std::conj(r(0, 1));
    return r;
}

struct ScatterResult {
    IncrementalSpectrum spectrum;
    Eigen::Matrix2cd tls;
    TransitionResult transition;
};

// First-order scattering of an arbitrary sampled wavefunction.
inline ScatterResult scatter_generic(const GridWavefunction& w, const TLSQubit& q, const InteractionConfig& cfg) {
    const double delta = recoil_momentum(cfg.omega21, w.beam);
    check_momentum_margin(w, delta);
    const int N = w.grid.N;
    const std::vector<cplx> up = shifted_amplitudes(w.grid, w.amp, delta);
    const std::vector<cplx> dn = shifted_amplitudes(w.grid, w.amp, -delta);
    const double gabs = std::abs(cfg.g), phig = std::arg(cfg.g);
    const detail::Trig t = detail::trig(gabs, q.theta);
    const double wt = cfg.omega21 * w.linear_delay;

    ScatterResult r;
    IncrementalSpectrum& sp = r.spectrum;
    sp.beam = w.beam;
    sp.grid = w.grid;
    sp.rho_initial = density(w);
    sp.d0.resize(N);
    sp.d1.resize(N);
    std::vector<double> plus(N), minus(N);
    const cplx ea = I * std::polar(1.0, phig - q.phi + wt);
    const cplx eb = I * std::polar(1.0, q.phi - phig - wt);
    for (int n = 0; n < N; ++n) {
        sp.d0[n] = -t.S2 * sp.rho_initial[n];
        plus[n] = std::norm(up[n]);
        minus[n] = std::norm(dn[n]);
        // Co(p, δ) = e^{iωτ} c̄*(p+δ) c̄(p), Co(p, −δ) = e^{−iωτ} c̄*(p−δ) c̄(p)
        const cplx co_p = std::conj(up[n]) * w.amp[n];
        const cplx co_m = std::conj(dn[n]) * w.amp[n];
        sp.d1[n] = t.K * ((ea * co_p).real() + (eb * co_m).real());
    }
    detail::apply_flip(sp, plus, minus, t, cfg.recoil_sign);
    sp.finish();

    const cplx I1 = autocorrelation(w, delta);
    const cplx I2 = autocorrelation(w, 2.0 * delta);
    r.tls = tls_density_closed(q, cfg.g, I1, I2);
    const double first = -t.K * (I * std::polar(1.0, phig - q.phi) * I1).real();
    const double second = -t.S2 * std::cos(q.theta);
    r.transition = make_transition(q, first, second);
    return r;
}

inline IncrementalSpectrum spectrum_gaussian_closed(const GaussianQEW& qew, const TLSQubit& q,
                                                    const InteractionConfig& cfg, const UniformGrid& g) {
    const double delta = recoil_momentum(cfg.omega21, qew.beam);
    const double sp = qew.sigma_p();
    const double zeta = resolve_zeta_gaussian(cfg, q, qew.t_D());
    const double phig = std::arg(cfg.g);
    const detail::Trig t = detail::trig(std::abs(cfg.g), q.theta);
    const double kappa = cfg.omega21 * qew.t_D() / (qew.beam.dispersion_mass() * qew.beam.v0);
    const double g0 = cfg.omega21 * qew.sigma_t0;
    const double amp = t.K * std::exp(-0.5 * g0 * g0);

    IncrementalSpectrum s;
    s.beam = qew.beam;
    s.grid = g;
    const int N = g.N;
    s.rho_initial.resize(N);
    s.d0.resize(N);
    s.d1.resize(N);
    std::vector<double> plus(N), minus(N);
    for (int n = 0; n < N; ++n) {
        const double x = g.offset(n);
        s.rho_initial[n] = detail::gauss(x, sp);
        s.d0[n] = -t.S2 * s.rho_initial[n];
        const double a = x + 0.5 * delta, b = x - 0.5 * delta;
        s.d1[n] = amp * (-std::sin(zeta + phig + kappa * a) * detail::gauss(a, sp) +
                         std::sin(zeta + phig + kappa * b) * detail::gauss(b, sp));
        plus[n] = detail::gauss(x + delta, sp);
        minus[n] = detail::gauss(x - delta, sp);
    }
    detail::apply_flip(s, plus, minus, t, cfg.recoil_sign);
    s.finish();
    return s;
}

inline TransitionResult transition_gaussian(const GaussianQEW& qew, const TLSQubit& q, const InteractionConfig& cfg) {
    const DecayFactors d = decay_factors(qew, cfg.omega21);
    const detail::Trig t = detail::trig(std::abs(cfg.g), q.theta);
    const double zeta = resolve_zeta_gaussian(cfg, q, qew.t_D());
    const double first = t.K * std::sin(zeta + std::arg(cfg.g)) * d.first_order_factor();
    return make_transition(q, first, -t.S2 * std::cos(q.theta));
}

inline void check_resonance_window(const ModulatedQEW& mod, const InteractionConfig& cfg) {
    const double det = std::abs(cfg.omega21 - cfg.n * mod.pinem.omega_b) * mod.base.sigma_t0;
    if (det > 3.0)
        throw ValidityError("harmonic n = " + std::to_string(cfg.n) +
                            " is outside the near-resonance window |omega21 - n omega_b| sigma_t0 <= 3; use scatter_generic");
}

// Drift phase κ(p − p0) acquired by the recoil-shifted overlap, κ = ω t_D/(γ³ m v0).
inline double recoil_phase_rate(const GaussianQEW& qew, double omega21) {
    return omega21 * qew.t_D() / (qew.beam.dispersion_mass() * qew.beam.v0);
}

struct SidebandCoefficients {
    double A = 0.0;
    double B = 0.0;
};

// Amplitude of Δρ⁽¹⁾ (in units of ½ sin2|g| sinθ) and weight of Δρ⁽²⁾ (in units of sin²|g|) at sideband m.
// drift_plus/minus are the recoil phases κ(mδp_L ± δp/2).
inline SidebandCoefficients sideband_coefficients(int n, int m, double two_gL, double theta, double zeta, double phi_g,
                                                  double drift_plus, double drift_minus) {
    const double jm = bessel_j(m, two_gL);
    const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
    SidebandCoefficients r;
    r.A = -bessel_j(m + n, two_gL) * jm * std::sin(zeta + phi_g + drift_plus) +
          bessel_j(m - n, two_gL) * jm * std::sin(zeta + phi_g + drift_minus);
    const double jp = bessel_j(m + n, two_gL), jn = bessel_j(m - n, two_gL);
    r.B = jp * jp * c * c + jn * jn * s * s;
    return r;
}

inline IncrementalSpectrum spectrum_modulated_closed(const ModulatedQEW& mod, const TLSQubit& q,
                                                     const InteractionConfig& cfg, const UniformGrid& g) {
    check_resonance_window(mod, cfg);
    const GaussianQEW& qew = mod.base;
    const double delta = recoil_momentum(cfg.omega21, qew.beam);
    const double dL = mod.delta_pL();
    const double sp = qew.sigma_p();
    const double x = mod.pinem.two_gL();
    const int M = mod.m_max();
    const int n = cfg.n;
    const double zeta = resolve_zeta_modulated(cfg, q, qew.t_D(), mod.pinem.phi0);
    const double phig = std::arg(cfg.g);
    const detail::Trig t = detail::trig(std::abs(cfg.g), q.theta);
    const double kappa = recoil_phase_rate(qew, cfg.omega21);
    const double det = (cfg.omega21 - n * mod.pinem.omega_b) * qew.sigma_t0;
    const double amp = t.K * std::exp(-0.5 * det * det);
    const double eps = 0.5 * (delta - n * dL);

    IncrementalSpectrum s;
    s.beam = qew.beam;
    s.grid = g;
    const int N = g.N;
    s.rho_initial.assign(N, 0.0);
    s.d1.assign(N, 0.0);
    std::vector<double> plus(N, 0.0), minus(N, 0.0);
    const int span = M + std::abs(n);
    for (int m = -span; m <= span; ++m) {
        const double jm = bessel_j(m, x);
        const double w2 = jm * jm;
        const double ap = bessel_j(m + n, x) * jm;
        const double am = bessel_j(m - n, x) * jm;
        for (int k = 0; k < N; ++k) {
            const double y = g.offset(k) - m * dL;
            if (w2 != 0.0) {
                s.rho_initial[k] += w2 * detail::gauss(y, sp);
                plus[k] += w2 * detail::gauss(y + delta, sp);
                minus[k] += w2 * detail::gauss(y - delta, sp);
            }
            const double pa = y + eps, pb = y - eps;
            const double q0 = g.offset(k);
            if (ap != 0.0) s.d1[k] -= amp * ap * std::sin(zeta + phig + kappa * (q0 + 0.5 * delta)) * detail::gauss(pa, sp);
            if (am != 0.0) s.d1[k] += amp * am * std::sin(zeta + phig + kappa * (q0 - 0.5 * delta)) * detail::gauss(pb, sp);
        }
    }
    s.d0.resize(N);
    for (int k = 0; k < N; ++k) s.d0[k] = -t.S2 * s.rho_initial[k];
    detail::apply_flip(s, plus, minus, t, cfg.recoil_sign);
    s.finish();
    return s;
}

enum class TransitionForm { single_harmonic, full_sum };

inline TransitionResult transition_modulated(const ModulatedQEW& mod, const TLSQubit& q, const InteractionConfig& cfg,
                                             TransitionForm form = TransitionForm::single_harmonic) {
    const GaussianQEW& qew = mod.base;
    const detail::Trig t = detail::trig(std::abs(cfg.g), q.theta);
    const double phig = std::arg(cfg.g);
    const double kappa = recoil_phase_rate(qew, cfg.omega21);
    const double dL = mod.delta_pL();
    const double X = 2.0 * mod.pinem.two_gL() * std::sin(0.5 * kappa * dL);
    const double gamma_b = cfg.gamma_b.value_or(kappa * qew.sigma_p());
    const double env = std::exp(-0.5 * gamma_b * gamma_b);
    const double zeta_n = resolve_zeta_modulated(cfg, q, qew.t_D(), mod.pinem.phi0);
    auto term = [&](int l) {
        const double det = (cfg.omega21 - l * mod.pinem.omega_b) * qew.sigma_t0;
        const double e = 0.5 * det * det;
        if (e > 700.0) return 0.0;
        const double zl = zeta_n + (l - cfg.n) * mod.pinem.phi0;
        return bessel_j(l, X) * std::exp(-e) * std::sin(zl + phig + 0.5 * pi * l);
    };
    double sum = 0.0;
    if (form == TransitionForm::single_harmonic) {
        check_resonance_window(mod, cfg);
        sum = term(cfg.n);
    } else {
        const int L = 2 * mod.m_max() + 8 + static_cast<int>(std::ceil(cfg.omega21 / mod.pinem.omega_b));
        for (int l = -L; l <= L; ++l) sum += term(l);
    }
    return make_transition(q, t.K * env * sum, -t.S2 * std::cos(q.theta));
}

// E21·ΔP2 − ∫(E_p − E0) Δρ dp in eV with the linearized dispersion; the electron side changes sign for flipped.
inline double energy_balance(const IncrementalSpectrum& s, const TransitionResult& tr, double E21,
                             RecoilSign sign = RecoilSign::as_printed) {
    const double dE = s.energy_moment(s.total);
    const double electron = sign == RecoilSign::as_printed ? dE : -dE;
    return joule_to_eV(E21 * tr.delta_P2 - electron);
}

// Same residual with E0 taken from the sampled initial state.
inline double energy_balance(const GridWavefunction& initial, const IncrementalSpectrum& s, const TransitionResult& tr,
                             double E21, RecoilSign sign = RecoilSign::as_printed) {
    if (initial.grid.N != s.grid.N) throw ConfigError("initial state and spectrum use different grids");
    const std::vector<double> r0 = density(initial);
    std::vector<double> rf(r0.size());
    for (size_t i = 0; i < rf.size(); ++i) rf[i] = r0[i] + s.total[i];
    const double dE = s.energy_moment(rf) - s.energy_moment(r0);
    const double electron = sign == RecoilSign::as_printed ? dE : -dE;
    return joule_to_eV(E21 * tr.delta_P2 - electron);
}

}  // namespace feberi
