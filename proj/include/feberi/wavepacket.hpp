#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "feberi/errors.hpp"
#include "feberi/fourier.hpp"
#include "feberi/units_params.hpp"

namespace feberi {

struct GaussianQEW {
    BeamParams beam;
    double sigma_t0 = 0.0;
    double L_D = 0.0;

    double sigma_z0() const { return beam.v0 * sigma_t0; }
    double sigma_p() const { return constants.hbar / (2.0 * sigma_z0()); }
    double sigma_E() const { return beam.v0 * sigma_p(); }
    double t_D() const { return L_D / beam.v0; }
};

inline GaussianQEW make_gaussian(const BeamParams& beam, double sigma_t0, double L_D) {
    if (!(sigma_t0 > 0.0)) throw DomainError("qew.sigma_t0_s must be positive");
    if (!(L_D >= 0.0)) throw DomainError("qew.L_D_m must be non-negative");
    return GaussianQEW{beam, sigma_t0, L_D};
}

// Longitudinal Rayleigh length: the drift over which σ_t grows by √2.
inline double rayleigh_length(const GaussianQEW& q) {
    const double sz = q.sigma_z0();
    return 4.0 * pi * std::pow(q.beam.gamma, 3) * q.beam.beta * sz * sz / constants.compton_wavelength;
}

inline double broadened_sigma_t(const GaussianQEW& q) {
    const double x = q.L_D / rayleigh_length(q);
    return q.sigma_t0 * std::sqrt(1.0 + x * x);
}

// Complex width parameters of the drifted packet; the envelope standard deviation is
// σ_z0·√(1 + x²), which is v0·broadened_sigma_t.
inline cplx complex_sigma_z(const GaussianQEW& q) {
    return q.sigma_z0() * std::sqrt(cplx{1.0, q.L_D / rayleigh_length(q)});
}

inline cplx complex_sigma_p_squared(const GaussianQEW& q) {
    const double sp = q.sigma_p();
    return sp * sp / cplx{1.0, 2.0 * q.t_D() * sp * sp / (q.beam.dispersion_mass() * constants.hbar)};
}

inline double min_sigma_after_drift(double L_D, const BeamParams& b) {
    if (!(L_D > 0.0)) throw DomainError("drift length must be positive");
    return std::sqrt(constants.hbar * (L_D / b.v0) / b.dispersion_mass());
}

struct DecayFactors {
    double Gamma = 0.0;    // ω σ_t(L_D)
    double Gamma0 = 0.0;   // ω σ_t0
    double Gamma_D = 0.0;  // dispersive part, Γ² = Γ0² + Γ_D² when σ_E = v0 σ_p
    bool wave_like = false;

    // |I(δp)| for a drifted Gaussian.
    double first_order_factor() const { return std::exp(-0.5 * (Gamma0 * Gamma0 + Gamma_D * Gamma_D)); }
};

inline DecayFactors decay_factors(const GaussianQEW& q, double omega21, std::optional<double> sigma_E = std::nullopt) {
    const double sE = sigma_E.value_or(q.sigma_E());
    const BeamParams& b = q.beam;
    DecayFactors d;
    d.Gamma = omega21 * broadened_sigma_t(q);
    d.Gamma0 = omega21 * q.sigma_t0;
    d.Gamma_D = omega21 * q.L_D * sE / (b.dispersion_mass() * b.v0 * b.v0 * b.v0);
    d.wave_like = d.Gamma < std::sqrt(2.0);
    return d;
}

inline bool large_recoil(const GaussianQEW& q, double omega21) {
    return recoil_momentum(omega21, q.beam) > 2.0 * q.sigma_p();
}

inline bool short_wavepacket(const GaussianQEW& q, double omega21) {
    return 2.0 * broadened_sigma_t(q) < 2.0 * pi / omega21;
}

// Uniform momentum grid centred on p0: p_n = p0 + (n − (N−1)/2)·dp.
struct UniformGrid {
    double p0 = 0.0;
    double dp = 0.0;
    int N = 0;

    double offset(int n) const { return (n - 0.5 * (N - 1)) * dp; }
    double p(int n) const { return p0 + offset(n); }
    double half_width() const { return 0.5 * N * dp; }
    double dz() const { return 2.0 * pi * constants.hbar / (N * dp); }
    double zeta(int j) const { return (j - N / 2) * dz(); }
};

inline UniformGrid make_grid(double p0, double half_width, int N) {
    if (N < 2 || N % 2 != 0) throw ConfigError("grid size N must be even and at least 2");
    if (!(half_width > 0.0)) throw ConfigError("grid half-width must be positive");
    return UniformGrid{p0, 2.0 * half_width / N, N};
}

// Momentum amplitudes with the linear drift phase e^{−i v0 (p−p0) τ/ħ} factored out;
// τ = linear_delay. The constant phase e^{−iE0 τ/ħ} is dropped.
struct GridWavefunction {
    BeamParams beam;
    UniformGrid grid;
    std::vector<cplx> amp;
    double linear_delay = 0.0;
};

inline std::vector<double> density(const GridWavefunction& w) {
    std::vector<double> d(w.amp.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = std::norm(w.amp[i]);
    return d;
}

inline double norm(const GridWavefunction& w) {
    double s = 0.0;
    for (const auto& c : w.amp) s += std::norm(c);
    return s * w.grid.dp;
}

inline void normalize(GridWavefunction& w) {
    const double n = norm(w);
    if (!(n > 0.0)) throw NumericError("wavefunction has zero norm on the grid");
    const double s = 1.0 / std::sqrt(n);
    for (auto& c : w.amp) c *= s;
}

inline std::vector<cplx> true_amplitudes(const GridWavefunction& w) {
    std::vector<cplx> out(w.amp.size());
    const double k = w.beam.v0 * w.linear_delay / constants.hbar;
    for (int n = 0; n < w.grid.N; ++n) out[n] = w.amp[n] * std::polar(1.0, -k * w.grid.offset(n));
    return out;
}

// ψ(ζ_j) = (2πħ)^{-1/2} Σ_n Δp c_n e^{i q_n ζ_j/ħ} with q_n = p_n − p0.
inline std::vector<cplx> to_position(const UniformGrid& g, const std::vector<cplx>& c) {
    const int N = g.N;
    const double a = 0.5 * (N - 1);
    std::vector<cplx> v(N);
    for (int n = 0; n < N; ++n) v[n] = (n % 2 == 0) ? c[n] : -c[n];
    fft_for(N).backward(v);
    const double pref = g.dp / std::sqrt(2.0 * pi * constants.hbar);
    const double ab = a * 0.5 * N;
    for (int j = 0; j < N; ++j) {
        const double ph = 2.0 * pi * (ab - a * j) / N;
        v[j] *= pref * std::polar(1.0, ph);
    }
    return v;
}

inline std::vector<cplx> to_momentum(const UniformGrid& g, const std::vector<cplx>& psi) {
    const int N = g.N;
    const double a = 0.5 * (N - 1);
    std::vector<cplx> v(N);
    for (int j = 0; j < N; ++j) v[j] = psi[j] * std::polar(1.0, 2.0 * pi * a * j / N);
    fft_for(N).forward(v);
    const double pref = g.dz() / std::sqrt(2.0 * pi * constants.hbar);
    const cplx glob = pref * std::polar(1.0, -2.0 * pi * a * 0.5 * N / N);
    for (int n = 0; n < N; ++n) v[n] *= (n % 2 == 0) ? glob : -glob;
    return v;
}

// Aligned amplitudes sampled at p + δ (spectral interpolation through position space).
inline std::vector<cplx> shifted_amplitudes(const UniformGrid& g, const std::vector<cplx>& c, double delta) {
    std::vector<cplx> psi = to_position(g, c);
    for (int j = 0; j < g.N; ++j) psi[j] *= std::polar(1.0, -delta * g.zeta(j) / constants.hbar);
    return to_momentum(g, psi);
}

// Largest density in the outer 1/64 of the periodic box relative to the peak.
inline double edge_fraction(const std::vector<cplx>& psi) {
    const int N = static_cast<int>(psi.size());
    const int band = std::max(1, N / 64);
    double peak = 0.0, edge = 0.0;
    for (int j = 0; j < N; ++j) {
        const double d = std::norm(psi[j]);
        peak = std::max(peak, d);
        if (j < band || j >= N - band) edge = std::max(edge, d);
    }
    return peak > 0.0 ? edge / peak : 0.0;
}

inline void check_aliasing(const std::vector<cplx>& psi) {
    const double f = edge_fraction(psi);
    if (f > 1e-12)
        throw ResolutionError("position-space density reaches the edge of the periodic box (edge/peak = " +
                              std::to_string(f) + "); refine the momentum step");
}

// Profile at lab time t in the co-moving coordinate ζ = z − v0(t + τ).
struct PositionProfile {
    std::vector<double> zeta;
    std::vector<cplx> psi;
    double dz = 0.0;
    double centre_offset = 0.0;

    double norm() const {
        double s = 0.0;
        for (const auto& v : psi) s += std::norm(v);
        return s * dz;
    }
    double mean() const {
        double s = 0.0;
        for (size_t j = 0; j < psi.size(); ++j) s += zeta[j] * std::norm(psi[j]);
        return s * dz / norm();
    }
    double stddev() const {
        const double m = mean();
        double s = 0.0;
        for (size_t j = 0; j < psi.size(); ++j) s += (zeta[j] - m) * (zeta[j] - m) * std::norm(psi[j]);
        return std::sqrt(s * dz / norm());
    }
};

inline std::vector<cplx> drift_phase_applied(const GridWavefunction& w, double t) {
    std::vector<cplx> c = w.amp;
    if (t != 0.0) {
        const double k = t / (2.0 * w.beam.dispersion_mass() * constants.hbar);
        for (int n = 0; n < w.grid.N; ++n) {
            const double q = w.grid.offset(n);
            c[n] *= std::polar(1.0, -k * q * q);
        }
    }
    return c;
}

inline PositionProfile position_profile(const GridWavefunction& w, double t = 0.0) {
    PositionProfile out;
    out.psi = to_position(w.grid, drift_phase_applied(w, t));
    check_aliasing(out.psi);
    out.dz = w.grid.dz();
    out.zeta.resize(w.grid.N);
    for (int j = 0; j < w.grid.N; ++j) out.zeta[j] = w.grid.zeta(j);
    out.centre_offset = w.beam.v0 * (t + w.linear_delay);
    return out;
}

// Advances the state by a free drift of duration t.
inline GridWavefunction drift(const GridWavefunction& w, double t) {
    GridWavefunction out = w;
    out.amp = drift_phase_applied(w, t);
    out.linear_delay += t;
    return out;
}

inline GridWavefunction momentum_amplitudes(const GaussianQEW& q, const UniformGrid& g) {
    const double sp = q.sigma_p();
    if (g.half_width() < 6.0 * sp)
        throw ResolutionError("momentum grid covers less than ±6 σ_p around p0");
    GridWavefunction w{q.beam, g, std::vector<cplx>(g.N), q.t_D()};
    const double A = std::pow(2.0 * pi * sp * sp, -0.25);
    const double k = q.t_D() / (2.0 * q.beam.dispersion_mass() * constants.hbar);
    for (int n = 0; n < g.N; ++n) {
        const double x = g.offset(n);
        w.amp[n] = A * std::exp(-x * x / (4.0 * sp * sp)) * std::polar(1.0, -k * x * x);
    }
    normalize(w);
    return w;
}

// I(δ) = ∫ c*_{p+δ} c_p dp = e^{i v0 δ τ/ħ} ∫ |ψ(ζ)|² e^{iδζ/ħ} dζ.
inline cplx autocorrelation(const GridWavefunction& w, double delta_p) {
    const std::vector<cplx> psi = to_position(w.grid, w.amp);
    cplx s{0.0, 0.0};
    for (int j = 0; j < w.grid.N; ++j)
        s += std::norm(psi[j]) * std::polar(1.0, delta_p * w.grid.zeta(j) / constants.hbar);
    const double lin = w.beam.v0 * delta_p * w.linear_delay / constants.hbar;
    return s * w.grid.dz() * std::polar(1.0, lin);
}

}  // namespace feberi
