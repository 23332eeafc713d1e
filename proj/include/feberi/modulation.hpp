#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "feberi/errors.hpp"
#include "feberi/special.hpp"
#include "feberi/units_params.hpp"
#include "feberi/wavepacket.hpp"

namespace feberi {

// Sideband amplitudes J_m(2|g_L|) e^{−imφ0}; any phase of the complex coupling is absorbed into φ0.
struct PinemParams {
    double gL_abs = 0.0;
    double phi0 = 0.0;
    double omega_b = 0.0;

    double two_gL() const { return 2.0 * gL_abs; }
    double delta_pL(const BeamParams& b) const { return recoil_momentum(omega_b, b); }
};

inline PinemParams make_pinem(double two_gL, double phi0, double omega_b) {
    if (!(two_gL >= 0.0)) throw DomainError("pinem.two_gL must be non-negative");
    if (!(omega_b > 0.0)) throw DomainError("pinem.omega_b_rad_per_s must be positive");
    return PinemParams{0.5 * two_gL, phi0, omega_b};
}

inline constexpr int sideband_cap = 64;

// Smallest M with Σ_{|m|≤M} J_m²(2|g_L|) ≥ 1 − 1e−12.
inline int sideband_cutoff(double two_gL) {
    double sum = bessel_j(0, two_gL) * bessel_j(0, two_gL);
    for (int m = 0; m <= sideband_cap; ++m) {
        if (m > 0) sum += 2.0 * bessel_j(m, two_gL) * bessel_j(m, two_gL);
        if (1.0 - sum <= 1e-12) return m;
    }
    throw ConfigError("pinem.two_gL too large: sideband tail exceeds the cap of " + std::to_string(sideband_cap));
}

struct ModulatedQEW {
    GaussianQEW base;
    PinemParams pinem;

    double L_D() const { return base.L_D; }
    double delta_pL() const { return pinem.delta_pL(base.beam); }
    int m_max() const { return sideband_cutoff(pinem.two_gL()); }
    double talbot() const { return talbot_length(base.beam, pinem.omega_b); }
};

inline ModulatedQEW make_modulated(const GaussianQEW& base, const PinemParams& pinem) {
    ModulatedQEW m{base, pinem};
    if (base.sigma_p() > m.delta_pL() / 4.0)
        throw ValidityError("sidebands overlap: sigma_p exceeds delta_pL/4; lengthen qew.sigma_t0_s");
    return m;
}

inline void check_modulated_grid(const ModulatedQEW& mod, const UniformGrid& g) {
    const double need = mod.m_max() * mod.delta_pL() + 6.0 * mod.base.sigma_p();
    if (g.half_width() < need)
        throw ResolutionError("momentum grid does not span the PINEM sidebands (need ±" + std::to_string(need) + ")");
}

// Modulated state right after the PINEM interaction (no drift).
inline GridWavefunction apply_pinem(const GaussianQEW& qew, const PinemParams& pinem, const UniformGrid& g) {
    const ModulatedQEW mod = make_modulated(qew, pinem);
    check_modulated_grid(mod, g);
    const int M = mod.m_max();
    const double sp = qew.sigma_p(), dL = mod.delta_pL();
    const double A = std::pow(2.0 * pi * sp * sp, -0.25);
    GridWavefunction w{qew.beam, g, std::vector<cplx>(g.N, cplx{0.0, 0.0}), 0.0};
    for (int m = -M; m <= M; ++m) {
        const cplx cm = bessel_j(m, pinem.two_gL()) * std::polar(1.0, -m * pinem.phi0);
        for (int n = 0; n < g.N; ++n) {
            const double x = g.offset(n) - m * dL;
            const double e = x * x / (4.0 * sp * sp);
            if (e < 700.0) w.amp[n] += cm * A * std::exp(-e);
        }
    }
    normalize(w);
    return w;
}

inline GridWavefunction drift_modulated(const ModulatedQEW& mod, const UniformGrid& g) {
    return drift(apply_pinem(mod.base, mod.pinem, g), mod.base.t_D());
}

// Per-sideband drift phase m²·α with α = 2π L_D/z_T.
inline double talbot_phase(const ModulatedQEW& mod) { return 2.0 * pi * mod.L_D() / mod.talbot(); }

inline double bunching_coefficient(const PinemParams& p, int m, double L_D, double z_T) {
    return std::abs(bessel_j(m, 2.0 * p.two_gL() * std::sin(2.0 * pi * m * L_D / z_T)));
}

struct BunchingOptimum {
    double L_D = 0.0;
    double b_max = 0.0;
    bool sub_saturated = false;
};

inline BunchingOptimum optimal_bunching_length(const PinemParams& p, int m, double z_T) {
    if (m < 1) throw DomainError("bunching harmonic must be at least 1");
    const auto [u, jmax] = bessel_first_max(m);
    const double arg = 2.0 * p.two_gL();
    if (u > arg) {
        const double L = z_T / (4.0 * m);
        return {L, std::abs(bessel_j(m, arg)), true};
    }
    return {z_T * std::asin(u / arg) / (2.0 * pi * m), jmax, false};
}

// PINEM strength whose m-th bunching maximum falls at L_max.
inline double implied_two_gL(double L_max, int m, double z_T) {
    const double u = bessel_first_max(m).first;
    return 0.5 * u / std::sin(2.0 * pi * m * L_max / z_T);
}

enum class DensityModel { talbot_series, exact_sidebands };

// Envelope of the drifted Gaussian in the co-moving frame.
inline cplx chirped_envelope(const GaussianQEW& q, double zeta) {
    const double sz = q.sigma_z0();
    const double X = constants.hbar * q.t_D() / (2.0 * q.beam.dispersion_mass() * sz * sz);
    const cplx w{1.0, X};
    return std::pow(2.0 * pi * sz * sz, -0.25) / std::sqrt(w) * std::exp(-zeta * zeta / (4.0 * sz * sz * w));
}

// Density ρ(ζ) per metre on ζ = z − v0(t + t_D).
// talbot_series: product of the broadened envelope with the harmonic series
//   Σ_l e^{il(δp_L ζ/ħ − φ0)} (−i)^l J_l(4|g_L| sin(lα)), which revives exactly with period z_T.
// exact_sidebands: coherent sum of chirped sideband packets including their group walk-off.
inline std::vector<double> density_profile(const ModulatedQEW& mod, const std::vector<double>& zeta,
                                           DensityModel model = DensityModel::talbot_series) {
    const GaussianQEW& q = mod.base;
    const double dL = mod.delta_pL();
    const double alpha = talbot_phase(mod);
    const double x = mod.pinem.two_gL();
    std::vector<double> rho(zeta.size(), 0.0);
    if (model == DensityModel::talbot_series) {
        const double amp = 2.0 * x;
        const int lmax = static_cast<int>(std::ceil(amp + 10.0 * std::cbrt(amp + 1.0) + 20.0));
        std::vector<cplx> coef(lmax + 1);
        for (int l = 0; l <= lmax; ++l)
            coef[l] = std::pow(cplx{0.0, -1.0}, l) * bessel_j(l, amp * std::sin(l * alpha)) *
                      std::polar(1.0, -l * mod.pinem.phi0);
        if (std::abs(coef[lmax]) > 1e-14) throw NumericError("bunching series did not converge");
        const double sz = q.beam.v0 * broadened_sigma_t(q);
        for (size_t j = 0; j < zeta.size(); ++j) {
            const double env = std::exp(-zeta[j] * zeta[j] / (2.0 * sz * sz)) / (std::sqrt(2.0 * pi) * sz);
            cplx s = coef[0];
            for (int l = 1; l <= lmax; ++l) s += 2.0 * coef[l] * std::polar(1.0, l * dL * zeta[j] / constants.hbar);
            // The l and −l terms are complex conjugates, so only the real part survives.
            rho[j] = env * s.real();
        }
        return rho;
    }
    const int M = mod.m_max();
    const double s = dL * q.t_D() / q.beam.dispersion_mass();
    for (size_t j = 0; j < zeta.size(); ++j) {
        cplx psi{0.0, 0.0};
        for (int m = -M; m <= M; ++m) {
            const double jm = bessel_j(m, x);
            if (jm == 0.0) continue;
            const double ph = -m * mod.pinem.phi0 - m * m * alpha + m * dL * zeta[j] / constants.hbar;
            psi += jm * std::polar(1.0, ph) * chirped_envelope(q, zeta[j] - m * s);
        }
        rho[j] = std::norm(psi);
    }
    return rho;
}

// ρ̌(ω) = ∫ρ(t) e^{iωt} dt over arrival time t = −ζ/v0; ρ̌(0) = 1.
inline cplx spectral_bunching(const ModulatedQEW& mod, double omega) {
    const GaussianQEW& q = mod.base;
    const BeamParams& b = q.beam;
    const double M = b.dispersion_mass();
    const double gD = omega * q.t_D() * q.sigma_p() / (M * b.v0);
    const double X = 2.0 * mod.pinem.two_gL() *
                     std::sin(omega * mod.pinem.omega_b * constants.hbar * q.t_D() / (2.0 * M * b.v0 * b.v0));
    const double st = q.sigma_t0;
    const int L = mod.m_max() * 2 + 8;
    cplx s{0.0, 0.0};
    for (int l = -L; l <= L; ++l) {
        const double det = (omega - l * mod.pinem.omega_b) * st;
        const double e = 0.5 * det * det;
        if (e > 700.0) continue;
        s += std::pow(cplx{0.0, -1.0}, l) * std::polar(1.0, -l * mod.pinem.phi0) * std::exp(-e) * bessel_j(l, X);
    }
    return std::exp(-0.5 * gD * gD) * s;
}

}  // namespace feberi
