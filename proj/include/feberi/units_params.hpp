#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>

#include <boost/math/special_functions/bessel.hpp>

#include "feberi/errors.hpp"

namespace feberi {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

// CODATA-2018.
struct PhysicalConstants {
    double electron_mass = 9.1093837015e-31;
    double light_speed = 299792458.0;
    double planck_constant = 6.62607015e-34;
    double hbar = 6.62607015e-34 / (2.0 * std::numbers::pi);
    double elementary_charge = 1.602176634e-19;
    double vacuum_permittivity = 8.8541878128e-12;
    double compton_wavelength = 6.62607015e-34 / (9.1093837015e-31 * 299792458.0);
};

inline constexpr PhysicalConstants constants{};

inline double joule_to_eV(double e) { return e / constants.elementary_charge; }
inline double eV_to_joule(double e) { return e * constants.elementary_charge; }

struct BeamParams {
    double beta = 0.0;
    double gamma = 1.0;
    double v0 = 0.0;
    double total_energy = 0.0;
    double kinetic_energy = 0.0;
    double p0 = 0.0;

    double kinetic_energy_keV() const { return joule_to_eV(kinetic_energy) * 1e-3; }
    // Effective longitudinal mass of the quadratic dispersion term.
    double dispersion_mass() const { return gamma * gamma * gamma * constants.electron_mass; }
};

inline BeamParams derive_beam(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beam.beta must lie in (0, 1)");
    const double m = constants.electron_mass, c = constants.light_speed;
    BeamParams b;
    b.beta = beta;
    b.gamma = 1.0 / std::sqrt((1.0 - beta) * (1.0 + beta));
    b.v0 = beta * c;
    b.total_energy = b.gamma * m * c * c;
    // (γ−1) written as β²γ²/(γ+1) to keep precision for small β.
    b.kinetic_energy = beta * beta * b.gamma * b.gamma / (b.gamma + 1.0) * m * c * c;
    b.p0 = b.gamma * m * b.v0;
    return b;
}

// E_p − E0 for the full dispersion relation expanded to second order.
inline double energy_offset(const BeamParams& b, double dp) {
    return b.v0 * dp + dp * dp / (2.0 * b.dispersion_mass());
}

// Transition dipole μ21 projected on the longitudinal and transverse unit vectors.
struct Dipole {
    cplx z{0.0, 0.0};
    cplx perp{0.0, 0.0};
};

struct TLSParams {
    double omega21 = 0.0;
    double r_perp0 = 0.0;
    std::optional<Dipole> dipole;

    double E21() const { return constants.hbar * omega21; }
    double E21_eV() const { return joule_to_eV(E21()); }
    double period() const { return 2.0 * pi / omega21; }
};

inline TLSParams make_tls(double omega21, double r_perp0, std::optional<Dipole> dipole = std::nullopt) {
    if (!(omega21 > 0.0)) throw DomainError("tls.omega21_rad_per_s must be positive");
    if (!(r_perp0 > 0.0)) throw DomainError("tls.r_perp0_m must be positive");
    return TLSParams{omega21, r_perp0, dipole};
}

enum class CouplingMode { direct, computed };

struct CouplingSpec {
    CouplingMode mode = CouplingMode::direct;
    double g_abs = 0.0;
    double phi_g = 0.0;

    cplx g() const { return std::polar(g_abs, phi_g); }
};

inline double recoil_momentum(double omega, const BeamParams& b) {
    if (!(omega > 0.0)) throw DomainError("frequency must be positive");
    return constants.hbar * omega / b.v0;
}

// Longitudinal and transverse components of ∫E(z) e^{−ikz} dz for the field of a
// point charge passing at impact parameter r.
struct FieldSpectrum {
    cplx z;
    cplx perp;
};

inline FieldSpectrum field_transform(double k, double r, const BeamParams& b) {
    const double e = constants.elementary_charge, eps0 = constants.vacuum_permittivity;
    const double ak = std::abs(k);
    const double pre = e / (2.0 * pi * eps0 * b.gamma);
    if (ak == 0.0) return {cplx{0.0, 0.0}, cplx{pre * b.gamma / r, 0.0}};
    const double x = ak * r / b.gamma;
    const double k0 = boost::math::cyl_bessel_k(0, x);
    const double k1 = boost::math::cyl_bessel_k(1, x);
    const double sgn = k > 0.0 ? 1.0 : -1.0;
    return {cplx{0.0, -sgn * pre * ak * k0 / b.gamma}, cplx{pre * ak * k1, 0.0}};
}

// Kernel factor of g per unit dipole: g = μz·cz + μ⊥·cperp.
inline FieldSpectrum coupling_per_dipole(const TLSParams& tls, const BeamParams& b) {
    const double k = tls.omega21 / b.v0;
    const FieldSpectrum f = field_transform(k, tls.r_perp0, b);
    const double s = 1.0 / (constants.hbar * b.v0);
    return {f.z * s, f.perp * s};
}

inline cplx coupling_g(const TLSParams& tls, const BeamParams& b) {
    if (!tls.dipole) throw ConfigError("tls.dipole is required in computed coupling mode");
    if (!(tls.r_perp0 > 0.0)) throw DomainError("tls.r_perp0_m must be positive");
    const FieldSpectrum c = coupling_per_dipole(tls, b);
    return tls.dipole->z * c.z + tls.dipole->perp * c.perp;
}

// Transverse dipole that reproduces a prescribed g; used to build the numeric kernel in direct mode.
inline Dipole effective_dipole(cplx g, const TLSParams& tls, const BeamParams& b) {
    const FieldSpectrum c = coupling_per_dipole(tls, b);
    if (std::abs(c.perp) == 0.0)
        throw NumericError("coupling kernel underflows at this impact parameter");
    return Dipole{cplx{0.0, 0.0}, g / c.perp};
}

inline CouplingSpec resolve_coupling(const CouplingSpec& spec, const TLSParams& tls, const BeamParams& b) {
    if (spec.mode == CouplingMode::direct) {
        if (!(spec.g_abs >= 0.0)) throw DomainError("coupling.g_abs must be non-negative");
        return spec;
    }
    const cplx g = coupling_g(tls, b);
    return CouplingSpec{CouplingMode::computed, std::abs(g), std::arg(g)};
}

inline Dipole resolved_dipole(const CouplingSpec& spec, const TLSParams& tls, const BeamParams& b) {
    if (spec.mode == CouplingMode::computed && tls.dipole) return *tls.dipole;
    return effective_dipole(spec.g(), tls, b);
}

// Drift length over which the dispersive spread of a minimum-size packet reaches one transition period.
inline double z_gauss_limit(const BeamParams& b, double omega21) {
    if (!(omega21 > 0.0)) throw DomainError("frequency must be positive");
    const double c = constants.light_speed;
    const double g3b3 = std::pow(b.gamma * b.beta, 3);
    return 2.0 * g3b3 * constants.electron_mass * c * c * c / (constants.hbar * omega21 * omega21);
}

inline double talbot_length(const BeamParams& b, double omega_b) {
    if (!(omega_b > 0.0)) throw DomainError("frequency must be positive");
    const double c = constants.light_speed;
    const double g3b3 = std::pow(b.gamma * b.beta, 3);
    return 4.0 * pi * g3b3 * constants.electron_mass * c * c * c / (constants.hbar * omega_b * omega_b);
}

}  // namespace feberi
