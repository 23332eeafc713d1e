#include "catch_amalgamated.hpp"

#include <algorithm>

#include "feberi/modulation.hpp"

using namespace feberi;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const BeamParams beam = derive_beam(0.7);
constexpr double omega = 3e15;
const double T21 = 2.0 * pi / omega;
const double zT = talbot_length(beam, omega);

UniformGrid sideband_grid(int N = 4096) { return make_grid(beam.p0, 10.0 * recoil_momentum(omega, beam), N); }

double peak(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

std::vector<double> grid_density(const ModulatedQEW& mod, const UniformGrid& g, std::vector<double>& zeta) {
    const PositionProfile p = position_profile(drift_modulated(mod, g), 0.0);
    zeta = p.zeta;
    std::vector<double> rho(p.psi.size());
    for (size_t j = 0; j < rho.size(); ++j) rho[j] = std::norm(p.psi[j]);
    return rho;
}

}  // namespace

TEST_CASE("sideband populations follow squared Bessel weights") {
    const PinemParams pin = make_pinem(1.5, 0.3, omega);
    const GaussianQEW q = make_gaussian(beam, 1.5 * T21, 0.0);
    const UniformGrid g = sideband_grid();
    const GridWavefunction w = apply_pinem(q, pin, g);
    REQUIRE_THAT(norm(w), WithinAbs(1.0, 1e-12));
    const double dL = pin.delta_pL(beam);
    auto weight = [&](int m) {
        double s = 0.0;
        for (int n = 0; n < g.N; ++n)
            if (std::abs(g.offset(n) - m * dL) < 0.5 * dL) s += std::norm(w.amp[n]);
        return s * g.dp;
    };
    REQUIRE_THAT(weight(0), WithinAbs(0.26196756555461, 1e-10));
    REQUIRE_THAT(weight(1), WithinAbs(0.31129314685892, 1e-10));
    REQUIRE_THAT(weight(-1), WithinAbs(0.31129314685892, 1e-10));
    REQUIRE_THAT(weight(2), WithinAbs(0.05386468756132, 1e-10));
    for (int m = 3; m <= 8; ++m) REQUIRE_THAT(weight(m), WithinAbs(bessel_j(m, 1.5) * bessel_j(m, 1.5), 1e-10));
}

TEST_CASE("sideband cutoff") {
    REQUIRE(sideband_cutoff(1.5) == 8);
    REQUIRE(sideband_cutoff(0.0) == 0);
    for (double x : {0.2, 1.0, 3.0, 10.0}) {
        const int M = sideband_cutoff(x);
        double s = 0.0;
        for (int m = -M; m <= M; ++m) s += bessel_j(m, x) * bessel_j(m, x);
        REQUIRE(1.0 - s <= 1e-12);
        REQUIRE(sideband_cutoff(x) >= sideband_cutoff(0.5 * x));
    }
    REQUIRE_THROWS_AS(sideband_cutoff(100.0), ConfigError);
    REQUIRE_THROWS_AS(make_pinem(-1.0, 0.0, omega), DomainError);
    REQUIRE_THROWS_AS(make_pinem(1.0, 0.0, 0.0), DomainError);
}

TEST_CASE("overlapping sidebands are rejected") {
    const PinemParams pin = make_pinem(1.5, 0.0, omega);
    REQUIRE_THROWS_AS(make_modulated(make_gaussian(beam, 0.1 * T21, 0.0), pin), ValidityError);
    REQUIRE_NOTHROW(make_modulated(make_gaussian(beam, 1.5 * T21, 0.0), pin));
    const UniformGrid narrow = make_grid(beam.p0, 3.0 * recoil_momentum(omega, beam), 4096);
    REQUIRE_THROWS_AS(apply_pinem(make_gaussian(beam, 1.5 * T21, 0.0), pin, narrow), ResolutionError);
}

TEST_CASE("zero PINEM coupling leaves the packet unchanged") {
    const GaussianQEW q = make_gaussian(beam, 1.5 * T21, 0.0);
    const UniformGrid g = sideband_grid();
    const GridWavefunction a = apply_pinem(q, make_pinem(0.0, 1.2, omega), g);
    const GridWavefunction b = momentum_amplitudes(q, g);
    for (int n = 0; n < g.N; ++n) REQUIRE(std::abs(a.amp[n] - b.amp[n]) < 1e-12 * std::abs(b.amp[g.N / 2]));
}

TEST_CASE("optimal bunching length") {
    const PinemParams pin = make_pinem(1.5, 0.0, omega);
    const BunchingOptimum o = optimal_bunching_length(pin, 1, zT);
    REQUIRE_THAT(o.L_D, WithinRel(0.0321850411794927, 1e-10));
    REQUIRE_THAT(o.b_max, WithinRel(0.5818652242815964, 1e-12));
    REQUIRE_FALSE(o.sub_saturated);
    REQUIRE_THAT(bunching_coefficient(pin, 1, o.L_D, zT), WithinRel(o.b_max, 1e-12));
    REQUIRE_THAT(implied_two_gL(o.L_D, 1, zT), WithinRel(1.5, 1e-12));
    const PinemParams strong = make_pinem(4.0, 0.0, omega);
    for (int m : {1, 2, 3}) {
        const BunchingOptimum om = optimal_bunching_length(strong, m, zT);
        REQUIRE_FALSE(om.sub_saturated);
        REQUIRE_THAT(bunching_coefficient(strong, m, om.L_D, zT), WithinRel(om.b_max, 1e-10));
        REQUIRE_THAT(implied_two_gL(om.L_D, m, zT), WithinRel(4.0, 1e-10));
        // No shorter drift reaches a larger coefficient.
        for (int k = 1; k < 200; ++k) REQUIRE(bunching_coefficient(strong, m, om.L_D * k / 200.0, zT) <= om.b_max + 1e-14);
    }
    REQUIRE_THROWS_AS(optimal_bunching_length(pin, 0, zT), DomainError);
}

TEST_CASE("weak modulation saturates at a quarter Talbot length") {
    const PinemParams pin = make_pinem(0.5, 0.0, omega);
    const BunchingOptimum o = optimal_bunching_length(pin, 1, zT);
    REQUIRE(o.sub_saturated);
    REQUIRE_THAT(o.L_D, WithinRel(zT / 4.0, 1e-15));
    REQUIRE_THAT(o.b_max, WithinRel(bessel_j(1, 1.0), 1e-14));
    REQUIRE(o.b_max < bessel_first_max(1).second);
}

TEST_CASE("bunching coefficients are periodic in the drift length") {
    const PinemParams pin = make_pinem(1.5, 0.0, omega);
    for (int m : {1, 2, 3})
        for (double L : {0.003, 0.02, 0.11}) {
            const double a = bunching_coefficient(pin, m, L, zT);
            REQUIRE_THAT(bunching_coefficient(pin, m, L + zT / (2.0 * m), zT), WithinAbs(a, 1e-12));
            REQUIRE_THAT(bunching_coefficient(pin, m, L + zT, zT), WithinAbs(a, 1e-12));
        }
    REQUIRE_THAT(bunching_coefficient(pin, 1, 0.0, zT), WithinAbs(0.0, 1e-15));
}

TEST_CASE("first maxima of the Bessel functions") {
    const auto [u1, j1] = bessel_first_max(1);
    REQUIRE_THAT(u1, WithinRel(1.841183781340659, 1e-12));
    REQUIRE_THAT(j1, WithinRel(0.5818652242815964, 1e-14));
    for (int m = 1; m <= 6; ++m) {
        const auto [u, j] = bessel_first_max(m);
        REQUIRE_THAT(bessel_j(m - 1, u) - bessel_j(m + 1, u), WithinAbs(0.0, 1e-14));
        REQUIRE(j > bessel_j(m, 0.99 * u));
        REQUIRE(j > bessel_j(m, 1.01 * u));
    }
    REQUIRE(bessel_j(-3, 2.0) == -bessel_j(3, 2.0));
    REQUIRE(bessel_j(3, -2.0) == -bessel_j(3, 2.0));
}

TEST_CASE("density at the PINEM plane is unmodulated") {
    const ModulatedQEW mod = make_modulated(make_gaussian(beam, 1.5 * T21, 0.0), make_pinem(1.5, 0.4, omega));
    std::vector<double> zeta;
    const std::vector<double> rho = grid_density(mod, sideband_grid(), zeta);
    const double sz = mod.base.sigma_z0();
    const double top = peak(rho);
    for (size_t j = 0; j < zeta.size(); ++j) {
        const double env = std::exp(-zeta[j] * zeta[j] / (2.0 * sz * sz)) / (std::sqrt(2.0 * pi) * sz);
        REQUIRE_THAT(rho[j], WithinAbs(env, 1e-5 * top));
    }
    const std::vector<double> series = density_profile(mod, zeta);
    for (size_t j = 0; j < zeta.size(); ++j) REQUIRE_THAT(series[j], WithinAbs(rho[j], 1e-5 * top));
}

TEST_CASE("sideband sum reproduces the drifted grid density up to a Talbot length") {
    const UniformGrid g = sideband_grid();
    for (double L : {0.005, 0.0321850411794927, 0.1, 0.5 * zT, zT}) {
        const ModulatedQEW mod = make_modulated(make_gaussian(beam, 1.5 * T21, L), make_pinem(1.5, 0.4, omega));
        std::vector<double> zeta;
        const std::vector<double> rho = grid_density(mod, g, zeta);
        const std::vector<double> exact = density_profile(mod, zeta, DensityModel::exact_sidebands);
        const double top = peak(rho);
        double err = 0.0;
        for (size_t j = 0; j < zeta.size(); ++j) err = std::max(err, std::abs(exact[j] - rho[j]));
        REQUIRE(err < 1e-9 * top);
    }
}

TEST_CASE("harmonic series agrees with the grid density at short drift") {
    const UniformGrid g = sideband_grid();
    for (double L : {0.0005, 0.001, 0.002}) {
        const ModulatedQEW mod = make_modulated(make_gaussian(beam, 1.5 * T21, L), make_pinem(1.5, 0.4, omega));
        std::vector<double> zeta;
        const std::vector<double> rho = grid_density(mod, g, zeta);
        const std::vector<double> series = density_profile(mod, zeta);
        const double top = peak(rho);
        double err = 0.0;
        for (size_t j = 0; j < zeta.size(); ++j) err = std::max(err, std::abs(series[j] - rho[j]));
        INFO("L = " << L << " err/top = " << err / top);
        REQUIRE(err < 1e-2 * top);
    }
}

TEST_CASE("harmonic series revives after a Talbot length") {
    const PinemParams pin = make_pinem(1.5, 0.4, omega);
    std::vector<double> zeta;
    for (int j = -400; j <= 400; ++j) zeta.push_back(j * 5e-9);
    for (double L : {0.004, 0.02, 0.0321850411794927}) {
        const ModulatedQEW a = make_modulated(make_gaussian(beam, 1.5 * T21, L), pin);
        const ModulatedQEW b = make_modulated(make_gaussian(beam, 1.5 * T21, L + zT), pin);
        const std::vector<double> ra = density_profile(a, zeta), rb = density_profile(b, zeta);
        const double sa = beam.v0 * broadened_sigma_t(a.base), sb = beam.v0 * broadened_sigma_t(b.base);
        for (size_t j = 0; j < zeta.size(); ++j) {
            const double ea = std::exp(-zeta[j] * zeta[j] / (2.0 * sa * sa)) / (std::sqrt(2.0 * pi) * sa);
            const double eb = std::exp(-zeta[j] * zeta[j] / (2.0 * sb * sb)) / (std::sqrt(2.0 * pi) * sb);
            REQUIRE_THAT(rb[j] / eb, WithinAbs(ra[j] / ea, 1e-9));
        }
    }
    // At a full Talbot length every harmonic vanishes.
    const ModulatedQEW t = make_modulated(make_gaussian(beam, 1.5 * T21, zT), pin);
    const std::vector<double> rt = density_profile(t, zeta);
    const double st = beam.v0 * broadened_sigma_t(t.base);
    for (size_t j = 0; j < zeta.size(); ++j)
        REQUIRE_THAT(rt[j], WithinAbs(std::exp(-zeta[j] * zeta[j] / (2.0 * st * st)) / (std::sqrt(2.0 * pi) * st), 1e-9 * rt[400]));
}

TEST_CASE("spectral bunching") {
    const ModulatedQEW mod = make_modulated(make_gaussian(beam, 1.5 * T21, 0.0321850411794927), make_pinem(1.5, 0.4, omega));
    REQUIRE_THAT(std::abs(spectral_bunching(mod, 0.0) - 1.0), WithinAbs(0.0, 1e-14));
    const double gD = decay_factors(mod.base, omega).Gamma_D;
    for (int m = 1; m <= 3; ++m) {
        const double L = mod.L_D();
        const double ref = bunching_coefficient(mod.pinem, m, L, zT) * std::exp(-0.5 * m * m * gD * gD);
        REQUIRE_THAT(std::abs(spectral_bunching(mod, m * omega)), WithinRel(ref, 1e-10));
    }

    // Direct Fourier sum of the grid density over arrival time t = −ζ/v0.
    std::vector<double> zeta;
    const std::vector<double> rho = grid_density(mod, sideband_grid(), zeta);
    const double dz = zeta[1] - zeta[0];
    for (double w : {0.3 * omega, omega, 1.5 * omega, 2.0 * omega, 0.97 * omega}) {
        cplx s{0.0, 0.0};
        for (size_t j = 0; j < zeta.size(); ++j) s += rho[j] * std::polar(1.0, -w * zeta[j] / beam.v0) * dz;
        REQUIRE(std::abs(s - spectral_bunching(mod, w)) < 1e-9);
    }
}

TEST_CASE("PINEM phase shifts the harmonics") {
    const GaussianQEW q = make_gaussian(beam, 1.5 * T21, 0.02);
    const ModulatedQEW a = make_modulated(q, make_pinem(1.5, 0.0, omega));
    for (double d : {0.3, 1.1, -2.0}) {
        const ModulatedQEW b = make_modulated(q, make_pinem(1.5, d, omega));
        for (int l = 1; l <= 3; ++l) {
            const cplx ra = spectral_bunching(a, l * omega), rb = spectral_bunching(b, l * omega);
            REQUIRE(std::abs(rb - ra * std::polar(1.0, -l * d)) < 1e-14);
        }
    }
}
