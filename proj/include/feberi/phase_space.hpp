#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "feberi/errors.hpp"
#include "feberi/fourier.hpp"
#include "feberi/units_params.hpp"
#include "feberi/wavepacket.hpp"

namespace feberi {

// Rows follow the momentum grid, columns the co-moving time τ = ζ/v0.
struct WignerMap {
    BeamParams beam;
    UniformGrid grid;
    std::vector<double> time_axis;    // s
    std::vector<double> energy_axis;  // eV
    Eigen::MatrixXd values;           // per (m · kg·m/s)
    double dz = 0.0;

    double cell() const { return dz * grid.dp; }
    double total() const { return values.sum() * cell(); }
    double min_value() const { return values.minCoeff(); }
    // Energy (momentum) marginal, per kg·m/s.
    std::vector<double> momentum_marginal() const {
        std::vector<double> m(values.rows());
        for (Eigen::Index r = 0; r < values.rows(); ++r) m[r] = values.row(r).sum() * dz;
        return m;
    }
    // Position marginal, per metre, on ζ = v0·time_axis.
    std::vector<double> position_marginal() const {
        std::vector<double> m(values.cols());
        for (Eigen::Index c = 0; c < values.cols(); ++c) m[c] = values.col(c).sum() * grid.dp;
        return m;
    }
    // 2√det Σ of the (ζ, p) second moments; equals ħ for any pure Gaussian.
    double phase_space_area() const {
        double s = 0.0, mz = 0.0, mp = 0.0;
        for (Eigen::Index r = 0; r < values.rows(); ++r)
            for (Eigen::Index c = 0; c < values.cols(); ++c) {
                const double w = values(r, c);
                s += w;
                mz += w * zeta(c);
                mp += w * grid.offset(static_cast<int>(r));
            }
        mz /= s;
        mp /= s;
        double zz = 0.0, pp = 0.0, zp = 0.0;
        for (Eigen::Index r = 0; r < values.rows(); ++r)
            for (Eigen::Index c = 0; c < values.cols(); ++c) {
                const double w = values(r, c);
                const double dzv = zeta(c) - mz, dpv = grid.offset(static_cast<int>(r)) - mp;
                zz += w * dzv * dzv;
                pp += w * dpv * dpv;
                zp += w * dzv * dpv;
            }
        zz /= s;
        pp /= s;
        zp /= s;
        return 2.0 * std::sqrt(zz * pp - zp * zp);
    }
    double zeta(Eigen::Index c) const { return time_axis[c] * beam.v0; }
};

namespace detail {

inline WignerMap wigner_frame(const BeamParams& beam, const UniformGrid& g, int M) {
    if (M <= 0) M = g.N / 2;
    WignerMap w;
    w.beam = beam;
    w.grid = g;
    const double Z = 2.0 * pi * constants.hbar / g.dp;
    w.dz = Z / (2.0 * M);
    w.time_axis.resize(M);
    for (int j = 0; j < M; ++j) w.time_axis[j] = (j - M / 2) * w.dz / beam.v0;
    w.energy_axis.resize(g.N);
    for (int n = 0; n < g.N; ++n) w.energy_axis[n] = joule_to_eV(beam.v0 * g.offset(n));
    w.values = Eigen::MatrixXd::Zero(g.N, M);
    return w;
}

// Fills row n from the products r(k) = ρ(n−k, n+k); the position window is the central half of the box.
template <class Pair>
void wigner_rows(WignerMap& w, Pair pair, double scale) {
    const int N = w.grid.N;
    const int M = static_cast<int>(w.time_axis.size());
    FFT& fft = fft_for(M);
    std::vector<cplx> buf(M);
    const double pref = scale * w.grid.dp / (pi * constants.hbar);
    for (int n = 0; n < N; ++n) {
        std::fill(buf.begin(), buf.end(), cplx{0.0, 0.0});
        const int K = std::min(n, N - 1 - n);
        for (int k = -K; k <= K; ++k) {
            const cplx v = pair(n - k, n + k);
            const int idx = ((k % M) + M) % M;
            buf[idx] += (k % 2 == 0) ? v : -v;
        }
        fft.forward(buf);
        for (int j = 0; j < M; ++j) w.values(n, j) += pref * buf[j].real();
    }
}

inline void check_wigner_window(const GridWavefunction& g) {
    const std::vector<cplx> psi = to_position(g.grid, g.amp);
    const int N = g.grid.N;
    double peak = 0.0, out = 0.0;
    for (int j = 0; j < N; ++j) {
        const double d = std::norm(psi[j]);
        peak = std::max(peak, d);
        if (j < N / 4 || j >= 3 * N / 4) out = std::max(out, d);
    }
    if (out > 1e-12 * peak)
        throw ResolutionError("state extends beyond the central half of the position box; refine the momentum step");
}

}  // namespace detail

inline WignerMap wigner_pure(const GridWavefunction& g, int M = 0) {
    detail::check_wigner_window(g);
    WignerMap w = detail::wigner_frame(g.beam, g.grid, M);
    const auto& c = g.amp;
    detail::wigner_rows(w, [&](int a, int b) { return std::conj(c[b]) * c[a]; }, 1.0);
    return w;
}

// Incoherent sum of pure components, e.g. the electron states attached to each TLS level.
inline WignerMap wigner_components(const std::vector<GridWavefunction>& parts, int M = 0) {
    if (parts.empty()) throw ConfigError("no wavefunction components supplied");
    WignerMap w = detail::wigner_frame(parts.front().beam, parts.front().grid, M);
    for (const auto& p : parts) {
        detail::check_wigner_window(p);
        const auto& c = p.amp;
        detail::wigner_rows(w, [&](int a, int b) { return std::conj(c[b]) * c[a]; }, 1.0);
    }
    return w;
}

// ρ(p_a, p_b) as a density per (kg·m/s)², with Σ_n ρ(n, n)·Δp = 1.
inline WignerMap wigner_mixed(const Eigen::MatrixXcd& rho, const BeamParams& beam, const UniformGrid& g, int M = 0) {
    if (rho.rows() != g.N || rho.cols() != g.N) throw ConfigError("density matrix does not match the grid");
    const double scale = rho.cwiseAbs().maxCoeff();
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-12 * scale) throw ConfigError("density matrix is not Hermitian");
    const double tr = rho.diagonal().real().sum() * g.dp;
    if (std::abs(tr - 1.0) > 1e-8) throw ConfigError("density matrix trace differs from 1");
    WignerMap w = detail::wigner_frame(beam, g, M);
    detail::wigner_rows(w, [&](int a, int b) { return rho(a, b); }, 1.0);
    return w;
}

inline Eigen::MatrixXcd density_matrix(const std::vector<GridWavefunction>& parts) {
    const int N = parts.front().grid.N;
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(N, N);
    for (const auto& p : parts) {
        Eigen::Map<const Eigen::VectorXcd> v(p.amp.data(), N);
        r += v * v.adjoint();
    }
    return r;
}

inline WignerMap wigner_difference(const WignerMap& after, const WignerMap& before) {
    WignerMap d = after;
    d.values = after.values - before.values;
    return d;
}

enum class Regime { large_recoil, short_wavepacket, anomalous };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::large_recoil: return "large_recoil";
        case Regime::short_wavepacket: return "short_wavepacket";
        default: return "anomalous";
    }
}

// A waist packet with 1 < ω σ_t0 < π satisfies both conditions; the short-packet label takes precedence there.
inline Regime regime_classify(const GaussianQEW& q, const TLSParams& tls) {
    if (short_wavepacket(q, tls.omega21)) return Regime::short_wavepacket;
    if (large_recoil(q, tls.omega21)) return Regime::large_recoil;
    return Regime::anomalous;
}

}  // namespace feberi
