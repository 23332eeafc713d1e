#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "feberi/analytic.hpp"
#include "feberi/errors.hpp"
#include "feberi/fourier.hpp"
#include "feberi/units_params.hpp"
#include "feberi/wavepacket.hpp"

namespace feberi {

struct MomentumGrid {
    UniformGrid grid;
    double P_cutoff = 0.0;
    std::vector<std::string> warnings;
};

// Offsets (1 − 2n/N)·P for n = 0..N−1, the uncentred layout; the solver itself uses the centred grid.
inline std::vector<double> uncentred_offsets(double P_cutoff, int N) {
    std::vector<double> v(N);
    for (int n = 0; n < N; ++n) v[n] = (1.0 - 2.0 * n / N) * P_cutoff;
    return v;
}

inline MomentumGrid build_grid(double P_cutoff, int N, const BeamParams& beam, double omega21,
                               std::optional<double> sigma_p = std::nullopt) {
    const double delta = recoil_momentum(omega21, beam);
    if (!(P_cutoff > delta)) throw ConfigError("numeric.P_cutoff must exceed the recoil momentum hbar*omega21/v0");
    if (N < 512 || N % 2 != 0) throw ConfigError("numeric.N must be even and at least 512");
    MomentumGrid g{make_grid(beam.p0, P_cutoff, N), P_cutoff, {}};
    if (sigma_p && g.grid.dp > *sigma_p / 4.0)
        g.warnings.push_back("momentum step exceeds sigma_p/4; increase numeric.N");
    return g;
}

inline double default_cutoff_gaussian(double delta, double sigma_p) { return 2.0 * delta + 8.0 * sigma_p; }

inline double default_cutoff_modulated(int m_max, double delta_L, double delta, double sigma_p) {
    return m_max * delta_L + delta + 8.0 * sigma_p;
}

enum class KernelMode { closed_form, quadrature };

// Toeplitz generators: k21[j + N − 1] = M̃21(jΔp) for j = −(N−1)..N−1, likewise k12.
struct KernelMatrix {
    UniformGrid grid;
    KernelMode mode = KernelMode::closed_form;
    std::vector<cplx> k21, k12;

    cplx at21(int m, int n) const { return k21[m - n + grid.N - 1]; }
    cplx at12(int m, int n) const { return k12[m - n + grid.N - 1]; }
};

// Field transform by direct quadrature of the Coulomb field profile.
inline FieldSpectrum field_transform_quadrature(double k, double r, const BeamParams& b) {
    const double e = constants.elementary_charge, eps0 = constants.vacuum_permittivity;
    const double x = std::abs(k) * r / b.gamma;
    double fperp = 0.0, fz = 0.0;
    if (x == 0.0) {
        boost::math::quadrature::exp_sinh<double> es;
        fperp = 2.0 * es.integrate([](double u) { return std::pow(1.0 + u * u, -1.5); });
    } else {
        // Ooura's double-exponential rule for ∫_0^∞ f(u) cos(xu) du and ∫_0^∞ f(u) sin(xu) du.
        thread_local boost::math::quadrature::ooura_fourier_cos<double> fc(1e-13);
        thread_local boost::math::quadrature::ooura_fourier_sin<double> fs(1e-13);
        fperp = 2.0 * fc.integrate([](double u) { return std::pow(1.0 + u * u, -1.5); }, x).first;
        fz = 2.0 * fs.integrate([](double u) { return u * std::pow(1.0 + u * u, -1.5); }, x).first;
    }
    const double sgn = k > 0.0 ? 1.0 : (k < 0.0 ? -1.0 : 0.0);
    return {cplx{0.0, -sgn * e * fz / (4.0 * pi * eps0 * b.gamma * r)}, cplx{e * fperp / (4.0 * pi * eps0 * r), 0.0}};
}

inline cplx kernel_element(const Dipole& mu, const FieldSpectrum& f) {
    return (mu.z * f.z + mu.perp * f.perp) / (2.0 * pi * constants.hbar);
}

inline KernelMatrix build_kernel(const UniformGrid& g, const TLSParams& tls, const BeamParams& beam, const Dipole& mu,
                                 KernelMode mode = KernelMode::closed_form) {
    if (!(tls.r_perp0 > 0.0)) throw DomainError("tls.r_perp0_m must be positive");
    KernelMatrix K{g, mode, std::vector<cplx>(2 * g.N - 1), std::vector<cplx>(2 * g.N - 1)};
    const Dipole mu12{std::conj(mu.z), std::conj(mu.perp)};
    for (int j = -(g.N - 1); j <= g.N - 1; ++j) {
        const double k = j * g.dp / constants.hbar;
        const FieldSpectrum f = mode == KernelMode::closed_form ? field_transform(k, tls.r_perp0, beam)
                                                                : field_transform_quadrature(k, tls.r_perp0, beam);
        if (!std::isfinite(f.z.imag()) || !std::isfinite(f.perp.real()))
            throw NumericError("kernel quadrature did not converge");
        K.k21[j + g.N - 1] = kernel_element(mu, f);
        K.k12[j + g.N - 1] = kernel_element(mu12, f);
    }
    return K;
}

struct JointAmplitudes {
    std::vector<cplx> C1, C2;
};

inline double joint_norm(const JointAmplitudes& a, double dp) {
    double s = 0.0;
    for (size_t i = 0; i < a.C1.size(); ++i) s += std::norm(a.C1[i]) + std::norm(a.C2[i]);
    return s * dp;
}

// Initial joint state with the drift delay moved into the TLS phase, so the packet passes z = 0 at t = 0.
inline JointAmplitudes prepare_joint(const GridWavefunction& w, const TLSQubit& q, double omega21) {
    const double c = std::cos(0.5 * q.theta), s = std::sin(0.5 * q.theta);
    const cplx e = std::polar(c, q.phi - omega21 * w.linear_delay);
    JointAmplitudes a{w.amp, w.amp};
    for (auto& v : a.C1) v *= s;
    for (auto& v : a.C2) v *= e;
    return a;
}

struct EvolutionTrace {
    std::vector<double> times, P2, norm;
    JointAmplitudes final;
    double dt = 0.0;
};

enum class Integrator { euler, rk4 };

struct SolverOptions {
    Integrator method = Integrator::rk4;
    double dt = 0.0;  // zero selects T21/200
    int record_every = 1;
    double norm_tol = 1e-6;
    bool check_norm = true;
};

namespace detail {

// y = T x for the Toeplitz matrix generated by k (length 2N−1), via a 2N circulant embedding.
class ToeplitzOperator {
public:
    ToeplitzOperator(const std::vector<cplx>& k, int N) : N_(N), fft_(2 * N), spec_(2 * N), buf_(2 * N) {
        std::vector<cplx> c(2 * N, cplx{0.0, 0.0});
        for (int d = 0; d < N; ++d) c[d] = k[d + N - 1];
        for (int d = 1; d < N; ++d) c[2 * N - d] = k[-d + N - 1];
        fft_.forward(c.data(), spec_.data());
    }
    void apply(const std::vector<cplx>& x, std::vector<cplx>& y) {
        std::fill(buf_.begin(), buf_.end(), cplx{0.0, 0.0});
        std::copy(x.begin(), x.end(), buf_.begin());
        fft_.forward(buf_);
        for (int i = 0; i < 2 * N_; ++i) buf_[i] *= spec_[i];
        fft_.backward(buf_);
        const double s = 1.0 / (2.0 * N_);
        for (int i = 0; i < N_; ++i) y[i] = buf_[i] * s;
    }

private:
    int N_;
    FFT fft_;
    std::vector<cplx> spec_, buf_;
};

}  // namespace detail

// Integrates iħ Ċ_i(p) = Σ_{p'} Δp M̃_ij(p − p') e^{i(E_p − E_p')t/ħ} e^{∓iω21 t} C_j(p')
// (upper sign for i = 2) with the full quadratic dispersion in E_p.
inline EvolutionTrace evolve(const JointAmplitudes& initial, const KernelMatrix& K, const BeamParams& beam,
                             double omega21, double t0, double t1, const SolverOptions& opt = {}) {
    const UniformGrid& g = K.grid;
    const int N = g.N;
    if (static_cast<int>(initial.C1.size()) != N || static_cast<int>(initial.C2.size()) != N)
        throw ConfigError("initial amplitudes do not match the kernel grid");
    if (!(t1 > t0)) throw ConfigError("evolution window must have t1 > t0");
    const double dt = opt.dt > 0.0 ? opt.dt : (2.0 * pi / omega21) / 200.0;
    const int steps = static_cast<int>(std::ceil((t1 - t0) / dt));
    const double h = (t1 - t0) / steps;

    detail::ToeplitzOperator T21(K.k21, N), T12(K.k12, N);
    std::vector<double> En(N);
    for (int n = 0; n < N; ++n) En[n] = energy_offset(beam, g.offset(n)) / constants.hbar;
    const cplx pref = g.dp / (I * constants.hbar);

    std::vector<cplx> ph(N), x(N), y(N);
    auto rhs = [&](double t, const JointAmplitudes& a, JointAmplitudes& d) {
        for (int n = 0; n < N; ++n) ph[n] = std::polar(1.0, En[n] * t);
        const cplx w2 = pref * std::polar(1.0, -omega21 * t);
        const cplx w1 = pref * std::polar(1.0, omega21 * t);
        for (int n = 0; n < N; ++n) x[n] = std::conj(ph[n]) * a.C1[n];
        T21.apply(x, y);
        for (int n = 0; n < N; ++n) d.C2[n] = w2 * ph[n] * y[n];
        for (int n = 0; n < N; ++n) x[n] = std::conj(ph[n]) * a.C2[n];
        T12.apply(x, y);
        for (int n = 0; n < N; ++n) d.C1[n] = w1 * ph[n] * y[n];
    };

    EvolutionTrace tr;
    tr.dt = h;
    JointAmplitudes a = initial;
    JointAmplitudes k1{std::vector<cplx>(N), std::vector<cplx>(N)}, k2 = k1, k3 = k1, k4 = k1, tmp = k1;
    auto record = [&](double t) {
        double p2 = 0.0;
        for (const auto& v : a.C2) p2 += std::norm(v);
        tr.times.push_back(t);
        tr.P2.push_back(p2 * g.dp);
        tr.norm.push_back(joint_norm(a, g.dp));
    };
    record(t0);
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + s * h;
        if (opt.method == Integrator::euler) {
            rhs(t, a, k1);
            for (int n = 0; n < N; ++n) {
                a.C1[n] += h * k1.C1[n];
                a.C2[n] += h * k1.C2[n];
            }
        } else {
            auto axpy = [&](const JointAmplitudes& k, double c) {
                for (int n = 0; n < N; ++n) {
                    tmp.C1[n] = a.C1[n] + c * k.C1[n];
                    tmp.C2[n] = a.C2[n] + c * k.C2[n];
                }
            };
            rhs(t, a, k1);
            axpy(k1, 0.5 * h);
            rhs(t + 0.5 * h, tmp, k2);
            axpy(k2, 0.5 * h);
            rhs(t + 0.5 * h, tmp, k3);
            axpy(k3, h);
            rhs(t + h, tmp, k4);
            for (int n = 0; n < N; ++n) {
                a.C1[n] += h / 6.0 * (k1.C1[n] + 2.0 * k2.C1[n] + 2.0 * k3.C1[n] + k4.C1[n]);
                a.C2[n] += h / 6.0 * (k1.C2[n] + 2.0 * k2.C2[n] + 2.0 * k3.C2[n] + k4.C2[n]);
            }
        }
        if ((s + 1) % std::max(1, opt.record_every) == 0 || s + 1 == steps) record(t0 + (s + 1) * h);
    }
    tr.final = a;
    if (opt.check_norm) {
        const double drift = std::abs(tr.norm.back() - tr.norm.front());
        if (drift > opt.norm_tol)
            throw NumericError("norm drift " + std::to_string(drift) + " exceeds tolerance; retry with dt <= " +
                               std::to_string(h / 2.0) + " s or the rk4 integrator");
    }
    return tr;
}

// Half-width of the passage window: the packet and the field tail both clear the TLS.
inline double passage_half_window(const GridWavefunction& w, const TLSParams& tls) {
    const PositionProfile prof = position_profile(w);
    const double extent = std::abs(prof.mean()) + 6.0 * prof.stddev();
    return (extent + 50.0 * tls.r_perp0 * w.beam.gamma) / w.beam.v0;
}

struct NumericSpectrum {
    BeamParams beam;
    UniformGrid grid;
    std::vector<double> rho_initial, rho_final, delta;

    double integral_delta() const {
        double s = 0.0;
        for (double v : delta) s += v;
        return s * grid.dp;
    }
    // ∫(E_p − E0) Δρ dp in joules; full selects the quadratic dispersion.
    double energy_change(bool full = false) const {
        double s = 0.0;
        for (int n = 0; n < grid.N; ++n) {
            const double q = grid.offset(n);
            s += (full ? energy_offset(beam, q) : beam.v0 * q) * delta[n];
        }
        return s * grid.dp;
    }
};

inline NumericSpectrum final_spectrum(const EvolutionTrace& tr, const GridWavefunction& initial) {
    NumericSpectrum s{initial.beam, initial.grid, density(initial), {}, {}};
    const int N = initial.grid.N;
    s.rho_final.resize(N);
    s.delta.resize(N);
    for (int n = 0; n < N; ++n) {
        s.rho_final[n] = std::norm(tr.final.C1[n]) + std::norm(tr.final.C2[n]);
        s.delta[n] = s.rho_final[n] - s.rho_initial[n];
    }
    return s;
}

struct TransitionTrace {
    std::vector<double> times, P2, rate;
    std::vector<double> jump_times;
    double mean_spacing = 0.0;
    double delta_P2 = 0.0;
};

// Jumps are local maxima of dP2/dt exceeding `threshold` times the largest rate.
inline TransitionTrace transition_trace(const EvolutionTrace& tr, double threshold = 0.2) {
    TransitionTrace out;
    out.times = tr.times;
    out.P2 = tr.P2;
    const size_t n = tr.times.size();
    out.rate.assign(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i)
        out.rate[i] = (tr.P2[i + 1] - tr.P2[i - 1]) / (tr.times[i + 1] - tr.times[i - 1]);
    if (n > 1) out.delta_P2 = tr.P2.back() - tr.P2.front();
    double peak = 0.0;
    for (double r : out.rate) peak = std::max(peak, r);
    for (size_t i = 1; i + 1 < n; ++i)
        if (out.rate[i] > out.rate[i - 1] && out.rate[i] >= out.rate[i + 1] && out.rate[i] > threshold * peak)
            out.jump_times.push_back(tr.times[i]);
    if (out.jump_times.size() > 1)
        out.mean_spacing = (out.jump_times.back() - out.jump_times.front()) / (out.jump_times.size() - 1);
    return out;
}

struct PassageSetup {
    KernelMatrix kernel;
    JointAmplitudes initial;
    double t0 = 0.0, t1 = 0.0;
};

inline PassageSetup setup_passage(const GridWavefunction& w, const TLSQubit& q, const TLSParams& tls,
                                  const Dipole& mu, KernelMode mode = KernelMode::closed_form) {
    const double W = passage_half_window(w, tls);
    return {build_kernel(w.grid, tls, w.beam, mu, mode), prepare_joint(w, q, tls.omega21), -W, W};
}

}  // namespace feberi
