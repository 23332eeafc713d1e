#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace feberi {

// Complex 1-D DFT of fixed length backed by FFTW. Planning goes through a global
// mutex because the FFTW planner is not thread-safe; execution is.
class FFT {
public:
    explicit FFT(int n) : n_(n) {
        in_ = fftw_alloc_complex(static_cast<size_t>(n));
        out_ = fftw_alloc_complex(static_cast<size_t>(n));
        std::lock_guard<std::mutex> lock(planner_mutex());
        fwd_ = fftw_plan_dft_1d(n, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(n, in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    FFT(const FFT&) = delete;
    FFT& operator=(const FFT&) = delete;
    ~FFT() {
        {
            std::lock_guard<std::mutex> lock(planner_mutex());
            fftw_destroy_plan(fwd_);
            fftw_destroy_plan(bwd_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }

    int size() const { return n_; }

    // out_k = Σ_j x_j e^{−2πijk/n}
    void forward(const std::complex<double>* x, std::complex<double>* y) { run(fwd_, x, y); }
    // out_k = Σ_j x_j e^{+2πijk/n}
    void backward(const std::complex<double>* x, std::complex<double>* y) { run(bwd_, x, y); }

    void forward(std::vector<std::complex<double>>& v) { forward(v.data(), v.data()); }
    void backward(std::vector<std::complex<double>>& v) { backward(v.data(), v.data()); }

    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }

private:
    void run(fftw_plan p, const std::complex<double>* x, std::complex<double>* y) {
        auto* in = reinterpret_cast<std::complex<double>*>(in_);
        for (int i = 0; i < n_; ++i) in[i] = x[i];
        fftw_execute(p);
        const auto* out = reinterpret_cast<const std::complex<double>*>(out_);
        for (int i = 0; i < n_; ++i) y[i] = out[i];
    }

    int n_;
    fftw_complex* in_;
    fftw_complex* out_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

// One FFT object per (thread, size).
inline FFT& fft_for(int n) {
    thread_local std::map<int, std::unique_ptr<FFT>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<FFT>(n);
    return *slot;
}

}  // namespace feberi
