#include "pacs/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <tuple>

namespace pacs::fft {

namespace {

struct Key {
    std::vector<int> dims;
    int channels;
    bool forward;
    bool operator<(const Key& o) const {
        return std::tie(dims, channels, forward) < std::tie(o.dims, o.channels, o.forward);
    }
};

class PlanCache {
public:
    ~PlanCache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }

    fftw_plan get(const Key& key) {
        std::lock_guard lock(mu_);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        const int rank = static_cast<int>(key.dims.size());
        const std::size_t nr = real_size(key.dims) * key.channels;
        const std::size_t nc = half_size(key.dims) * key.channels;
        double* r = fftw_alloc_real(nr);
        fftw_complex* c = fftw_alloc_complex(nc);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fftw_plan p = key.forward
            ? fftw_plan_many_dft_r2c(rank, key.dims.data(), key.channels, r, nullptr, key.channels, 1, c, nullptr,
                                     key.channels, 1, flags)
            : fftw_plan_many_dft_c2r(rank, key.dims.data(), key.channels, c, nullptr, key.channels, 1, r, nullptr,
                                     key.channels, 1, flags);
        fftw_free(r);
        fftw_free(c);
        plans_.emplace(key, p);
        return p;
    }

private:
    std::mutex mu_;
    std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

}  // namespace

std::size_t real_size(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

std::size_t half_size(const std::vector<int>& dims) {
    if (dims.empty()) return 1;
    std::size_t n = 1;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) n *= static_cast<std::size_t>(dims[i]);
    return n * static_cast<std::size_t>(dims.back() / 2 + 1);
}

void r2c(const std::vector<int>& dims, int channels, const double* in, cplx* out) {
    if (dims.empty()) {
        for (int c = 0; c < channels; ++c) out[c] = in[c];
        return;
    }
    fftw_plan p = cache().get({dims, channels, true});
    fftw_execute_dft_r2c(p, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void c2r(const std::vector<int>& dims, int channels, cplx* in, double* out) {
    if (dims.empty()) {
        for (int c = 0; c < channels; ++c) out[c] = in[c].real();
        return;
    }
    fftw_plan p = cache().get({dims, channels, false});
    fftw_execute_dft_c2r(p, reinterpret_cast<fftw_complex*>(in), out);
}

}  // namespace pacs::fft
