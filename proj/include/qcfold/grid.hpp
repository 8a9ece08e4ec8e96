// Uniform square grids, finite-difference Wirtinger derivatives, row parallelism.
#pragma once

#include <algorithm>
#include <complex>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace qcfold {

using cplx = std::complex<double>;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/**
 * N x N cell-centred samples over the square center +- half_width.
 * Row i is the y index, column j the x index.
 */
struct Grid2D {
    cplx center{0.0, 0.0};
    double half_width = 1.0;
    int n = 0;
    std::vector<cplx> values;

    Grid2D() = default;
    Grid2D(cplx c, double hw, int N) : center(c), half_width(hw), n(N), values(size_t(N) * N) {
        if (!is_pow2(N)) throw std::invalid_argument("grid size must be a power of two");
        if (!(hw > 0)) throw std::invalid_argument("grid half width must be positive");
    }

    double spacing() const { return 2.0 * half_width / n; }
    cplx point(int i, int j) const {
        double d = spacing();
        return center + cplx(-half_width + (j + 0.5) * d, -half_width + (i + 0.5) * d);
    }
    cplx& at(int i, int j) { return values[size_t(i) * n + j]; }
    const cplx& at(int i, int j) const { return values[size_t(i) * n + j]; }

    Grid2D like() const { return Grid2D(center, half_width, n); }
};

// worker count, capped by QCFOLD_THREADS
inline unsigned thread_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("QCFOLD_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, unsigned(cap));
    }
    return hw;
}

// runs body(i) for i in [0, count); static contiguous blocks, deterministic results
inline void parallel_for(int count, const std::function<void(int)>& body) {
    unsigned nt = std::min<unsigned>(thread_count(), std::max(1, count));
    if (nt <= 1 || count < 2) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nt);
    int chunk = (count + int(nt) - 1) / int(nt);
    for (unsigned t = 0; t < nt; ++t) {
        int lo = int(t) * chunk, hi = std::min(count, lo + chunk);
        pool.emplace_back([&, t, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errs[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

template <class F>
void fill_grid(Grid2D& g, F&& f) {
    parallel_for(g.n, [&](int i) {
        for (int j = 0; j < g.n; ++j) g.at(i, j) = f(g.point(i, j));
    });
}

struct Wirtinger {
    cplx d_z;
    cplx d_zbar;
};

inline double default_fd_step(cplx z) { return 1e-4 * std::max(1.0, std::abs(z)); }

// central differences: d_z = (f_x - i f_y)/2, d_zbar = (f_x + i f_y)/2
template <class F>
Wirtinger wirtinger_fd(F&& f, cplx z, double h) {
    if (!(h > 0)) throw std::invalid_argument("finite-difference step must be positive");
    const cplx I(0, 1);
    cplx fx = (f(z + h) - f(z - h)) / (2 * h);
    cplx fy = (f(z + I * h) - f(z - I * h)) / (2 * h);
    return {(fx - I * fy) * 0.5, (fx + I * fy) * 0.5};
}

template <class F>
Wirtinger wirtinger_fd(F&& f, cplx z) {
    return wirtinger_fd(std::forward<F>(f), z, default_fd_step(z));
}

}  // namespace qcfold
