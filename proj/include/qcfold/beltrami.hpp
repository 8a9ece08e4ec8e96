// Straightening of compactly supported Beltrami coefficients: Cauchy and
// Beurling transforms by FFT, Neumann iteration, deviation estimates, snapshots.
#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "field.hpp"
#include "graph_model.hpp"
#include "grid.hpp"
#include "tower.hpp"

namespace qcfold {

class PaddingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    fftw_complex* p = nullptr;
    size_t n = 0;
    explicit FftwBuffer(size_t count) : p(fftw_alloc_complex(count)), n(count) {
        std::memset(p, 0, sizeof(fftw_complex) * count);
    }
    ~FftwBuffer() { fftw_free(p); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    cplx* data() { return reinterpret_cast<cplx*>(p); }
};

// forward/backward M x M plans, shared per size
class Fft2 {
public:
    explicit Fft2(int M) : M_(M) {
        FftwBuffer a(size_t(M) * M), b(size_t(M) * M);
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fwd_ = fftw_plan_dft_2d(M, M, a.p, b.p, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(M, M, a.p, b.p, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Fft2() {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    int size() const { return M_; }
    void forward(FftwBuffer& in, FftwBuffer& out) const { fftw_execute_dft(fwd_, in.p, out.p); }
    // unnormalized inverse
    void backward(FftwBuffer& in, FftwBuffer& out) const { fftw_execute_dft(bwd_, in.p, out.p); }

    static std::shared_ptr<const Fft2> get(int M) {
        static std::mutex m;
        static std::map<int, std::shared_ptr<const Fft2>> cache;
        std::lock_guard<std::mutex> lock(m);
        auto& slot = cache[M];
        if (!slot) slot = std::make_shared<const Fft2>(M);
        return slot;
    }

private:
    int M_;
    fftw_plan fwd_{}, bwd_{};
};

inline int wrap_index(int k, int M) { return k < M / 2 ? k : k - M; }

}  // namespace detail

/**
 * Transform kernels for one grid geometry (N, spacing), zero-padded by `pad`.
 * Convolutions are aperiodic as long as the data sits inside the N x N block.
 */
class BeltramiOperators {
public:
    BeltramiOperators(int N, double spacing, int pad = 2)
        : N_(N), M_(pad * N), d_(spacing), fft_(detail::Fft2::get(pad * N)),
          cauchy_hat_(size_t(M_) * M_), pv_hat_(size_t(M_) * M_), mult_(size_t(M_) * M_) {
        if (pad < 2) throw std::invalid_argument("padding factor must be >= 2");
        detail::FftwBuffer kc(size_t(M_) * M_), kp(size_t(M_) * M_), out(size_t(M_) * M_);
        const double pi = std::numbers::pi;
        for (int i = 0; i < M_; ++i)
            for (int j = 0; j < M_; ++j) {
                cplx dz(detail::wrap_index(j, M_) * d_, detail::wrap_index(i, M_) * d_);
                size_t k = size_t(i) * M_ + j;
                if (dz == 0.0) continue;
                kc.data()[k] = d_ * d_ / (pi * dz);
                kp.data()[k] = -d_ * d_ / (pi * dz * dz);
            }
        fft_->forward(kc, out);
        std::copy(out.data(), out.data() + out.n, cauchy_hat_.begin());
        fft_->forward(kp, out);
        std::copy(out.data(), out.data() + out.n, pv_hat_.begin());
        for (int i = 0; i < M_; ++i)
            for (int j = 0; j < M_; ++j) {
                cplx xi(detail::wrap_index(j, M_), detail::wrap_index(i, M_));
                mult_[size_t(i) * M_ + j] = xi == 0.0 ? 0.0 : std::conj(xi) / xi;
            }
    }

    int n() const { return N_; }
    int padded() const { return M_; }

    // T h = (1/pi) int h(zeta)/(z - zeta) dA
    void cauchy(const std::vector<cplx>& h, std::vector<cplx>& out) const { apply(h, out, cauchy_hat_, false); }
    // S h by the multiplier conj(xi)/xi on the padded torus
    void beurling(const std::vector<cplx>& h, std::vector<cplx>& out) const { apply(h, out, mult_, false); }
    // S h by principal-value convolution with -1/(pi z^2)
    void beurling_pv(const std::vector<cplx>& h, std::vector<cplx>& out) const { apply(h, out, pv_hat_, false); }

    // padded-torus output of the multiplier (for norm checks)
    std::vector<cplx> beurling_padded(const std::vector<cplx>& h) const {
        std::vector<cplx> full;
        apply(h, full, mult_, true);
        return full;
    }

private:
    void apply(const std::vector<cplx>& h, std::vector<cplx>& out, const std::vector<cplx>& sym, bool full) const {
        detail::FftwBuffer a(size_t(M_) * M_), b(size_t(M_) * M_);
        for (int i = 0; i < N_; ++i)
            std::copy(h.begin() + size_t(i) * N_, h.begin() + size_t(i + 1) * N_, a.data() + size_t(i) * M_);
        fft_->forward(a, b);
        double inv = 1.0 / (double(M_) * M_);
        for (size_t k = 0; k < b.n; ++k) b.data()[k] *= sym[k] * inv;
        fft_->backward(b, a);
        if (full) {
            out.assign(a.data(), a.data() + a.n);
            return;
        }
        out.resize(size_t(N_) * N_);
        for (int i = 0; i < N_; ++i)
            std::copy(a.data() + size_t(i) * M_, a.data() + size_t(i) * M_ + N_, out.begin() + size_t(i) * N_);
    }

    int N_, M_;
    double d_;
    std::shared_ptr<const detail::Fft2> fft_;
    std::vector<cplx> cauchy_hat_, pv_hat_, mult_;
};

inline void check_padding(const Grid2D& h) {
    int n = h.n;
    for (int k = 0; k < n; ++k)
        if (h.at(0, k) != 0.0 || h.at(n - 1, k) != 0.0 || h.at(k, 0) != 0.0 || h.at(k, n - 1) != 0.0)
            throw PaddingError("field support touches the grid boundary");
}

inline Grid2D cauchy_transform(const Grid2D& h, int pad = 2) {
    check_padding(h);
    BeltramiOperators op(h.n, h.spacing(), pad);
    Grid2D out = h.like();
    op.cauchy(h.values, out.values);
    return out;
}

inline Grid2D beurling_transform(const Grid2D& h, int pad = 2) {
    check_padding(h);
    BeltramiOperators op(h.n, h.spacing(), pad);
    Grid2D out = h.like();
    op.beurling(h.values, out.values);
    return out;
}

inline Grid2D beurling_transform_pv(const Grid2D& h, int pad = 2) {
    check_padding(h);
    BeltramiOperators op(h.n, h.spacing(), pad);
    Grid2D out = h.like();
    op.beurling_pv(h.values, out.values);
    return out;
}

// relative change of the squared L2 norm under the padded multiplier, zero mode removed
inline double beurling_unitarity_defect(const Grid2D& h, int pad = 2) {
    BeltramiOperators op(h.n, h.spacing(), pad);
    auto full = op.beurling_padded(h.values);
    double in = 0, outn = 0;
    cplx mean = 0;
    for (auto v : h.values) {
        in += std::norm(v);
        mean += v;
    }
    double M2 = double(op.padded()) * op.padded();
    double expected = in - std::norm(mean) / M2;
    for (auto v : full) outn += std::norm(v);
    return std::fabs(outn - expected) / std::max(in, 1e-300);
}

// --- solver ---------------------------------------------------------------

struct RingSample {
    double radius;
    double max_dev;
};

struct QCMapApprox {
    Grid2D grid;                     // phi at cell centres
    cplx hydro_a{0, 0};
    std::vector<RingSample> profile; // sup |phi - z| on rings about the centre
    int iterations = 0;
    double last_change = 0;
    double residual = 0;             // L2 norm of h - mu (1 + S h)
    double min_jacobian = 0;
    bool truncated = false;
    std::string warning;
};

struct SolveOptions {
    int pad = 2;
};

inline double l2_area(const std::vector<cplx>& a, double d) {
    double s = 0;
    for (auto v : a) s += std::norm(v);
    return std::sqrt(s) * d;
}

inline QCMapApprox solve_beltrami(const BeltramiField& mu, double tol, int max_iter, const SolveOptions& opt = {}) {
    if (mu.sup_norm >= 1.0) throw DivergenceError("dilatation sup norm >= 1: Neumann series does not contract");
    check_padding(mu.grid);
    const Grid2D& g = mu.grid;
    int N = g.n;
    double d = g.spacing();
    BeltramiOperators op(N, d, opt.pad);
    size_t NN = size_t(N) * N;
    std::vector<cplx> h(NN, 0.0), Sh(NN, 0.0), hn(NN);
    QCMapApprox res;
    double prev = HUGE_VAL;
    int growth = 0;
    for (int it = 1; it <= max_iter; ++it) {
        op.beurling(h, Sh);
        double ch = 0;
        for (size_t k = 0; k < NN; ++k) {
            hn[k] = mu.grid.values[k] * (Sh[k] + 1.0);
            ch += std::norm(hn[k] - h[k]);
        }
        h.swap(hn);
        double change = std::sqrt(ch) * d;
        res.iterations = it;
        res.last_change = change;
        if (!std::isfinite(change)) throw DivergenceError("Neumann iteration produced non-finite values");
        growth = change > prev ? growth + 1 : 0;
        if (growth >= 5) throw DivergenceError("Neumann iteration is not contracting");
        prev = change;
        if (change < tol) break;
        if (it == max_iter) {
            res.truncated = true;
        }
    }
    op.beurling(h, Sh);
    std::vector<cplx> r(NN);
    for (size_t k = 0; k < NN; ++k) r[k] = h[k] - mu.grid.values[k] * (1.0 + Sh[k]);
    res.residual = l2_area(r, d);
    if (res.truncated) {
        std::ostringstream os;
        os << "max_iter reached; residual " << res.residual;
        res.warning = os.str();
    }
    // Jacobian |phi_z|^2 - |phi_zbar|^2 with phi_z = 1 + S h, phi_zbar = h
    res.min_jacobian = HUGE_VAL;
    for (size_t k = 0; k < NN; ++k)
        res.min_jacobian = std::min(res.min_jacobian, std::norm(1.0 + Sh[k]) - std::norm(h[k]));

    std::vector<cplx> Th;
    op.cauchy(h, Th);
    res.grid = g.like();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) res.grid.at(i, j) = g.point(i, j) + Th[size_t(i) * N + j];

    // hydrodynamic coefficient from the two outermost rings: phi - z ~ a / (z - c)
    cplx num = 0;
    double den = 0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            int ring = std::min({i, j, N - 1 - i, N - 1 - j});
            if (ring > 1) continue;
            cplx u = 1.0 / (g.point(i, j) - g.center);
            num += std::conj(u) * Th[size_t(i) * N + j];
            den += std::norm(u);
        }
    res.hydro_a = den > 0 ? num / den : 0.0;

    // radial profile in bins of two cells
    int bins = int(std::ceil(g.half_width * std::sqrt(2.0) / (2 * d))) + 1;
    std::vector<double> mx(size_t(bins), -1.0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            double rad = std::abs(g.point(i, j) - g.center);
            int b = int(rad / (2 * d));
            mx[size_t(b)] = std::max(mx[size_t(b)], std::abs(Th[size_t(i) * N + j]));
        }
    for (int b = 0; b < bins; ++b)
        if (mx[size_t(b)] >= 0) res.profile.push_back({(b + 0.5) * 2 * d, mx[size_t(b)]});
    return res;
}

struct DeviationReport {
    double eps_global = 0;
    double C_fit = 0;     // least squares C in dev(R) ~ C / R for R > R_fit
    double C_bound = 0;   // smallest C with dev(R) <= C / R for sampled R > R_fit
    double R_fit = 0;
};

// R_fit defaults to the support radius of the field that produced phi
inline DeviationReport deviation_profile(const QCMapApprox& phi, double R_fit) {
    DeviationReport rep;
    rep.R_fit = R_fit;
    for (const auto& s : phi.profile) rep.eps_global = std::max(rep.eps_global, s.max_dev);
    double num = 0, den = 0;
    for (const auto& s : phi.profile) {
        if (s.radius <= R_fit) continue;
        num += s.max_dev / s.radius;
        den += 1.0 / (s.radius * s.radius);
        rep.C_bound = std::max(rep.C_bound, s.max_dev * s.radius);
    }
    rep.C_fit = den > 0 ? num / den : 0.0;
    return rep;
}

// --- oracle fields ----------------------------------------------------------

// k (z/zbar) on r1 < |z| < r2, as cell averages
inline BeltramiField radial_stretch_field(int N, double half_width, double k, double r1, double r2 = 1.0,
                                          int supersample = 4) {
    Grid2D g(0.0, half_width, N);
    double d = g.spacing();
    auto mu = [&](cplx z) -> cplx {
        double t = std::abs(z);
        if (t <= r1 || t >= r2 || t == 0) return 0.0;
        return k * z / std::conj(z);
    };
    if (r2 - r1 < 4 * d) {
        deposit_annulus(g, 0.0, r1, r2, 0, [&](cplx u) { return k * u / std::conj(u); });
        for (auto& v : g.values) v /= d * d;
    } else {
        int ss = supersample;
        fill_grid(g, [&](cplx zc) {
            cplx acc = 0;
            for (int a = 0; a < ss; ++a)
                for (int b = 0; b < ss; ++b)
                    acc += mu(zc + cplx(((b + 0.5) / ss - 0.5) * d, ((a + 0.5) / ss - 0.5) * d));
            return acc / double(ss * ss);
        });
    }
    return BeltramiField(std::move(g));
}

// exact solution for radial_stretch_field with r2 = 1: z|z|^a on the annulus, a = 2k/(1-k)
inline cplx radial_stretch_exact(cplx z, double k, double r1) {
    double a = 2 * k / (1 - k);
    double t = std::abs(z);
    if (t >= 1) return z;
    if (t <= r1) return z * std::pow(r1, a);
    return z * std::pow(t, a);
}

// --- snapshots -----------------------------------------------------------------

// 32-byte header: "QCF" + kind, uint32 N, center (2 doubles), half_width
inline void write_snapshot(const std::string& path, const Grid2D& g, char kind,
                           const std::map<std::string, std::string>& meta = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    char magic[4] = {'Q', 'C', 'F', kind};
    uint32_t n = uint32_t(g.n);
    double hdr[3] = {g.center.real(), g.center.imag(), g.half_width};
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    out.write(reinterpret_cast<const char*>(g.values.data()), std::streamsize(g.values.size() * sizeof(cplx)));
    std::ofstream side(path + ".meta");
    side << std::setprecision(17);
    side << "kind = " << kind << "\nn = " << g.n << "\ncenter = " << g.center.real() << " " << g.center.imag()
         << "\nhalf_width = " << g.half_width << "\n";
    for (const auto& [k, v] : meta) side << k << " = " << v << "\n";
}

inline Grid2D read_snapshot(const std::string& path, char* kind = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    char magic[4];
    uint32_t n;
    double hdr[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!in || magic[0] != 'Q' || magic[1] != 'C' || magic[2] != 'F') throw std::runtime_error("bad snapshot header");
    if (kind) *kind = magic[3];
    Grid2D g(cplx(hdr[0], hdr[1]), hdr[2], int(n));
    in.read(reinterpret_cast<char*>(g.values.data()), std::streamsize(g.values.size() * sizeof(cplx)));
    if (!in) throw std::runtime_error("truncated snapshot");
    return g;
}

}  // namespace qcfold
