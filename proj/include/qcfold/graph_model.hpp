// Half-strip and disk geometry, the model map g, its real-axis behaviour and
// the assembled dilatation field.
#pragma once

#include <cmath>
#include <complex>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "disk_maps.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "tower.hpp"

namespace qcfold {

inline constexpr double kPi = std::numbers::pi;

enum class Region { strip, disk, folding, outside };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::strip: return "strip";
        case Region::disk: return "disk";
        case Region::folding: return "folding zone";
        case Region::outside: return "outside strip and disks";
    }
    return "?";
}

class UnsupportedRegion : public std::runtime_error {
public:
    UnsupportedRegion(cplx z, Region r)
        : std::runtime_error(describe(z, r)), point(z), region(r) {}
    cplx point;
    Region region;

private:
    static std::string describe(cplx z, Region r) {
        std::ostringstream os;
        os << std::setprecision(10) << "unsupported region (" << region_name(r) << ") at "
           << z.real() << (z.imag() < 0 ? "-" : "+") << std::fabs(z.imag()) << "i";
        if (r == Region::folding) os << ": quasiregular interpolation near the graph is not modelled";
        return os.str();
    }
};

// --- vertices -----------------------------------------------------------

struct Vertex {
    long long n = 0;
    double a = 0;         // abscissa, lambda cosh(a) = k pi
    double k = 0;         // integer multiplier when exact
    double log_k = 0;
    bool k_exact = true;  // false once k no longer fits exactly in a double
};

inline Vertex solve_vertex(double lambda, long long n) {
    if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
    if (n < 1) throw DomainError("vertex index starts at 1");
    Vertex v;
    v.n = n;
    double npi = double(n) * kPi;
    double target = npi < kExpMax ? lambda * std::cosh(npi) / kPi : HUGE_VAL;
    if (target < 4503599627370496.0) {   // 2^52
        double best = HUGE_VAL;
        for (double k : {std::floor(target), std::ceil(target)}) {
            double arg = k * kPi / lambda;
            if (arg < 1) continue;
            double a = std::acosh(arg);
            if (std::fabs(a - npi) < best) {
                best = std::fabs(a - npi);
                v.a = a;
                v.k = k;
            }
        }
        if (best == HUGE_VAL) throw std::logic_error("no admissible vertex multiplier");
        v.log_k = std::log(v.k);
        v.k_exact = true;
    } else {
        // |a - n pi| <= pi / (2 lambda sinh(n pi)), below double resolution of n pi
        v.a = npi;
        v.log_k = std::log(lambda / kPi) + npi - std::numbers::ln2 + std::log1p(std::exp(-2 * npi));
        v.k = std::exp(std::min(v.log_k, kExpMax));
        v.k_exact = false;
    }
    return v;
}

struct GraphModel {
    double lambda = 20;
    std::vector<Vertex> vertices;   // vertices[n-1]

    long long count() const { return (long long)vertices.size(); }
    Vertex vertex(long long n) const {
        if (n >= 1 && n <= count()) return vertices[size_t(n - 1)];
        return solve_vertex(lambda, n);
    }
    double a(long long n) const { return vertex(n).a; }
    cplx z(long long n) const { return {a(n), kPi}; }
};

inline GraphModel solve_vertices(double lambda, long long count) {
    GraphModel g;
    g.lambda = lambda;
    g.vertices.reserve(size_t(count));
    for (long long n = 1; n <= count; ++n) g.vertices.push_back(solve_vertex(lambda, n));
    return g;
}

// --- sigma --------------------------------------------------------------

enum class SigmaMode { interior, boundary };
enum class Abutment { d_component, r_components };

inline cplx mobius_M(cplx u) {
    const cplx I(0, 1);
    return I * (u - I) / (u + I);
}
inline cplx mobius_M_inv(cplx u) {
    const cplx I(0, 1);
    return (1.0 - I * u) / (u - I);
}

inline cplx sigma_eval(cplx z, SigmaMode mode, Abutment ab = Abutment::r_components) {
    if (mode == SigmaMode::interior) {
        if (!(z.real() > 2 * kPi)) throw UnsupportedRegion(z, Region::folding);
        return std::exp(z);
    }
    if (std::fabs(z.real()) > 1e-12 * std::max(1.0, std::abs(z)))
        throw DomainError("boundary mode needs Re z = 0");
    cplx u = std::polar(1.0, z.imag());
    if (ab == Abutment::d_component) return u;
    return u.imag() >= 0 ? mobius_M(u) : mobius_M_inv(u);
}

// --- model map ----------------------------------------------------------

struct ModelParams {
    GraphModel graph;
    DiskMapParams base_disk{20, 0.0, 0.0};      // used where no parameters are assigned
    std::map<long long, DiskMapParams> disks;   // assigned (w, delta, m) per disk index

    const DiskMapParams& disk(long long n) const {
        auto it = disks.find(n);
        return it == disks.end() ? base_disk : it->second;
    }
};

struct Located {
    Region region;
    long long n = 0;   // disk index when region == disk
    cplx canonical;    // representative with x >= 0, y >= 0
    bool lower = false;
};

inline Located locate(cplx z, const GraphModel& g) {
    Located L;
    // g(-z) = g(z) first, then g(conj z) = conj g(z)
    cplx z1 = z.real() < 0 ? -z : z;
    L.lower = z1.imag() < 0;
    L.canonical = L.lower ? std::conj(z1) : z1;
    cplx c = L.canonical;
    long long n0 = (long long)std::llround(c.real() / kPi);
    for (long long n = std::max(1LL, n0 - 1); n <= n0 + 1; ++n) {
        if (std::abs(c - g.z(n)) <= 1.0) {
            L.region = Region::disk;
            L.n = n;
            return L;
        }
    }
    if (c.imag() < kPi / 2 && c.real() > 0) {
        double re = g.lambda * std::sinh(c.real()) * std::cos(c.imag());
        L.region = re > 2 * kPi ? Region::strip : Region::folding;
        return L;
    }
    L.region = Region::outside;
    return L;
}

// log of g in the strip: lambda sinh(z) with imaginary part reduced
inline LogComplex model_g_log(cplx z, const ModelParams& p) {
    Located L = locate(z, p.graph);
    if (L.region != Region::strip) throw UnsupportedRegion(z, L.region);
    cplx s = p.graph.lambda * std::sinh(L.canonical);
    LogComplex r(s.real(), s.imag());
    if (L.lower) r.arg = -r.arg;
    return r;
}

inline cplx model_g(cplx z, const ModelParams& p) {
    Located L = locate(z, p.graph);
    cplx v;
    switch (L.region) {
        case Region::strip:
            v = sigma_eval(p.graph.lambda * std::sinh(L.canonical), SigmaMode::interior);
            break;
        case Region::disk:
            v = composed_disk_map(L.canonical - p.graph.z(L.n), p.disk(L.n));
            break;
        default:
            throw UnsupportedRegion(z, L.region);
    }
    return L.lower ? std::conj(v) : v;
}

// dilatation of g at z; zero in the strip
inline cplx model_dilatation(cplx z, const ModelParams& p) {
    Located L = locate(z, p.graph);
    if (L.region == Region::strip) return 0.0;
    if (L.region != Region::disk) throw UnsupportedRegion(z, L.region);
    cplx u = L.canonical - p.graph.z(L.n);
    if (std::abs(u) >= 1.0) return 0.0;
    cplx mu = composed_dilatation(u, p.disk(L.n));
    return L.lower ? std::conj(mu) : mu;
}

// --- real axis ----------------------------------------------------------

inline LogComplex g_real_derivative(double x, double lambda) {
    double s = lambda * std::sinh(x);
    if (!(s > 2 * kPi)) throw UnsupportedRegion(cplx(x, 0), Region::folding);
    return LogComplex(std::log(lambda * std::cosh(x)) + s, 0.0);
}

// ln(lambda sinh x) for x > 0 in tower form; also equals ln(lambda cosh x) to double precision once x > 20
inline TowerReal log_lambda_sinh(const TowerReal& x, double lambda) {
    if (x.depth == 0 && x.mantissa < 20) return TowerReal(0, std::log(lambda * std::sinh(x.mantissa)));
    return tower_add_const(x, std::log(lambda / 2));
}
inline TowerReal log_lambda_cosh(const TowerReal& x, double lambda) {
    if (x.depth == 0 && x.mantissa < 20) return TowerReal(0, std::log(lambda * std::cosh(x.mantissa)));
    return tower_add_const(x, std::log(lambda / 2));
}

// g(x) = exp(lambda sinh x) on the real axis
inline TowerReal g_real_tower(const TowerReal& x, double lambda) {
    return tower_exp_lowered(tower_exp_lowered(log_lambda_sinh(x, lambda)));
}

// ln g'(x) = ln(lambda cosh x) + lambda sinh x
inline TowerReal log_g_prime_tower(const TowerReal& x, double lambda) {
    return tower_add(log_lambda_cosh(x, lambda), tower_exp_lowered(log_lambda_sinh(x, lambda)));
}

inline std::vector<TowerReal> g_orbit_real(double x0, int steps, double lambda) {
    std::vector<TowerReal> orbit{TowerReal(0, x0)};
    for (int s = 0; s < steps; ++s) orbit.push_back(g_real_tower(orbit.back(), lambda));
    return orbit;
}

// real inverse branch: asinh(ln(y)/lambda)
inline double g_inverse_real(double y, double lambda) {
    if (!(y > 1)) throw DomainError("real inverse needs y > 1");
    return std::asinh(std::log(y) / lambda);
}

// --- dilatation sequence -----------------------------------------------------

inline double mu_sequence(double abs_zn) {
    if (!(abs_zn > 10)) throw DomainError("mu_sequence needs |z_n| > 10");
    return std::min(0.125, 1.0 / (abs_zn - 2.0));
}

// tower-sized |z_n|: mu = 1/(|z_n| - 2) to first order
inline Scaled mu_sequence_scaled(const TowerReal& abs_zn) {
    double v = abs_zn.to_double();
    if (std::isfinite(v) && v < 1e15) return Scaled(mu_sequence(v));
    return Scaled::from_neglog(tower_log(abs_zn));
}

// --- field assembly -----------------------------------------------------

enum class SampleMode { point, supersample, deposit };

struct FieldOptions {
    bool zero_fill = true;
    SampleMode mode = SampleMode::deposit;
    int supersample = 4;
};

struct FieldResult {
    BeltramiField field;
    long long unsupported_cells = 0;
    std::string warning;
};



inline FieldResult dilatation_field(const Grid2D& window, const ModelParams& p, const FieldOptions& opt = {}) {
    FieldResult res;
    Grid2D g = window.like();
    double d = g.spacing();
    if (opt.mode == SampleMode::deposit) {
        // disks whose copies meet the window
        double xlo = g.center.real() - g.half_width - 1, xhi = g.center.real() + g.half_width + 1;
        double ylo = g.center.imag() - g.half_width - 1, yhi = g.center.imag() + g.half_width + 1;
        for (int sx : {1, -1})
            for (int sy : {1, -1}) {
                double cy = sy * kPi;
                if (cy < ylo || cy > yhi) continue;
                double ax_lo = sx > 0 ? xlo : -xhi, ax_hi = sx > 0 ? xhi : -xlo;
                long long n_lo = std::max(1LL, (long long)std::floor(ax_lo / kPi) - 1);
                long long n_hi = (long long)std::ceil(ax_hi / kPi) + 1;
                for (long long n = n_lo; n <= n_hi; ++n) {
                    double a = p.graph.a(n);
                    if (a < ax_lo || a > ax_hi) continue;
                    const DiskMapParams& dp = p.disk(n);
                    // local coordinate of the copy, reduced to the canonical disk
                    bool lower = sx * sy < 0;
                    double flip = sx;
                    deposit_annulus(g, cplx(sx * a, cy), composed_support_inner_radius(dp), 1.0,
                                  double(dp.m), [&](cplx u) {
                                      cplx v = flip * u;
                                      if (lower) return std::conj(composed_dilatation(std::conj(v), dp));
                                      return composed_dilatation(v, dp);
                                  });
                }
            }
        for (auto& v : g.values) v /= d * d;
    }
    std::vector<long long> bad(size_t(g.n), 0);
    int ss = opt.mode == SampleMode::supersample ? std::max(1, opt.supersample) : 1;
    parallel_for(g.n, [&](int i) {
        for (int j = 0; j < g.n; ++j) {
            cplx zc = g.point(i, j);
            Located L = locate(zc, p.graph);
            bool supported = L.region == Region::strip || L.region == Region::disk;
            if (!supported) {
                ++bad[size_t(i)];
                if (!opt.zero_fill) throw UnsupportedRegion(zc, L.region);
                if (opt.mode != SampleMode::deposit) g.at(i, j) = 0.0;
                continue;
            }
            if (opt.mode == SampleMode::deposit) continue;
            cplx acc = 0;
            for (int a = 0; a < ss; ++a)
                for (int b = 0; b < ss; ++b) {
                    cplx z = zc + cplx(((b + 0.5) / ss - 0.5) * d, ((a + 0.5) / ss - 0.5) * d);
                    Located M = locate(z, p.graph);
                    if (M.region == Region::disk || M.region == Region::strip) acc += model_dilatation(z, p);
                }
            g.at(i, j) = acc / double(ss * ss);
        }
    });
    for (auto b : bad) res.unsupported_cells += b;
    if (res.unsupported_cells > 0)
        res.warning = std::to_string(res.unsupported_cells) +
                      " cells outside the modelled regions were zero-filled (folding zone dilatation unknown)";
    res.field = BeltramiField(std::move(g));
    return res;
}

// --- serialization ------------------------------------------------------

inline std::string serialize_model(const ModelParams& p) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "lambda = " << p.graph.lambda << "\n";
    os << "count = " << p.graph.count() << "\n";
    os << "base_disk = " << p.base_disk.m << " " << p.base_disk.delta << " " << p.base_disk.w.real() << " "
       << p.base_disk.w.imag() << "\n";
    for (const auto& v : p.graph.vertices)
        os << "vertex " << v.n << " " << v.a << " " << v.log_k << " " << (v.k_exact ? 1 : 0) << "\n";
    for (const auto& [n, d] : p.disks)
        os << "disk " << n << " " << d.m << " " << d.delta << " " << d.w.real() << " " << d.w.imag() << "\n";
    return os.str();
}

}  // namespace qcfold
