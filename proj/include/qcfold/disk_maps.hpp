// Quasiregular self-maps of the unit disk: power map with a bump-interpolated
// linear term, the plateau translation rho_w, and their composition.
#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "grid.hpp"
#include "tower.hpp"

namespace qcfold {

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SingularDerivative : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- bump ---------------------------------------------------------------

inline double bump_eval(double x) {
    if (x < 0) throw DomainError("bump_eval: negative argument");
    if (x >= 1) return 0.0;
    return std::exp(1.0 + 1.0 / (x * x - 1.0));
}

inline double bump_deriv(double x) {
    if (x < 0) throw DomainError("bump_deriv: negative argument");
    if (x >= 1) return 0.0;
    double q = x * x - 1.0;
    return bump_eval(x) * (-2.0 * x / (q * q));
}

struct BumpProfile {
    double r = 0.5;

    // radial profile: 1 up to r, bump of the rescaled radius on [r,1], 0 beyond
    double eta_hat(double t) const {
        if (t <= r) return 1.0;
        if (t >= 1) return 0.0;
        return bump_eval((t - r) / (1 - r));
    }
    double eta_hat_deriv(double t) const {
        if (t <= r || t >= 1) return 0.0;
        return bump_deriv((t - r) / (1 - r)) / (1 - r);
    }
};

inline double eta_eval(cplx z, const BumpProfile& p) { return p.eta_hat(std::abs(z)); }

// --- parameters ---------------------------------------------------------

struct DiskMapParams {
    long long m = 2;
    double delta = 0.0;
    cplx w{0.0, 0.0};

    DiskMapParams() = default;
    DiskMapParams(long long m_, double d_, cplx w_ = {}) : m(m_), delta(d_), w(w_) {
        if (m < 2) throw ParameterError("disk map power must be >= 2");
        if (delta < 0) throw ParameterError("delta must be non-negative");
    }
    double r() const { return 1.0 - 4.0 * delta / double(m); }
    BumpProfile profile() const { return {r()}; }
    // modulus shared by all critical points
    double critical_radius() const {
        return std::pow(delta / double(m), 1.0 / double(m - 1));
    }
};

/** Empirically certified constants; defaults mirror data/certified_constants.txt. */
struct CertifiedConstants {
    long long m0 = 20;
    double delta0 = 0.06;
    double k0 = 0.7327;       // sup of |mu_rho| measured at |w| = 0.74
    double k0_limit = 0.75;   // closed-form limit as |w| -> 3/4
};

inline CertifiedConstants load_certified_constants(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open constants file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    CertifiedConstants c;
    if (kv.count("m0")) c.m0 = std::stoll(kv["m0"]);
    if (kv.count("delta0")) c.delta0 = std::stod(kv["delta0"]);
    if (kv.count("k0")) c.k0 = std::stod(kv["k0"]);
    if (kv.count("k0_limit")) c.k0_limit = std::stod(kv["k0_limit"]);
    return c;
}

inline bool permissible(const DiskMapParams& p, const CertifiedConstants& c = {}) {
    return p.delta < c.delta0 && std::abs(p.w) < 0.75;
}

// --- psi ----------------------------------------------------------------

inline cplx zpow(cplx z, double m) {
    double t = std::abs(z);
    if (t == 0) return 0.0;
    return std::polar(std::pow(t, m), m * std::arg(z));
}

inline cplx psi_eval(cplx z, const DiskMapParams& p) {
    double t = std::abs(z);
    if (t > 1.0 + 1e-15) throw DomainError("psi_eval: |z| > 1");
    return zpow(z, double(p.m)) + p.delta * z * p.profile().eta_hat(t);
}

// closed-form Wirtinger derivatives of psi
inline Wirtinger psi_derivs(cplx z, const DiskMapParams& p) {
    double m = double(p.m);
    double t = std::abs(z);
    BumpProfile b = p.profile();
    cplx pz = m * zpow(z, m - 1) + p.delta * b.eta_hat(t);
    cplx pzb = 0.0;
    double e1 = b.eta_hat_deriv(t);
    if (e1 != 0.0) {
        pz += p.delta * t * e1 / 2.0;
        pzb = p.delta * e1 * z * z / (2.0 * t);
    }
    return {pz, pzb};
}

inline cplx psi_dilatation(cplx z, const DiskMapParams& p) {
    if (std::abs(z) <= p.r()) return 0.0;
    Wirtinger d = psi_derivs(z, p);
    if (d.d_z == 0.0) throw SingularDerivative("psi_z vanishes");
    return d.d_zbar / d.d_z;
}

// --- rho ----------------------------------------------------------------

inline void check_w(cplx w) {
    if (std::abs(w) >= 0.75) throw ParameterError("|w| must be < 3/4");
}

inline cplx rho_eval(cplx z, cplx w) {
    check_w(w);
    double s = std::abs(z);
    if (s > 1.0 + 1e-15) throw DomainError("rho_eval: |z| > 1");
    if (s <= 0.125) return z + w;
    return z * (8 * s - 1) / 7.0 + (z + w) * (8 - 8 * s) / 7.0;
}

inline Wirtinger rho_derivs(cplx z, cplx w) {
    double s = std::abs(z);
    if (s <= 0.125) return {1.0, 0.0};
    cplx k = 4.0 * w / 7.0;
    return {1.0 - k * std::conj(z) / s, -k * z / s};
}

inline cplx rho_dilatation(cplx z, cplx w) {
    Wirtinger d = rho_derivs(z, w);
    return d.d_zbar / d.d_z;
}

// grid-sampled sup of |mu_rho| over the closed unit disk
inline double rho_dilatation_sup(cplx w, int grid_n = 2048) {
    check_w(w);
    if (w == 0.0) return 0.0;
    Grid2D g(0.0, 1.0, grid_n);
    std::vector<double> rowmax(grid_n, 0.0);
    parallel_for(grid_n, [&](int i) {
        double best = 0;
        for (int j = 0; j < grid_n; ++j) {
            cplx z = g.point(i, j);
            if (std::abs(z) > 1) continue;
            best = std::max(best, std::abs(rho_dilatation(z, w)));
        }
        rowmax[i] = best;
    });
    return *std::max_element(rowmax.begin(), rowmax.end());
}

// exact sup of |mu_rho| on the annulus
inline double rho_dilatation_sup_exact(cplx w) {
    double k = 4.0 * std::abs(w) / 7.0;
    return k / (1 - k);
}

// --- composition --------------------------------------------------------

inline cplx composed_disk_map(cplx z, const DiskMapParams& p) { return rho_eval(psi_eval(z, p), p.w); }

inline Wirtinger composed_derivs(cplx z, const DiskMapParams& p) {
    Wirtinger a = psi_derivs(z, p);
    Wirtinger b = rho_derivs(psi_eval(z, p), p.w);
    return {b.d_z * a.d_z + b.d_zbar * std::conj(a.d_zbar),
            b.d_z * a.d_zbar + b.d_zbar * std::conj(a.d_z)};
}

inline cplx composed_dilatation(cplx z, const DiskMapParams& p) {
    double t = std::abs(z);
    bool psi_conformal = t <= p.r();
    cplx v = psi_eval(z, p);
    bool rho_conformal = std::abs(v) <= 0.125 || p.w == 0.0;
    if (psi_conformal && rho_conformal) return 0.0;
    Wirtinger d = composed_derivs(z, p);
    if (d.d_z == 0.0) throw SingularDerivative("composed map has vanishing z-derivative");
    return d.d_zbar / d.d_z;
}

// radius t with t^m + delta t = 1/8, below which the psi-image sits in the rho plateau
inline double rho_plateau_preimage_radius(const DiskMapParams& p) {
    double lo = 0, hi = 1;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double v = std::pow(mid, double(p.m)) + p.delta * mid;
        (v < 0.125 ? lo : hi) = mid;
    }
    return lo;
}

// inner radius of the support of the composed dilatation
inline double composed_support_inner_radius(const DiskMapParams& p) {
    double r = p.delta > 0 ? p.r() : 1.0;
    if (p.w == 0.0) return r;
    return std::min(r, rho_plateau_preimage_radius(p));
}

// --- critical data ------------------------------------------------------

struct CriticalData {
    std::vector<cplx> points;
    std::vector<cplx> values_unshifted;
    std::vector<cplx> values_shifted;
};

inline CriticalData critical_data(const DiskMapParams& p) {
    CriticalData c;
    if (p.delta == 0.0) {
        c.points = {0.0};
        c.values_unshifted = {0.0};
        c.values_shifted = {p.w};
        return c;
    }
    double m = double(p.m);
    double rad = p.critical_radius();
    for (long long k = 0; k < p.m - 1; ++k) {
        double ang = std::numbers::pi * double(2 * k + 1) / (m - 1);
        cplx ck = std::polar(rad, ang);
        cplx vk = p.delta * ck * (m - 1) / m;
        c.points.push_back(ck);
        c.values_unshifted.push_back(vk);
        c.values_shifted.push_back(p.w + vk);
    }
    return c;
}

// psi' on the plateau
inline cplx psi_plateau_deriv(cplx z, const DiskMapParams& p) {
    return double(p.m) * zpow(z, double(p.m - 1)) + p.delta;
}

// Newton on m z^{m-1} + delta = 0; returns steps until the update is below tol
inline int newton_refine_root(cplx& z, const DiskMapParams& p, double tol = 1e-14, int max_steps = 20) {
    double m = double(p.m);
    for (int s = 1; s <= max_steps; ++s) {
        cplx f = psi_plateau_deriv(z, p);
        cplx fp = m * (m - 1) * zpow(z, m - 2);
        cplx step = f / fp;
        z -= step;
        if (std::abs(step) <= tol * std::max(1.0, std::abs(z))) return s;
    }
    return max_steps + 1;
}

// --- verifiers ----------------------------------------------------------

struct DilatationBoundReport {
    double max_dilatation = 0;
    double argmax_radius = 0;
    bool r_inequality = false;
    double r = 0;
    double critical_radius = 0;
};

/**
 * Sup of |mu_psi| on a polar grid: grid_n radii spanning (r, 1) and grid_n
 * angles over one rotation sector 2pi/(m-1), under which |mu_psi| is invariant.
 */
inline DilatationBoundReport verify_lemma31(const DiskMapParams& p, int grid_n) {
    if (grid_n < 256) throw std::invalid_argument("verify_lemma31 needs grid_n >= 256");
    DilatationBoundReport rep;
    rep.r = p.r();
    rep.critical_radius = p.critical_radius();
    rep.r_inequality = rep.r > rep.critical_radius;
    double sector = 2 * std::numbers::pi / double(p.m - 1);
    std::vector<double> best(grid_n, 0.0), where(grid_n, 0.0);
    parallel_for(grid_n, [&](int i) {
        double t = rep.r + (1 - rep.r) * (i + 0.5) / grid_n;
        for (int j = 0; j < grid_n; ++j) {
            double a = sector * j / grid_n;
            double v = std::abs(psi_dilatation(std::polar(t, a), p));
            if (v > best[i]) { best[i] = v; where[i] = t; }
        }
    });
    for (int i = 0; i < grid_n; ++i)
        if (best[i] > rep.max_dilatation) { rep.max_dilatation = best[i]; rep.argmax_radius = where[i]; }
    return rep;
}

// true iff the composed dilatation vanishes at every polar sample of |z| <= s
inline bool verify_support(const DiskMapParams& p, double s, int radial = 512, int angular = 1024) {
    if (!(s > 0 && s < 1)) throw std::invalid_argument("support radius must lie in (0,1)");
    if (p.delta >= 1.0 / 16) throw ParameterError("verify_support requires delta < 1/16");
    std::vector<char> ok(radial + 1, 1);
    parallel_for(radial + 1, [&](int i) {
        double t = s * double(i) / radial;
        for (int j = 0; j < angular; ++j) {
            cplx z = std::polar(t, 2 * std::numbers::pi * j / angular);
            if (composed_dilatation(z, p) != 0.0) { ok[i] = 0; return; }
        }
    });
    return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
}

}  // namespace qcfold
