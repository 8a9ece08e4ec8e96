// Koebe distortion bounds and the inverse-branch derivative budget along the orbit of 1/2.
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graph_model.hpp"
#include "tower.hpp"

namespace qcfold {

inline double koebe_quarter(double Fprime_a, double r) {
    if (!(Fprime_a > 0) || !(r > 0)) throw DomainError("koebe_quarter needs positive inputs");
    return 0.25 * Fprime_a * r;
}

// bounds on |F(z) - F(a)| for |z - a| = d inside a univalent disk of radius r
inline std::pair<double, double> koebe_growth(double r, double d, double Fprime_a) {
    if (!(d >= 0) || !(d < r)) throw DomainError("koebe_growth needs 0 <= d < r");
    return {r * r * d * Fprime_a / ((r + d) * (r + d)), r * r * d * Fprime_a / ((r - d) * (r - d))};
}

// bounds on |F'(z)/F'(a)|
inline std::pair<double, double> koebe_derivative_ratio(double r, double d) {
    if (!(d >= 0) || !(d < r)) throw DomainError("koebe_derivative_ratio needs 0 <= d < r");
    double t = d / r;
    return {(1 - t) / ((1 + t) * (1 + t) * (1 + t)), (1 + t) / ((1 - t) * (1 - t) * (1 - t))};
}

// bounds on |phi'| on the real axis when |phi - id| < eps0
inline std::pair<double, double> phi_prime_bounds(double eps0) {
    if (!(eps0 > 0) || !(eps0 < 0.125)) throw DomainError("phi_prime_bounds needs 0 < eps0 < 1/8");
    double den = (3.0 / 8) * (3.0 / 8) * 0.25;
    return {(1.0 / 64) * (0.25 - 2 * eps0) / den, (25.0 / 64) * (0.25 + 2 * eps0) / den};
}

// r = 10 and radius 3 pi / 2 + 1 in the containment estimate
inline double containment_prefactor() {
    double rad = 1.5 * kPi + 1;
    return 100 * rad / ((10 - rad) * (10 - rad));
}

struct RemarkConditions {
    bool half_supported = false;      // 1/2 lies where g = exp(lambda sinh)
    bool derivative_at_least_two = false;
    bool upper_bound_decays = false;
    bool orbit_escapes = false;
    bool all() const { return half_supported && derivative_at_least_two && upper_bound_decays && orbit_escapes; }
};

inline RemarkConditions remark_conditions(double lambda, double eps0 = 1.0 / 32) {
    RemarkConditions rc;
    rc.half_supported = lambda * std::sinh(0.5) > 2 * kPi;
    // g' = lambda cosh(x) exp(lambda sinh x) is increasing on x >= 1/32
    double x = 1.0 / 32;
    rc.derivative_at_least_two = lambda * std::cosh(x) * std::exp(lambda * std::sinh(x)) >= 2;
    rc.upper_bound_decays = phi_prime_bounds(eps0).second / lambda < 1;
    auto orbit = g_orbit_real(0.5, 3, lambda);
    rc.orbit_escapes = true;
    for (size_t k = 1; k < orbit.size(); ++k)
        if (!(orbit[k] > tower_mul(orbit[k - 1], lambda))) rc.orbit_escapes = false;
    return rc;
}

// smallest integer lambda in [lo, hi] meeting every checkable condition
inline int lambda0_candidate(int lo = 2, int hi = 1000) {
    for (int l = lo; l <= hi; ++l)
        if (remark_conditions(double(l)).all()) return l;
    throw DomainError("no lambda0 candidate in range");
}

/**
 * Extended-range bounds on |(f^{-n})'(g^n(1/2))|.
 * lower: (1/12)^n prod 1/g'(g^{-1}(g^k(1/2) + 2 eps0)); upper_product uses C0^n and the -2 eps0 shift;
 * upper: the closed form (C0/lambda)^n / (lambda - eps0 lambda^{2-n}).
 */
struct Budget {
    double eps0 = 1.0 / 32;
    double C = 1;
    double R = 1;
    double lambda = 20;
    bool strict = true;
    std::vector<TowerReal> orbit;   // g^k(1/2)

    Budget() = default;
    explicit Budget(double lam, bool strict_mode = true, double eps = 1.0 / 32)
        : eps0(eps), lambda(lam), strict(strict_mode) {
        if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
        orbit.push_back(TowerReal(0, 0.5));
    }

    double C0() const { return phi_prime_bounds(eps0).second; }
    double c_lo() const { return phi_prime_bounds(eps0).first; }
    double mu_seq(double abs_zn) const { return mu_sequence(abs_zn); }

    // lambda >= the computed candidate; below it outputs are non-certifying
    bool certifying() const { return strict && lambda >= lambda0_candidate(); }

    const TowerReal& orbit_point(int k) {
        while (int(orbit.size()) <= k) orbit.push_back(g_real_tower(orbit.back(), lambda));
        return orbit[size_t(k)];
    }

    // ln g' at the preimage of g^k(1/2) + shift, k >= 1
    TowerReal log_g_prime_at_shifted_preimage(int k, double shift) {
        const TowerReal& y = orbit_point(k);
        double yv = y.to_double();
        if (std::isfinite(yv) && yv < 1e300) {
            double x = g_inverse_real(yv + shift, lambda);
            return log_g_prime_tower(TowerReal(0, x), lambda);
        }
        // shift below the resolution of y: the preimage is g^{k-1}(1/2)
        return log_g_prime_tower(orbit_point(k - 1), lambda);
    }

    // -ln of the exact model derivative prod_{j<n} 1/g'(g^j(1/2))
    TowerReal log_inverse_derivative(int n) {
        TowerReal s(0, 0.0);
        for (int j = 0; j < n; ++j) s = tower_add(s, log_g_prime_tower(orbit_point(j), lambda));
        return s;
    }
    Scaled exact(int n) { return Scaled::from_neglog(log_inverse_derivative(n)); }

    Scaled lower(int n) {
        if (n < 1) throw DomainError("n >= 1");
        TowerReal s(0, -n * std::log(c_lo()));
        for (int k = 1; k <= n; ++k) s = tower_add(s, log_g_prime_at_shifted_preimage(k, 2 * eps0));
        return Scaled::from_neglog(s);
    }
    Scaled upper_product(int n) {
        if (n < 1) throw DomainError("n >= 1");
        TowerReal s(0, 0.0);
        for (int k = 1; k <= n; ++k) s = tower_add(s, log_g_prime_at_shifted_preimage(k, -2 * eps0));
        Scaled p = Scaled::from_neglog(s);
        return p * std::pow(C0(), n);
    }
    Scaled upper(int n) const {
        if (n < 1) throw DomainError("n >= 1");
        double den = lambda - eps0 * std::pow(lambda, 2.0 - n);
        return Scaled::from_neglog(n * std::log(lambda / C0()) + std::log(den));
    }

    // lower / exact and upper_product / exact as doubles: the shifts change only the first factor
    double lower_over_exact(int n) {
        double r = std::pow(c_lo(), n);
        TowerReal a = log_g_prime_at_shifted_preimage(1, 2 * eps0);
        return r * std::exp(log_g_prime_tower(TowerReal(0, 0.5), lambda).mantissa - a.mantissa);
    }
    double upper_product_over_exact(int n) {
        double r = std::pow(C0(), n);
        TowerReal a = log_g_prime_at_shifted_preimage(1, -2 * eps0);
        return r * std::exp(log_g_prime_tower(TowerReal(0, 0.5), lambda).mantissa - a.mantissa);
    }
};

// --- target indices -----------------------------------------------------

struct PIndex {
    bool exact = false;
    long long value = 0;      // when exact
    TowerReal symbolic;       // g^n(1/2)/pi otherwise
    TowerReal abs_z;          // |z_p|
    double offset = 0;        // a_p - g^n(1/2) when exact
};

inline PIndex p_index(int n, Budget& b, const GraphModel& g) {
    const TowerReal& y = b.orbit_point(n);
    PIndex p;
    double yv = y.to_double();
    if (std::isfinite(yv) && yv / kPi < 4e15) {
        long long k0 = std::llround(yv / kPi);
        double best = HUGE_VAL;
        for (long long k = std::max(1LL, k0 - 2); k <= k0 + 2; ++k) {
            double dist = std::fabs(g.a(k) - yv);
            if (dist < best) {
                best = dist;
                p.value = k;
                p.offset = g.a(k) - yv;
            }
        }
        p.exact = true;
        p.symbolic = TowerReal(0, double(p.value));
        p.abs_z = TowerReal(0, std::abs(g.z(p.value)));
        return p;
    }
    p.symbolic = tower_exp(tower_add_const(tower_log(y), -std::log(kPi)));
    p.abs_z = y;
    return p;
}

// --- containment of pulled-back disks in D(1/2, 1/8) ------------------------

inline bool check_cor_4_10(int n, const Budget& b) {
    Scaled rhs = b.upper(n) * containment_prefactor();
    return rhs < Scaled(0.125 - 2 * b.eps0);
}

inline int containment_threshold(const Budget& b, int horizon = 1000) {
    for (int n = 1; n <= horizon; ++n)
        if (check_cor_4_10(n, b)) return n;
    throw DomainError("containment never reached within horizon");
}

struct BudgetRow {
    int n;
    Scaled lower, upper, upper_product;
    PIndex p;
    bool containment;
};

inline std::vector<BudgetRow> budget_rows(Budget& b, const GraphModel& g, int n_max) {
    std::vector<BudgetRow> rows;
    for (int n = 1; n <= n_max; ++n)
        rows.push_back({n, b.lower(n), b.upper(n), b.upper_product(n), p_index(n, b, g), check_cor_4_10(n, b)});
    return rows;
}

inline std::string serialize_budget(const Budget& b, const std::vector<BudgetRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda = " << b.lambda << "\neps0 = " << b.eps0 << "\nmode = " << (b.strict ? "strict" : "toy")
       << "\nC0 = " << b.C0() << "\nprefactor = " << containment_prefactor() << "\n";
    os << "n,lower,upper,upper_product,p,p_exact,containment\n";
    for (const auto& r : rows)
        os << r.n << "," << r.lower.str() << "," << r.upper.str() << "," << r.upper_product.str() << ","
           << (r.p.exact ? std::to_string(r.p.value) : r.p.symbolic.str()) << "," << (r.p.exact ? 1 : 0) << ","
           << (r.containment ? 1 : 0) << "\n";
    return os.str();
}

}  // namespace qcfold
