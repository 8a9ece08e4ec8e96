// Extended-range magnitudes: iterated exponentials and small scaled values.
#pragma once

#include <cmath>
#include <compare>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <cstdio>

namespace qcfold {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// largest t with exp(t) finite
inline constexpr double kExpMax = 709.782712893384;

/**
 * Represents exp^depth(mantissa). Depth 0 is the plain (signed) value.
 * At positive depth the mantissa is kept >= 1.
 */
struct TowerReal {
    int depth = 0;
    double mantissa = 0.0;

    TowerReal() = default;
    TowerReal(int d, double m) : depth(d), mantissa(m) { normalize(); }

    static TowerReal from_double(double x) { return TowerReal(0, x); }

    void normalize() {
        if (depth < 0) throw DomainError("tower depth must be non-negative");
        if (!std::isfinite(mantissa)) throw DomainError("tower mantissa must be finite");
        while (depth > 0 && mantissa < 1.0) {
            mantissa = std::exp(mantissa);
            --depth;
        }
    }

    bool is_zero() const { return depth == 0 && mantissa == 0.0; }
    bool positive() const { return depth > 0 || mantissa > 0.0; }

    // value as double, +inf if out of range
    double to_double() const {
        double v = mantissa;
        for (int i = 0; i < depth; ++i) {
            if (v > kExpMax) return std::numeric_limits<double>::infinity();
            v = std::exp(v);
        }
        return v;
    }

    // ln(value) as double, +inf if out of range
    double log_double() const {
        if (depth == 0) {
            if (mantissa <= 0) throw DomainError("log of non-positive value");
            return std::log(mantissa);
        }
        return TowerReal(depth - 1, mantissa).to_double();
    }

    std::string str() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "E%d(%.17g)", depth, mantissa);
        return buf;
    }
};

inline TowerReal tower_log(const TowerReal& x) {
    if (x.depth > 0) return TowerReal(x.depth - 1, x.mantissa);
    if (x.mantissa <= 0) throw DomainError("tower_log of non-positive value");
    return TowerReal(0, std::log(x.mantissa));
}

inline TowerReal tower_exp(const TowerReal& x) {
    if (x.depth > 0) return TowerReal(x.depth + 1, x.mantissa);
    if (x.mantissa < 1.0) return TowerReal(0, std::exp(x.mantissa));
    return TowerReal(1, x.mantissa);
}

// exp(L), kept at depth 0 whenever the value fits in a double
inline TowerReal tower_from_log(double L) {
    if (L < kExpMax) return TowerReal(0, std::exp(L));
    return TowerReal(1, L);
}

// exp(x), lowered to depth 0 when representable
inline TowerReal tower_exp_lowered(const TowerReal& x) {
    if (x.depth == 0) return tower_from_log(x.mantissa);
    return tower_exp(x);
}

inline std::strong_ordering tower_compare(const TowerReal& a, const TowerReal& b) {
    auto cmp = [](double x, double y) {
        if (x < y) return std::strong_ordering::less;
        if (x > y) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    };
    if (a.depth == b.depth) return cmp(a.mantissa, b.mantissa);
    // a positive tower beats any non-positive plain value
    if (a.depth == 0 && a.mantissa <= 0) return std::strong_ordering::less;
    if (b.depth == 0 && b.mantissa <= 0) return std::strong_ordering::greater;
    bool swapped = a.depth < b.depth;
    const TowerReal& hi = swapped ? b : a;
    const TowerReal& lo = swapped ? a : b;
    // peel lo.depth logs from both, then lift the deeper one back
    int extra = hi.depth - lo.depth;
    double lv = lo.mantissa;
    double hv = hi.mantissa;
    auto res = std::strong_ordering::greater;
    for (int i = 0; i < extra; ++i) {
        if (hv > kExpMax) { hv = std::numeric_limits<double>::infinity(); break; }
        hv = std::exp(hv);
    }
    res = cmp(hv, lv);
    if (swapped) {
        if (res == std::strong_ordering::less) return std::strong_ordering::greater;
        if (res == std::strong_ordering::greater) return std::strong_ordering::less;
    }
    return res;
}

inline bool operator<(const TowerReal& a, const TowerReal& b) { return tower_compare(a, b) < 0; }
inline bool operator>(const TowerReal& a, const TowerReal& b) { return tower_compare(a, b) > 0; }
inline bool operator<=(const TowerReal& a, const TowerReal& b) { return tower_compare(a, b) <= 0; }
inline bool operator>=(const TowerReal& a, const TowerReal& b) { return tower_compare(a, b) >= 0; }
inline bool tower_equal(const TowerReal& a, const TowerReal& b) { return tower_compare(a, b) == 0; }

// x + c for a real constant c; exact where representable, otherwise through logs
inline TowerReal tower_add_const(const TowerReal& x, double c) {
    if (c == 0.0) return x;
    if (x.depth == 0) {
        double s = x.mantissa + c;
        if (std::isfinite(s)) return TowerReal(0, s);
        // overflow of a sum of two doubles
        double big = std::max(x.mantissa, c), small = std::min(x.mantissa, c);
        return tower_exp(TowerReal(0, std::log(big) + std::log1p(small / big)));
    }
    double v = x.to_double();
    if (std::isfinite(v)) return TowerReal::from_double(v + c);
    double lv = x.log_double();   // may be inf
    double rel = std::isfinite(lv) ? c * std::exp(-lv) : 0.0;
    if (rel == 0.0) return x;
    return tower_exp(tower_add_const(tower_log(x), std::log1p(rel)));
}

inline TowerReal tower_add(const TowerReal& a, const TowerReal& b) {
    if (a.depth == 0) return tower_add_const(b, a.mantissa);
    if (b.depth == 0) return tower_add_const(a, b.mantissa);
    const TowerReal& big = a >= b ? a : b;
    const TowerReal& small = a >= b ? b : a;
    TowerReal lb = tower_log(big), ls = tower_log(small);
    if (lb.depth == 0 && ls.depth == 0) {
        double r = std::exp(ls.mantissa - lb.mantissa);
        return tower_exp(TowerReal(0, lb.mantissa + std::log1p(r)));
    }
    if (tower_equal(lb, ls)) return tower_exp(tower_add_const(lb, std::numbers::ln2));
    // ratio below double resolution
    return big;
}

// a - b for a >= b >= 0; differences below resolution return the larger operand
inline TowerReal tower_sub(const TowerReal& a, const TowerReal& b) {
    if (a.depth == 0 && b.depth == 0) return TowerReal(0, a.mantissa - b.mantissa);
    if (b.depth == 0) return tower_add_const(a, -b.mantissa);
    if (tower_compare(a, b) < 0) throw DomainError("tower_sub: negative result");
    if (tower_equal(a, b)) return TowerReal(0, 0.0);
    TowerReal la = tower_log(a), lb = tower_log(b);
    if (la.depth == 0 && lb.depth == 0) {
        double r = std::exp(lb.mantissa - la.mantissa);
        return tower_exp(TowerReal(0, la.mantissa + std::log1p(-r)));
    }
    return a;
}

// product of positive values
inline TowerReal tower_mul(const TowerReal& a, const TowerReal& b) {
    if (a.depth == 0 && b.depth == 0) {
        double p = a.mantissa * b.mantissa;
        if (std::isfinite(p) && (p != 0.0 || a.mantissa == 0.0 || b.mantissa == 0.0))
            return TowerReal(0, p);
    }
    if (!a.positive() || !b.positive()) throw DomainError("tower_mul needs positive operands");
    return tower_exp(tower_add(tower_log(a), tower_log(b)));
}

inline TowerReal tower_mul(const TowerReal& a, double c) { return tower_mul(a, TowerReal(0, c)); }

// a^p for a > 0, p > 0 a tower exponent
inline TowerReal tower_pow(const TowerReal& a, const TowerReal& p) {
    TowerReal la = tower_log(a);
    if (la.depth == 0 && la.mantissa < 0) throw DomainError("tower_pow base below 1");
    if (la.is_zero()) return TowerReal(0, 1.0);
    return tower_exp(tower_mul(la, p));
}

// difference a - b as a double (a, b of comparable size); +-inf when unresolvable in range
inline double tower_diff_double(const TowerReal& a, const TowerReal& b) {
    if (tower_equal(a, b)) return 0.0;
    if (a >= b) {
        TowerReal d = tower_sub(a, b);
        return d.to_double();
    }
    return -tower_sub(b, a).to_double();
}

/** Log-polar complex number: exp(log_mag) * exp(i arg). */
struct LogComplex {
    double log_mag = -std::numeric_limits<double>::infinity();
    double arg = 0.0;

    static double wrap(double a) {
        a = std::remainder(a, 2 * std::numbers::pi);
        if (a <= -std::numbers::pi) a += 2 * std::numbers::pi;
        return a;
    }
    LogComplex() = default;
    LogComplex(double lm, double a) : log_mag(lm), arg(wrap(a)) {}
};

inline LogComplex operator*(const LogComplex& a, const LogComplex& b) {
    return LogComplex(a.log_mag + b.log_mag, a.arg + b.arg);
}

/**
 * Positive or signed small magnitude coeff * exp(-scale), scale a non-negative tower.
 * Values whose scale fits comfortably in a double are folded into coeff.
 */
struct Scaled {
    TowerReal scale;     // >= 0
    double coeff = 0.0;

    Scaled() = default;
    Scaled(double c) : scale(0, 0.0), coeff(c) {}
    Scaled(const TowerReal& s, double c) : scale(s), coeff(c) { fold(); }

    static Scaled from_neglog(const TowerReal& nl) {
        if (nl.depth == 0 && nl.mantissa < 0) return Scaled(std::exp(-nl.mantissa));
        return Scaled(nl, 1.0);
    }
    static Scaled from_neglog(double nl) { return from_neglog(TowerReal(0, nl)); }

    void fold() {
        if (coeff == 0.0) { scale = TowerReal(0, 0.0); return; }
        if (scale.depth == 0 && scale.mantissa < 600.0) {
            double v = coeff * std::exp(-scale.mantissa);
            if (std::fabs(v) > 1e-290) { coeff = v; scale = TowerReal(0, 0.0); }
        }
    }
    bool is_zero() const { return coeff == 0.0; }
    int sign() const { return (coeff > 0) - (coeff < 0); }

    // -ln|value|
    TowerReal neglog() const {
        if (coeff == 0.0) throw DomainError("neglog of zero");
        return tower_add_const(scale, -std::log(std::fabs(coeff)));
    }
    double to_double() const {
        if (coeff == 0.0) return 0.0;
        if (scale.depth > 0 || scale.mantissa > 800) return coeff * 0.0;
        return coeff * std::exp(-scale.mantissa);
    }
    std::string str() const {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.17g*exp(-%s)", coeff, scale.str().c_str());
        return buf;
    }
};

inline Scaled operator-(const Scaled& a) { return Scaled(a.scale, -a.coeff); }

inline Scaled operator*(const Scaled& a, double c) { return Scaled(a.scale, a.coeff * c); }
inline Scaled operator*(double c, const Scaled& a) { return a * c; }

inline Scaled operator*(const Scaled& a, const Scaled& b) {
    if (a.is_zero() || b.is_zero()) return Scaled(0.0);
    return Scaled(tower_add(a.scale, b.scale), a.coeff * b.coeff);
}

inline Scaled operator/(const Scaled& a, const Scaled& b) {
    if (b.is_zero()) throw DomainError("division by zero");
    if (a.is_zero()) return Scaled(0.0);
    // a/b = (ca/cb) exp(-(sa - sb)), with sa - sb possibly negative
    if (tower_equal(a.scale, b.scale)) return Scaled(a.coeff / b.coeff);
    if (a.scale >= b.scale) return Scaled(tower_sub(a.scale, b.scale), a.coeff / b.coeff);
    TowerReal d = tower_sub(b.scale, a.scale);
    double v = d.to_double();
    if (v > kExpMax) throw DomainError("quotient out of range");
    return Scaled(a.coeff / b.coeff * std::exp(v));
}

inline Scaled operator+(const Scaled& a, const Scaled& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (tower_equal(a.scale, b.scale)) return Scaled(a.scale, a.coeff + b.coeff);
    const Scaled& dom = a.scale < b.scale ? a : b;
    const Scaled& sub = a.scale < b.scale ? b : a;
    double gap = tower_sub(sub.scale, dom.scale).to_double();
    double r = gap > 800 ? 0.0 : std::exp(-gap);
    return Scaled(dom.scale, dom.coeff + sub.coeff * r);
}
inline Scaled operator-(const Scaled& a, const Scaled& b) { return a + (-b); }

// ordering of signed scaled values
inline std::strong_ordering scaled_compare(const Scaled& a, const Scaled& b) {
    Scaled d = a - b;
    if (d.coeff > 0) return std::strong_ordering::greater;
    if (d.coeff < 0) return std::strong_ordering::less;
    return std::strong_ordering::equal;
}
inline bool operator<(const Scaled& a, const Scaled& b) { return scaled_compare(a, b) < 0; }
inline bool operator>(const Scaled& a, const Scaled& b) { return scaled_compare(a, b) > 0; }

inline Scaled scaled_min(const Scaled& a, const Scaled& b) { return a < b ? a : b; }
inline Scaled scaled_max(const Scaled& a, const Scaled& b) { return a < b ? b : a; }

}  // namespace qcfold
