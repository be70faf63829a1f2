#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>

#include "sqt/errors.hpp"
#include "sqt/photostatistics.hpp"

namespace sqt {

/// Dimensionless parameters of the large-N ensemble averages.
struct WaveguideRatios {
    double s = 1.0;           // L / xi_a
    double l_over_xi = 0.1;   // l / xi_a
    int n_modes = 1;          // homodyne formulas only
    double efficiency = 1.0;  // d
    double coupling = 0.5;    // kappa
    double occupation = 0.0;  // f
    double fano_in = 1.0;     // direct detection
    double rho = 0.0;         // homodyne detection

    void validate() const {
        if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("WaveguideRatios: s must be finite and > 0");
        if (!(l_over_xi > 0.0)) throw InvalidArgument("WaveguideRatios: l/xi_a must be > 0");
        if (n_modes < 1) throw InvalidArgument("WaveguideRatios: n_modes must be >= 1");
        if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw InvalidArgument("WaveguideRatios: efficiency must lie in [0, 1]");
        if (!(coupling > 0.0 && coupling < 1.0)) throw InvalidArgument("WaveguideRatios: coupling must lie in (0, 1)");
        if (!(rho >= 0.0)) throw InvalidArgument("WaveguideRatios: rho must be >= 0");
    }

    /// L / l.
    double length_over_mean_free_path() const { return s / l_over_xi; }
};

/// Soft check of the diffusive window l << L << N l. Returns a message when
/// the formulas are being extrapolated.
inline std::optional<std::string> validity_warning(const WaveguideRatios& w) {
    const double ratio = w.length_over_mean_free_path();
    if (ratio < 1.0)
        return "L/l = " + std::to_string(ratio) + " < 1: extrapolation outside the diffusive regime";
    if (ratio > static_cast<double>(w.n_modes))
        return "L/l = " + std::to_string(ratio) + " > N = " + std::to_string(w.n_modes) +
               ": beyond the localization length";
    return std::nullopt;
}

namespace detail {

inline void require_below_threshold(double s) {
    if (s >= std::numbers::pi)
        throw ThresholdReached("amplifying waveguide at or beyond the laser threshold (s = " + std::to_string(s) +
                               " >= pi)");
}

/// 3 - (2s + coth s)/sinh s - (s coth s - 1)/sinh^2 s + s/sinh^3 s.
/// Templated so the complex continuation s -> -i s can be evaluated.
template <class T>
T absorbing_direct_bracket(T s) {
    using std::sinh, std::tanh;
    const T sh = sinh(s);
    const T cth = T(1) / tanh(s);
    return T(3) - (T(2) * s + cth) / sh - (s * cth - T(1)) / (sh * sh) + s / (sh * sh * sh);
}

/// 3 - (2s - cot s)/sin s + (s cot s - 1)/sin^2 s - s/sin^3 s.
template <class T>
T amplifying_direct_bracket(T s) {
    using std::sin, std::tan;
    const T sn = sin(s);
    const T ct = T(1) / tan(s);
    return T(3) - (T(2) * s - ct) / sn + (s * ct - T(1)) / (sn * sn) - s / (sn * sn * sn);
}

/// (l/xi_a)(coth s - 1/sinh s): large-N average of (1 - rr^dagger - tt^dagger)_{nn} times 3/4.
template <class T>
T absorbing_beating_factor(T l_over_xi, T s) {
    using std::sinh, std::tanh;
    return l_over_xi * (T(1) / tanh(s) - T(1) / sinh(s));
}

/// (l/xi_a)(cot s - 1/sin s) = -(l/xi_a) tan(s/2).
template <class T>
T amplifying_beating_factor(T l_over_xi, T s) {
    using std::sin, std::tan;
    return l_over_xi * (T(1) / tan(s) - T(1) / sin(s));
}

/// The printed absorbing homodyne factor (l/xi_a)(coth s + 1/sinh s). Kept
/// only so the tests can document that it fails the L -> 0 limit and the
/// continuation onto the amplifying result.
template <class T>
T absorbing_beating_factor_as_printed(T l_over_xi, T s) {
    using std::sinh, std::tanh;
    return l_over_xi * (T(1) / tanh(s) + T(1) / sinh(s));
}

inline double homodyne_average(const WaveguideRatios& w, double transmission_profile, double beating_factor,
                               double incident_shape) {
    const double pref = 8.0 * w.efficiency * w.coupling / 3.0;
    return 1.0 - pref * w.l_over_xi / (static_cast<double>(w.n_modes)) * transmission_profile * incident_shape +
           pref * w.occupation * beating_factor;
}

}  // namespace detail

/// <F_direct> for an absorbing waveguide:
///   1 + (4 l d / 3 xi_a sinh s)(F_in - 1) + (d/2) f [3 - (2s + coth s)/sinh s - (s coth s - 1)/sinh^2 s + s/sinh^3 s]
inline double fano_direct_absorbing_avg(const WaveguideRatios& w) {
    w.validate();
    const double d = w.efficiency;
    return 1.0 + 4.0 * w.l_over_xi * d / (3.0 * std::sinh(w.s)) * (w.fano_in - 1.0) +
           0.5 * d * w.occupation * detail::absorbing_direct_bracket(w.s);
}

/// <F_direct> for an amplifying waveguide below threshold (0 < s < pi).
inline double fano_direct_amplifying_avg(const WaveguideRatios& w) {
    w.validate();
    detail::require_below_threshold(w.s);
    const double d = w.efficiency;
    return 1.0 + 4.0 * w.l_over_xi * d / (3.0 * std::sin(w.s)) * (w.fano_in - 1.0) +
           0.5 * d * w.occupation * detail::amplifying_direct_bracket(w.s);
}

/// <F_homo^min> for an absorbing waveguide:
///   1 - (8 l d k / 3 N xi_a sinh s) e^-rho sinh rho + (8 l d k / 3 xi_a) f [coth s - 1/sinh s]
inline double fano_homo_min_absorbing_avg(const WaveguideRatios& w) {
    w.validate();
    return detail::homodyne_average(w, 1.0 / std::sinh(w.s), detail::absorbing_beating_factor(w.l_over_xi, w.s),
                                    std::exp(-w.rho) * std::sinh(w.rho));
}

/// <F_homo^min> for an amplifying waveguide:
///   1 - (8 l d k / 3 N xi_a sin s) e^-rho sinh rho + (8 l d k / 3 xi_a) f [cot s - 1/sin s]
inline double fano_homo_min_amplifying_avg(const WaveguideRatios& w) {
    w.validate();
    detail::require_below_threshold(w.s);
    return detail::homodyne_average(w, 1.0 / std::sin(w.s), detail::amplifying_beating_factor(w.l_over_xi, w.s),
                                    std::exp(-w.rho) * std::sinh(w.rho));
}

/// Homodyne average with the probe phase held fixed instead of tuned per
/// sample: e^-rho in the incident term becomes -sinh rho.
inline double fano_homo_fixed_phase_avg(const WaveguideRatios& w, MediumKind kind) {
    w.validate();
    const double shape = -std::sinh(w.rho) * std::sinh(w.rho);
    if (kind == MediumKind::amplifying) {
        detail::require_below_threshold(w.s);
        return detail::homodyne_average(w, 1.0 / std::sin(w.s), detail::amplifying_beating_factor(w.l_over_xi, w.s),
                                        shape);
    }
    return detail::homodyne_average(w, 1.0 / std::sinh(w.s), detail::absorbing_beating_factor(w.l_over_xi, w.s), shape);
}

struct ZeroLengthLimits {
    double fano_direct = 1.0;
    double fano_homodyne_min = 1.0;
};

/// L -> 0 values: F_direct = 1 + d (F_in - 1), F_homo^min = 1 - 2 delta_{n0 m0} d k e^-rho sinh rho.
inline ZeroLengthLimits zero_length_limits(double fano_in, double rho, const DetectionConfig& config, bool same_mode) {
    config.validate();
    ZeroLengthLimits out;
    out.fano_direct = 1.0 + config.efficiency * (fano_in - 1.0);
    if (config.homodyne && same_mode)
        out.fano_homodyne_min =
            1.0 - 2.0 * config.efficiency * config.homodyne->coupling * std::exp(-rho) * std::sinh(rho);
    return out;
}

inline ZeroLengthLimits zero_length_limits(const SqueezedInput& input, const DetectionConfig& config) {
    const bool same = config.homodyne && config.homodyne->probe_mode == input.incident_mode;
    return zero_length_limits(fano_in_squeezed(input), input.rho, config, same);
}

}  // namespace sqt
