#pragma once

// Brute-force single-mode photon statistics in a truncated Fock basis.
// Independent of photostatistics.hpp on purpose: only std::complex and
// std::vector are shared.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "sqt/errors.hpp"

namespace sqt::fock {

using amp = std::complex<double>;

struct FockState {
    std::vector<amp> amplitudes;  // c_0 .. c_nmax
    int n_max = 0;
    double leaked_norm = 0.0;  // weight beyond n_max before renormalization

    double mean_count() const {
        double m = 0.0;
        for (std::size_t n = 0; n < amplitudes.size(); ++n) m += static_cast<double>(n) * std::norm(amplitudes[n]);
        return m;
    }
};

struct PhotoStats {
    std::vector<double> distribution;  // P(n)
    double kappa1 = 0.0;
    double kappa2 = 0.0;  // <n(n-1)> - <n>^2
    double fano = 1.0;
    double total_probability = 0.0;
};

inline int minimum_truncation(double mean_count) {
    return static_cast<int>(std::ceil(4.0 * mean_count)) + 40;
}

namespace detail {

inline std::vector<amp> squeezed_recursion(amp alpha, double rho, double phi, int n_last) {
    const double ch = std::cosh(rho);
    const double sh = std::sinh(rho);
    const amp rot = std::polar(1.0, phi);
    const amp gamma = alpha * ch + std::conj(alpha) * rot * sh;
    std::vector<amp> c(static_cast<std::size_t>(n_last) + 1, amp{0.0, 0.0});
    c[0] = 1.0;
    for (int n = 0; n < n_last; ++n) {
        amp next = gamma * c[n];
        if (n > 0) next -= rot * sh * std::sqrt(static_cast<double>(n)) * c[n - 1];
        c[n + 1] = next / (ch * std::sqrt(static_cast<double>(n + 1)));
        // keep the running amplitudes O(1); the overall scale is fixed at the end
        if (std::abs(c[n + 1]) > 1e150) {
            for (int k = 0; k <= n + 1; ++k) c[k] *= 1e-150;
        }
    }
    return c;
}

inline PhotoStats summarize(std::vector<double> p) {
    PhotoStats out;
    double total = 0.0, m1 = 0.0, f2 = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        const double nn = static_cast<double>(n);
        total += p[n];
        m1 += nn * p[n];
        f2 += nn * (nn - 1.0) * p[n];
    }
    out.total_probability = total;
    out.kappa1 = m1;
    out.kappa2 = f2 - m1 * m1;
    out.fano = m1 > 0.0 ? 1.0 + out.kappa2 / m1 : 1.0;
    out.distribution = std::move(p);
    return out;
}

inline void check_probability(const PhotoStats& s, const char* op) {
    for (double p : s.distribution)
        if (p < -1e-12) throw TruncationLeak(std::string(op) + ": negative probability " + std::to_string(p));
    if (s.total_probability < 1.0 - 1e-8 || s.total_probability > 1.0 + 1e-10)
        throw TruncationLeak(std::string(op) + ": total probability " + std::to_string(s.total_probability) +
                             " outside [1 - 1e-8, 1]");
}

/// Thermal weights f^k / (1 + f)^(k+1), cut once they fall below `cut`.
inline std::vector<double> thermal_weights(double occupation, double cut = 1e-12) {
    std::vector<double> w;
    if (occupation == 0.0) return {1.0};
    const double q = occupation / (1.0 + occupation);
    double pk = 1.0 / (1.0 + occupation);
    while (pk >= cut) {
        w.push_back(pk);
        pk *= q;
        if (w.size() > 100000) throw TruncationLeak("thermal_weights: occupation too large for the oracle");
    }
    return w;
}

}  // namespace detail

/// D(alpha) S(rho e^{i phi}) |0>, built from the eigenvalue recursion
/// cosh rho sqrt(n+1) c_{n+1} = gamma c_n - e^{i phi} sinh rho sqrt(n) c_{n-1}.
inline FockState squeezed_coherent_fock(amp alpha, double rho, double phi, int n_max) {
    const double mean = std::norm(alpha) + std::sinh(rho) * std::sinh(rho);
    if (n_max < minimum_truncation(mean))
        throw InvalidArgument("squeezed_coherent_fock: n_max must be >= 4 <n> + 40 = " +
                              std::to_string(minimum_truncation(mean)));
    // Run past n_max to measure what the truncation drops.
    const int n_probe = 2 * n_max + 40;
    std::vector<amp> c = detail::squeezed_recursion(alpha, rho, phi, n_probe);
    double kept = 0.0, total = 0.0;
    for (int n = 0; n <= n_probe; ++n) {
        const double w = std::norm(c[n]);
        total += w;
        if (n <= n_max) kept += w;
    }
    FockState out;
    out.n_max = n_max;
    out.leaked_norm = 1.0 - kept / total;
    if (out.leaked_norm > 1e-8)
        throw TruncationLeak("squeezed_coherent_fock: truncation at n_max = " + std::to_string(n_max) + " loses " +
                             std::to_string(out.leaked_norm) + " of the norm");
    c.resize(static_cast<std::size_t>(n_max) + 1);
    const double scale = 1.0 / std::sqrt(kept);
    for (auto& x : c) x *= scale;
    out.amplitudes = std::move(c);
    return out;
}

namespace detail {

/// Photon-number kernel of a_out = t a + s b with b thermal (occupation f_env).
/// Phase-insensitive channels map distributions to distributions, so only
/// p_in enters.
inline std::vector<double> lossy_kernel(const std::vector<double>& p_in, double t, double f_env) {
    const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
    const std::vector<double> weights = thermal_weights(f_env);
    const int n_max = static_cast<int>(p_in.size()) - 1;
    const int k_max = static_cast<int>(weights.size()) - 1;
    std::vector<double> p(static_cast<std::size_t>(n_max + k_max) + 1, 0.0);

    // v[p] is the amplitude of |p, total - p>.
    auto raise = [](const std::vector<double>& v, int total, double ca, double cb) {
        std::vector<double> out(static_cast<std::size_t>(total) + 2, 0.0);
        for (int q = 0; q <= total + 1; ++q) {
            double x = 0.0;
            if (q >= 1) x += ca * std::sqrt(static_cast<double>(q)) * v[q - 1];
            if (q <= total) x += cb * std::sqrt(static_cast<double>(total + 1 - q)) * v[q];
            out[q] = x;
        }
        return out;
    };

    for (int k = 0; k <= k_max; ++k) {
        // U |0, k> from (s a^dagger + t b^dagger)^k / sqrt(k!)
        std::vector<double> v{1.0};
        for (int j = 0; j < k; ++j) {
            v = raise(v, j, s, t);
            for (auto& x : v) x /= std::sqrt(static_cast<double>(j + 1));
        }
        for (int n = 0; n <= n_max; ++n) {
            if (n > 0) {
                // U a^dagger U^dagger = t a^dagger - s b^dagger
                v = raise(v, n - 1 + k, t, -s);
                for (auto& x : v) x /= std::sqrt(static_cast<double>(n));
            }
            const double wn = weights[k] * p_in[n];
            if (wn == 0.0) continue;
            for (int m = 0; m <= n + k; ++m) p[m] += wn * v[m] * v[m];
        }
    }
    return p;
}

/// Photon-number kernel of the quantum-limited amplifier a_out = g a + v c^dagger,
/// idler c in vacuum. |n> goes to a negative binomial,
/// P(m|n) = C(m, n) G^-(n+1) (1 - 1/G)^(m-n), G = g^2. Evaluated in logs; the
/// ladder-operator recursion used for the passive case loses all digits here.
inline std::vector<double> amplifier_kernel(const std::vector<double>& p_in, double g) {
    const double gain = g * g;
    if (gain == 1.0) return p_in;
    const int n_max = static_cast<int>(p_in.size()) - 1;
    const double log_q = std::log1p(-1.0 / gain);
    const int m_max = n_max + static_cast<int>(std::ceil(2.0 * gain * (n_max + 1) + 40.0 * std::log(10.0) / -log_q)) + 40;
    std::vector<double> p(static_cast<std::size_t>(m_max) + 1, 0.0);
    for (int n = 0; n <= n_max; ++n) {
        if (p_in[n] == 0.0) continue;
        const double base = -(n + 1.0) * std::log(gain) - std::lgamma(n + 1.0);
        for (int m = n; m <= m_max; ++m) {
            const double lp = base + std::lgamma(m + 1.0) - std::lgamma(m - n + 1.0) + (m - n) * log_q;
            p[m] += p_in[n] * std::exp(lp);
        }
    }
    while (p.size() > 1 && p.back() == 0.0) p.pop_back();
    return p;
}

inline std::vector<double> populations(const FockState& state) {
    std::vector<double> p(state.amplitudes.size());
    for (std::size_t n = 0; n < p.size(); ++n) p[n] = std::norm(state.amplitudes[n]);
    return p;
}

}  // namespace detail

/// Passive two-mode mixing a_out = t a + s b with a thermal environment b
/// (occupation f_env), environment traced out.
inline PhotoStats lossy_channel_photostats(const FockState& state, double transmission_amplitude, double f_env) {
    const double t = transmission_amplitude;
    if (!(std::abs(t) <= 1.0)) throw InvalidArgument("lossy_channel_photostats: |t| must be <= 1");
    if (!(f_env >= 0.0)) throw InvalidArgument("lossy_channel_photostats: f_env must be >= 0");
    PhotoStats out = detail::summarize(detail::lossy_kernel(detail::populations(state), t, f_env));
    detail::check_probability(out, "lossy_channel_photostats");
    return out;
}

/// Phase-insensitive amplifier a_out = g a + sqrt(g^2 - 1) c^dagger. The idler c
/// starts in a thermal state with n_c = -f - 1, so f = -1 (default) is complete
/// inversion with the idler in vacuum. f in (-1, 0) has no idler state and is rejected.
///
/// A thermal idler is not expanded in idler Fock states: that recursion is
/// unstable for large idler counts. The channel with gain G = g^2 and idler n_c
/// equals pure loss eta = G / G' followed by a vacuum-idler amplifier of gain
/// G' = 1 + (G - 1)(1 + n_c); both have the same Gaussian scaling and noise.
inline PhotoStats amplifying_channel_photostats(const FockState& state, double gain_amplitude,
                                                double occupation = -1.0) {
    const double g = std::abs(gain_amplitude);
    if (!(g >= 1.0)) throw InvalidArgument("amplifying_channel_photostats: |g| must be >= 1");
    if (!(occupation <= -1.0))
        throw InvalidArgument("amplifying_channel_photostats: occupation must be <= -1 (idler occupation -f-1 >= 0)");
    const double gain = g * g;
    const double n_c = -occupation - 1.0;
    std::vector<double> p = detail::populations(state);
    double g_eff = g;
    if (n_c > 0.0 && gain > 1.0) {
        const double gain_eff = 1.0 + (gain - 1.0) * (1.0 + n_c);
        p = detail::lossy_kernel(p, std::sqrt(gain / gain_eff), 0.0);
        g_eff = std::sqrt(gain_eff);
    }
    PhotoStats out = detail::summarize(detail::amplifier_kernel(p, g_eff));
    detail::check_probability(out, "amplifying_channel_photostats");
    return out;
}

/// Input statistics of the state itself (identity channel).
inline PhotoStats photostats(const FockState& state) { return detail::summarize(detail::populations(state)); }

}  // namespace sqt::fock
