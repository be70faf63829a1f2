#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sqt/errors.hpp"
#include "sqt/parallel.hpp"
#include "sqt/random.hpp"
#include "sqt/scattering_matrix.hpp"

namespace sqt {

/// Physical description of a disordered waveguide. Lengths are measured in
/// units of the elementary slice thickness.
struct MediumSpec {
    int n_modes = 1;
    double total_length = 0.0;
    double scatter_strength = 0.3;
    int loss_gain_sign = 0;               // +1 absorbing, -1 amplifying, 0 passive
    double ballistic_decay_length = 0.0;  // amplitude factor per slice exp(-+1/(2 l_abs))
    double occupation = 0.0;              // Bose-Einstein f, negative for an amplifier
    std::uint64_t seed = 0;

    MediumKind kind() const {
        if (loss_gain_sign > 0) return MediumKind::absorbing;
        if (loss_gain_sign < 0) return MediumKind::amplifying;
        return MediumKind::passive;
    }

    void validate() const {
        if (n_modes < 1) throw InvalidArgument("MediumSpec: n_modes must be >= 1");
        if (!(total_length >= 0.0) || !std::isfinite(total_length))
            throw InvalidArgument("MediumSpec: total_length must be finite and >= 0");
        if (!(scatter_strength > 0.0)) throw InvalidArgument("MediumSpec: scatter_strength must be > 0");
        if (loss_gain_sign < -1 || loss_gain_sign > 1)
            throw InvalidArgument("MediumSpec: loss_gain_sign must be -1, 0 or +1");
        if (loss_gain_sign != 0 && !(ballistic_decay_length > 0.0))
            throw InvalidArgument("MediumSpec: ballistic_decay_length must be > 0 for an absorbing or amplifying medium");
        if (loss_gain_sign > 0 && occupation < 0.0)
            throw InvalidArgument("MediumSpec: occupation must be >= 0 for an absorbing medium");
        if (loss_gain_sign < 0 && !(occupation < 0.0))
            throw InvalidArgument("MediumSpec: occupation must be < 0 for an amplifying medium");
    }

    /// Number of slice + propagation periods needed to cover total_length.
    long periods() const { return periods_for(total_length); }

    static long periods_for(double length) {
        return static_cast<long>(std::ceil(length - 1e-9));
    }
};

namespace detail {

/// Hermitian 2N x 2N matrix: complex Gaussian off-diagonal entries with
/// E|K_ij|^2 = 1/(2N), real Gaussian diagonal entries of variance 1/(2N).
inline Matrix gaussian_hermitian(int n_modes, Rng& rng) {
    const int dim = 2 * n_modes;
    const double var = 1.0 / (2.0 * n_modes);
    std::normal_distribution<double> diag(0.0, std::sqrt(var));
    std::normal_distribution<double> offdiag(0.0, std::sqrt(var / 2.0));
    Matrix k(dim, dim);
    for (int j = 0; j < dim; ++j) {
        k(j, j) = diag(rng);
        for (int i = j + 1; i < dim; ++i) {
            const double re = offdiag(rng);
            const double im = offdiag(rng);
            k(i, j) = cplx(re, im);
            k(j, i) = cplx(re, -im);
        }
    }
    return k;
}

/// Largest |eigenvalue| of a Hermitian matrix by power iteration (estimate).
inline double spectral_radius_estimate(const Matrix& h, int iterations = 12) {
    Vector v(h.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(1.0, 0.37 * static_cast<double>(i % 7));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vector w = h * v;
        lambda = w.norm();
        if (lambda == 0.0) return 0.0;
        v = w / lambda;
    }
    return lambda;
}

/// max |(U^dagger U - 1)_ij|.
inline double unitarity_drift(const Matrix& u) {
    return (u.adjoint() * u - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

/// Cheap drift probe: max | |U v|^2 - |v|^2 | over a few fixed unit vectors.
inline double unitarity_drift_probe(const Matrix& u) {
    const Eigen::Index n = u.cols();
    double worst = 0.0;
    for (int probe = 0; probe < 3; ++probe) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = std::polar(1.0, 2.399963 * static_cast<double>((probe + 1) * (i + 1)));
        v /= std::sqrt(static_cast<double>(n));
        worst = std::max(worst, std::abs((u * v).squaredNorm() - 1.0));
    }
    return worst;
}

/// Newton-Schulz polar iteration: pulls a nearly unitary matrix onto the
/// unitary factor of its polar decomposition.
inline void restore_unitarity(Matrix& u, double target = 1e-14) {
    const Matrix id = Matrix::Identity(u.cols(), u.cols());
    for (int it = 0; it < 8; ++it) {
        const Matrix g = u.adjoint() * u;
        if ((g - id).cwiseAbs().maxCoeff() <= target) return;
        u = (0.5 * u * (3.0 * id - g)).eval();
    }
}

/// exp(i eps K) for Hermitian K: degree-15 Taylor polynomial in
/// Paterson-Stockmeyer form (6 products), with squaring only when
/// eps |K| exceeds 0.8. Truncation error < 2e-15 in the unscaled regime.
inline Matrix exp_i_hermitian(const Matrix& k, double eps) {
    const double radius = 1.2 * std::abs(eps) * spectral_radius_estimate(k);
    int squarings = 0;
    while (radius / std::ldexp(1.0, squarings) > 0.8) ++squarings;
    const Matrix x = (cplx(0.0, eps) / std::ldexp(1.0, squarings)) * k;

    constexpr int degree = 15;
    double coeff[degree + 1];
    coeff[0] = 1.0;
    for (int j = 1; j <= degree; ++j) coeff[j] = coeff[j - 1] / j;

    const Matrix x2 = x * x;
    const Matrix x3 = x2 * x;
    const Matrix x4 = x2 * x2;
    auto chunk = [&](int base) {
        Matrix b = coeff[base + 1] * x + coeff[base + 2] * x2 + coeff[base + 3] * x3;
        b.diagonal().array() += coeff[base];
        return b;
    };
    Matrix result = chunk(12);
    for (int base : {8, 4, 0}) {
        Matrix next = chunk(base);
        next.noalias() += result * x4;
        result.swap(next);
    }
    for (int s = 0; s < squarings; ++s) result = (result * result).eval();
    return result;
}

inline void check_cavity(const Eigen::PartialPivLU<Matrix>& lu) {
    const double rcond = lu.rcond();
    if (!(rcond >= 1e-12))
        throw NearSingularCavity("star product: 1 - r_A r'_B has condition number ~" +
                                 std::to_string(1.0 / rcond) + " (> 1e12)");
}

inline MediumKind combined_kind(MediumKind a, MediumKind b) {
    if (a == b) return a;
    if (a == MediumKind::passive) return b;
    if (b == MediumKind::passive) return a;
    // Mixed absorbing/amplifying sections carry no definite sign.
    return MediumKind::absorbing;
}

/// A (x) P where P is a reflectionless unit with t = t' = diag(p).
inline ScatteringMatrix append_diagonal_transmission(const ScatteringMatrix& a, const Vector& p,
                                                     MediumKind kind) {
    Matrix t = p.asDiagonal() * a.t();
    Matrix r = p.asDiagonal() * a.r() * p.asDiagonal();
    Matrix tp = a.t_prime() * p.asDiagonal();
    return {a.r_prime(), std::move(tp), std::move(t), std::move(r), kind};
}

}  // namespace detail

/// One elementary scattering slice, U = exp(i eps K) with K drawn from the
/// Gaussian unitary ensemble (entry variance 1/(2N)), read in the
/// transmission basis: S = [[0, 1], [1, 0]] U. As eps -> 0 the slice becomes
/// the identity-transmission matrix, and tr(r' r'^dagger)/N ~ eps^2 / 2.
inline ScatteringMatrix sample_slice(int n_modes, double scatter_strength, Rng& rng) {
    if (n_modes < 1) throw InvalidArgument("sample_slice: n_modes must be >= 1");
    if (!(scatter_strength > 0.0)) throw InvalidArgument("sample_slice: scatter_strength must be > 0");
    const Matrix k = detail::gaussian_hermitian(n_modes, rng);
    Matrix u = detail::exp_i_hermitian(k, scatter_strength);
    if (detail::unitarity_drift_probe(u) > 1e-13) detail::restore_unitarity(u);
    const Eigen::Index n = n_modes;
    return {u.bottomLeftCorner(n, n), u.bottomRightCorner(n, n), u.topLeftCorner(n, n), u.topRightCorner(n, n),
            MediumKind::passive};
}

/// Diagonal transmission amplitudes exp(i theta_n) exp(-+1/(2 l_abs)) of one propagation unit.
inline Vector propagation_amplitudes(int n_modes, int loss_gain_sign, double ballistic_decay_length, Rng& rng) {
    if (n_modes < 1) throw InvalidArgument("propagation_unit: n_modes must be >= 1");
    if (loss_gain_sign != 0 && !(ballistic_decay_length > 0.0))
        throw InvalidArgument("propagation_unit: ballistic_decay_length must be > 0 unless passive");
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double modulus =
        loss_gain_sign == 0 ? 1.0 : std::exp(-static_cast<double>(loss_gain_sign) / (2.0 * ballistic_decay_length));
    Vector p(n_modes);
    for (int n = 0; n < n_modes; ++n) p[n] = std::polar(modulus, phase(rng));
    return p;
}

inline MediumKind kind_from_sign(int loss_gain_sign) {
    return loss_gain_sign > 0 ? MediumKind::absorbing
                              : (loss_gain_sign < 0 ? MediumKind::amplifying : MediumKind::passive);
}

/// Reflectionless propagation over one slice thickness with uniform loss
/// (sign +1) or gain (sign -1) and independent random phases.
inline ScatteringMatrix propagation_unit(int n_modes, int loss_gain_sign, double ballistic_decay_length, Rng& rng) {
    const Vector p = propagation_amplitudes(n_modes, loss_gain_sign, ballistic_decay_length, rng);
    const Matrix zero = Matrix::Zero(n_modes, n_modes);
    const Matrix diag = p.asDiagonal();
    return {zero, diag, diag, zero, kind_from_sign(loss_gain_sign)};
}

/// Composite scattering matrix of section A followed (to the right) by B.
///   t_AB  = t_B (1 - r_A r'_B)^-1 t_A
///   r'_AB = r'_A + t'_A r'_B (1 - r_A r'_B)^-1 t_A
///   r_AB  = r_B + t_B r_A (1 - r'_B r_A)^-1 t'_B
///   t'_AB = t'_A (1 - r'_B r_A)^-1 t'_B
/// Only (1 - r_A r'_B) is factorized; the second resolvent follows from
/// r_A (1 - r'_B r_A)^-1 = (1 - r_A r'_B)^-1 r_A.
inline ScatteringMatrix star_compose(const ScatteringMatrix& a, const ScatteringMatrix& b) {
    if (a.n_modes() != b.n_modes()) throw InvalidArgument("star_compose: mode counts differ");
    const Eigen::Index n = a.n_modes();
    Matrix cavity = Matrix::Identity(n, n);
    cavity.noalias() -= a.r() * b.r_prime();
    const Eigen::PartialPivLU<Matrix> lu(cavity);
    detail::check_cavity(lu);

    Matrix rhs(n, 2 * n);
    rhs.leftCols(n) = a.t();
    rhs.rightCols(n).noalias() = a.r() * b.t_prime();
    const Matrix sol = lu.solve(rhs);
    const auto y = sol.leftCols(n);   // (1 - r_A r'_B)^-1 t_A
    const auto w = sol.rightCols(n);  // (1 - r_A r'_B)^-1 r_A t'_B

    Matrix t = b.t() * y;
    Matrix r_prime = a.r_prime();
    r_prime.noalias() += a.t_prime() * (b.r_prime() * y);
    Matrix r = b.r();
    r.noalias() += b.t() * w;
    Matrix inner = b.t_prime();
    inner.noalias() += b.r_prime() * w;
    Matrix t_prime = a.t_prime() * inner;
    return {std::move(r_prime), std::move(t_prime), std::move(t), std::move(r),
            detail::combined_kind(a.kind(), b.kind())};
}

/// 1 - S S^dagger; equals Q Q^dagger for an absorber and -V V^dagger for an amplifier.
inline Matrix deviation_from_unitarity(const ScatteringMatrix& s) {
    const Matrix full = s.full();
    Matrix d = Matrix::Identity(full.rows(), full.cols());
    d.noalias() -= full * full.adjoint();
    return d;
}

/// Grows a medium period by period (slice, then propagation unit) from a
/// single random stream. Reading the state at several lengths gives media
/// that share their slice prefix.
class MediumBuilder {
public:
    explicit MediumBuilder(const MediumSpec& spec)
        : spec_(spec), rng_(spec.seed), current_(ScatteringMatrix::identity(spec.n_modes, spec.kind())) {
        spec_.validate();
    }

    long periods_done() const noexcept { return periods_; }
    const ScatteringMatrix& current() const noexcept { return current_; }

    /// Append periods until `target` periods have been composed.
    void advance_to(long target) {
        const MediumKind kind = spec_.kind();
        while (periods_ < target) {
            const ScatteringMatrix slice = sample_slice(spec_.n_modes, spec_.scatter_strength, rng_);
            const Vector p = propagation_amplitudes(spec_.n_modes, spec_.loss_gain_sign,
                                                    spec_.ballistic_decay_length, rng_);
            const ScatteringMatrix unit = detail::append_diagonal_transmission(slice, p, kind);
            current_ = periods_ == 0 ? unit : star_compose(current_, unit);
            ++periods_;
        }
    }

    /// Current composite, checked against the invariants of its medium kind.
    ScatteringMatrix checked() const {
        ScatteringMatrix s = current_.with_kind(spec_.kind());
        check_invariants(s);
        return s;
    }

private:
    MediumSpec spec_;
    Rng rng_;
    ScatteringMatrix current_;
    long periods_ = 0;
};

/// Scattering matrix of the medium described by `spec`; deterministic in spec.seed.
inline ScatteringMatrix build_medium(const MediumSpec& spec) {
    MediumBuilder builder(spec);
    builder.advance_to(spec.periods());
    return builder.checked();
}

/// Ohm's-law estimate of the mean free path of the slice model.
struct MeanFreePath {
    double length = 0.0;     // slope^-1 of N / <tr t^dagger t> against L
    double stderr = 0.0;     // jackknife over samples
    double intercept = 0.0;  // ideally 1
    double max_relative_residual = 0.0;
    std::vector<double> lengths;
    std::vector<double> inverse_transmission;  // N / <tr t^dagger t> per length
};

namespace detail {

struct LineFit {
    double intercept;
    double slope;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {(sy - slope * sx) / n, slope};
}

inline double length_from_slope(double slope) {
    return slope > 0.0 ? 1.0 / slope : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Fit N / <tr t^dagger t> = a + L / l over passive media of the given
/// lengths (slice units). Each sample is grown once and read at every
/// length. Throws FitFailed when the affine law misses a point by > 10%.
inline MeanFreePath calibrate_mean_free_path(int n_modes, double scatter_strength, std::vector<double> lengths,
                                             int samples_per_length, std::uint64_t seed, unsigned threads = 1) {
    if (lengths.size() < 3) throw InvalidArgument("calibrate_mean_free_path: need at least 3 lengths");
    if (samples_per_length < 2) throw InvalidArgument("calibrate_mean_free_path: need at least 2 samples per length");
    std::sort(lengths.begin(), lengths.end());
    if (!(lengths.front() > 0.0) || lengths.back() < 4.0 * lengths.front())
        throw InvalidArgument("calibrate_mean_free_path: lengths must be positive and span a factor >= 4");

    const std::size_t n_len = lengths.size();
    const std::size_t n_samp = static_cast<std::size_t>(samples_per_length);
    std::vector<double> transmission(n_samp * n_len);  // tr t^dagger t, row per sample
    parallel_for(n_samp, threads, [&](std::size_t k) {
        MediumSpec spec;
        spec.n_modes = n_modes;
        spec.scatter_strength = scatter_strength;
        spec.total_length = lengths.back();
        spec.seed = sample_seed(seed, k);
        MediumBuilder builder(spec);
        for (std::size_t j = 0; j < n_len; ++j) {
            builder.advance_to(MediumSpec::periods_for(lengths[j]));
            transmission[k * n_len + j] = builder.current().t().squaredNorm();
        }
    });

    auto fit_excluding = [&](std::size_t skip, std::vector<double>* y_out) {
        std::vector<double> y(n_len);
        const double count = static_cast<double>(skip < n_samp ? n_samp - 1 : n_samp);
        for (std::size_t j = 0; j < n_len; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < n_samp; ++k)
                if (k != skip) sum += transmission[k * n_len + j];
            y[j] = static_cast<double>(n_modes) / (sum / count);
        }
        if (y_out) *y_out = y;
        return detail::least_squares_line(lengths, y);
    };

    MeanFreePath out;
    out.lengths = lengths;
    const detail::LineFit fit = fit_excluding(n_samp, &out.inverse_transmission);
    out.intercept = fit.intercept;
    out.length = detail::length_from_slope(fit.slope);
    for (std::size_t j = 0; j < n_len; ++j) {
        const double model = fit.intercept + fit.slope * lengths[j];
        out.max_relative_residual =
            std::max(out.max_relative_residual, std::abs(model - out.inverse_transmission[j]) / out.inverse_transmission[j]);
    }

    // Jackknife on the slope, propagated to l = 1/slope.
    std::vector<double> slopes(n_samp);
    double mean_slope = 0.0;
    for (std::size_t k = 0; k < n_samp; ++k) {
        slopes[k] = fit_excluding(k, nullptr).slope;
        mean_slope += slopes[k];
    }
    mean_slope /= static_cast<double>(n_samp);
    double var = 0.0;
    for (double s : slopes) var += (s - mean_slope) * (s - mean_slope);
    var *= static_cast<double>(n_samp - 1) / static_cast<double>(n_samp);
    out.stderr = fit.slope > 0.0 ? std::sqrt(var) / (fit.slope * fit.slope) : std::numeric_limits<double>::infinity();

    if (out.max_relative_residual > 0.10)
        throw FitFailed("calibrate_mean_free_path: Ohm's-law fit misses a point by " +
                        std::to_string(100.0 * out.max_relative_residual) + "% (> 10%)");
    return out;
}

/// Slice-model lengths that realize a requested ratio l / xi_a.
///
/// The slice model is a two-stream transport problem: per slice a fraction
/// 1/l_ohm of each stream is reflected and a fraction a = 1/l_abs of the
/// intensity is absorbed (a < 0: amplified). Its intensity obeys
/// u'' = a (2/l_ohm + a) u, so xi_a^-2 = |a (2/l_ohm + a)|, and
/// <tr t^dagger t>/N -> (l_ohm/xi_a)/sinh(L/xi_a). Matching the large-N
/// average (4 l / 3 xi_a)/sinh(L/xi_a) identifies l = 3 l_ohm / 4.
struct DiffusiveScales {
    double ohm_length = 0.0;              // l_ohm from calibrate_mean_free_path
    double mean_free_path = 0.0;          // l = 3 l_ohm / 4
    double absorption_length = 0.0;       // xi_a
    double ballistic_decay_length = 0.0;  // l_abs

    double length_for(double s) const { return s * absorption_length; }
};

inline DiffusiveScales diffusive_scales(double ohm_length, double l_over_xi, int loss_gain_sign) {
    if (!(ohm_length > 0.0) || !std::isfinite(ohm_length))
        throw InvalidArgument("diffusive_scales: ohm_length must be positive and finite");
    if (!(l_over_xi > 0.0)) throw InvalidArgument("diffusive_scales: l/xi_a must be > 0");
    DiffusiveScales out;
    out.ohm_length = ohm_length;
    out.mean_free_path = 0.75 * ohm_length;
    out.absorption_length = out.mean_free_path / l_over_xi;
    const double sigma = 1.0 / ohm_length;
    const double inv_xi2 = 1.0 / (out.absorption_length * out.absorption_length);
    if (loss_gain_sign > 0) {
        out.ballistic_decay_length = 1.0 / (std::sqrt(sigma * sigma + inv_xi2) - sigma);
    } else if (loss_gain_sign < 0) {
        if (sigma * sigma < inv_xi2)
            throw InvalidArgument("diffusive_scales: gain too strong for a diffusive amplifier (xi_a < l_ohm)");
        out.ballistic_decay_length = 1.0 / (sigma - std::sqrt(sigma * sigma - inv_xi2));
    } else {
        out.ballistic_decay_length = std::numeric_limits<double>::infinity();
    }
    return out;
}

}  // namespace sqt
