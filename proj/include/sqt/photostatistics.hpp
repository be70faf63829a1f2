#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sqt/errors.hpp"
#include "sqt/scattering_matrix.hpp"

namespace sqt {

/// Ideal squeezed state D(alpha) S(rho e^{i phi}) |0> incident in one left-side mode.
struct SqueezedInput {
    cplx alpha{0.0, 0.0};
    double rho = 0.0;
    double phi = 0.0;
    int incident_mode = 0;  // 0-based, left side

    /// Mean photon number |alpha|^2 + sinh^2 rho.
    double mean_count() const { return std::norm(alpha) + std::sinh(rho) * std::sinh(rho); }

    void validate() const {
        if (!(rho >= 0.0) || !std::isfinite(rho)) throw InvalidArgument("SqueezedInput: rho must be finite and >= 0");
        if (!std::isfinite(phi)) throw InvalidArgument("SqueezedInput: phi must be finite");
        if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()))
            throw InvalidArgument("SqueezedInput: alpha must be finite");
        if (incident_mode < 0) throw InvalidArgument("SqueezedInput: incident_mode must be >= 0");
    }
};

enum class ModeSet { transmission, reflection, all };

/// Strong-probe homodyne setup. probe_mode indexes the right-side modes.
struct HomodyneSetup {
    double coupling = 0.5;  // kappa
    int probe_mode = 0;
    double probe_phase = 0.0;  // arg beta
};

struct DetectionConfig {
    double efficiency = 1.0;
    ModeSet mode_set = ModeSet::transmission;
    std::optional<HomodyneSetup> homodyne;

    void validate() const {
        if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw InvalidArgument("DetectionConfig: efficiency must lie in [0, 1]");
        if (homodyne) {
            if (!(homodyne->coupling > 0.0 && homodyne->coupling < 1.0))
                throw InvalidArgument("DetectionConfig: homodyne coupling must lie in (0, 1)");
            if (homodyne->probe_mode < 0) throw InvalidArgument("DetectionConfig: probe_mode must be >= 0");
        }
    }
};

/// Factorial-cumulant spectral densities at the working frequency.
struct CumulantDensities {
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double thermal_kappa1 = 0.0;
    double thermal_kappa2 = 0.0;

    double fano() const { return 1.0 + kappa2 / kappa1; }
};

/// F = 1 + incident_term + beating_term + probe_term.
struct FanoBreakdown {
    double value = 1.0;
    double incident_term = 0.0;
    double beating_term = 0.0;
    double probe_term = 0.0;
};

struct HomodyneMinimum {
    FanoBreakdown fano;
    double optimal_probe_phase = 0.0;
};

/// f = 1 / (exp(x) - 1), x = hbar omega / k T. Negative x is a negative
/// temperature and yields f < -1 (f -> -1 for complete inversion).
inline double bose_einstein(double hbar_omega_over_kt) {
    if (hbar_omega_over_kt == 0.0 || !std::isfinite(hbar_omega_over_kt)) {
        if (hbar_omega_over_kt == std::numeric_limits<double>::infinity()) return 0.0;
        if (hbar_omega_over_kt == -std::numeric_limits<double>::infinity()) return -1.0;
        throw DomainError("bose_einstein: occupation diverges at hbar omega / kT = 0");
    }
    return 1.0 / std::expm1(hbar_omega_over_kt);
}

/// The bracket |a cosh - a* e^{i phi} sinh|^2 - |a|^2 + sinh^2 (cosh^2 + sinh^2),
/// i.e. the second factorial cumulant of the incident squeezed state.
inline double squeezed_excess(const SqueezedInput& in) {
    const double ch = std::cosh(in.rho);
    const double sh = std::sinh(in.rho);
    const cplx quad = in.alpha * ch - std::conj(in.alpha) * std::polar(1.0, in.phi) * sh;
    return std::norm(quad) - std::norm(in.alpha) + sh * sh * (ch * ch + sh * sh);
}

/// Fano factor of the incident squeezed state in ideal direct detection.
inline double fano_in_squeezed(const SqueezedInput& in) {
    in.validate();
    const double n = in.mean_count();
    if (!(n > 0.0)) throw ZeroMeanCount("fano_in_squeezed: |alpha|^2 + sinh^2 rho = 0");
    return 1.0 + squeezed_excess(in) / n;
}

namespace detail {

inline void require_mode(int index, Eigen::Index n_modes, const char* what) {
    if (index < 0 || index >= n_modes)
        throw InvalidArgument(std::string(what) + " " + std::to_string(index) + " out of range [0, " +
                              std::to_string(n_modes) + ")");
}

inline void require_transmission(const DetectionConfig& config, const char* op) {
    if (config.mode_set != ModeSet::transmission)
        throw InvalidArgument(std::string(op) + ": only detection in transmission is supported");
}

/// (1 - r r^dagger - t t^dagger), the right-side block of 1 - S S^dagger.
inline Matrix transmitted_noise_block(const ScatteringMatrix& s) {
    const Eigen::Index n = s.n_modes();
    Matrix q = Matrix::Identity(n, n);
    q.noalias() -= s.r() * s.r().adjoint();
    q.noalias() -= s.t() * s.t().adjoint();
    return q;
}

}  // namespace detail

/// Diagonal of the 2N x 2N detector-efficiency matrix D.
inline RealVector detection_efficiencies(Eigen::Index n_modes, const DetectionConfig& config) {
    RealVector d = RealVector::Zero(2 * n_modes);
    switch (config.mode_set) {
        case ModeSet::transmission: d.tail(n_modes).setConstant(config.efficiency); break;
        case ModeSet::reflection: d.head(n_modes).setConstant(config.efficiency); break;
        case ModeSet::all: d.setConstant(config.efficiency); break;
    }
    return d;
}

/// Thermal factorial-cumulant densities:
///   kappa1_th = f tr[D (1 - S S^dagger)],  kappa2_th = f^2 tr[(D (1 - S S^dagger))^2].
inline std::array<double, 2> thermal_cumulant_densities(const ScatteringMatrix& s, const DetectionConfig& config,
                                                        double occupation) {
    config.validate();
    const RealVector d = detection_efficiencies(s.n_modes(), config);
    const Matrix full = s.full();
    Matrix q = Matrix::Identity(full.rows(), full.cols());
    q.noalias() -= full * full.adjoint();
    const Matrix dq = d.asDiagonal() * q;
    const double k1 = occupation * dq.trace().real();
    const double k2 = occupation * occupation * (dq * dq).trace().real();
    return {k1, k2};
}

/// Direct-detection cumulant densities for a squeezed state incident in one
/// mode, detected in transmission:
///   kappa1 = kappa1_th + d n [t^dagger t]_mm
///   kappa2 = kappa2_th + 2 d^2 f n [t^dagger (1 - r r^dagger - t t^dagger) t]_mm
///            + d^2 [t^dagger t]_mm^2 n (F_in - 1)
/// with n = |alpha|^2 + sinh^2 rho.
inline CumulantDensities direct_cumulants_squeezed(const ScatteringMatrix& s, const SqueezedInput& in,
                                                   const DetectionConfig& config, double occupation) {
    in.validate();
    config.validate();
    detail::require_transmission(config, "direct_cumulants_squeezed");
    detail::require_mode(in.incident_mode, s.n_modes(), "incident_mode");
    const auto th = thermal_cumulant_densities(s, config, occupation);
    const double d = config.efficiency;
    const double n = in.mean_count();
    const auto col = s.t().col(in.incident_mode);
    const double tt = col.squaredNorm();
    const double beat = (col.adjoint() * detail::transmitted_noise_block(s) * col)(0, 0).real();
    CumulantDensities out;
    out.thermal_kappa1 = th[0];
    out.thermal_kappa2 = th[1];
    out.kappa1 = th[0] + d * n * tt;
    // n (F_in - 1) is the squeezed excess itself; forming it directly avoids
    // the 0/0 of F_in at n = 0.
    out.kappa2 = th[1] + 2.0 * d * d * occupation * n * beat + d * d * tt * tt * squeezed_excess(in);
    return out;
}

/// m = -z [S^dagger (1 - z D (1 - S S^dagger) f)^-1 D S]_{m0 m0}; real because
/// it is a diagonal element of a Hermitian matrix.
inline double m_element(const ScatteringMatrix& s, int incident_mode, const DetectionConfig& config,
                        double occupation, double z) {
    config.validate();
    detail::require_mode(incident_mode, s.n_modes(), "incident_mode");
    if (z == 0.0) return 0.0;
    const RealVector d = detection_efficiencies(s.n_modes(), config);
    const Matrix full = s.full();
    Matrix resolvent = Matrix::Identity(full.rows(), full.cols());
    resolvent.noalias() -= (z * occupation) * d.asDiagonal() * (Matrix::Identity(full.rows(), full.cols()) - full * full.adjoint());
    const Eigen::PartialPivLU<Matrix> lu(resolvent);
    if (!(lu.rcond() > 1e-13)) throw SingularResolvent("m_element: 1 - z D (1 - S S^dagger) f is singular");
    const Vector rhs = d.asDiagonal() * full.col(incident_mode);
    const Vector x = lu.solve(rhs);
    const cplx m = -z * full.col(incident_mode).dot(x);  // dot() conjugates the left operand
    if (std::abs(m.imag()) >= 1e-10 * std::max(1.0, std::abs(m.real())))
        throw DomainError("m_element: imaginary residue " + std::to_string(m.imag()) + " exceeds 1e-10");
    return m.real();
}

/// -ln det[1 - z D (1 - S S^dagger) f], the thermal part of the generating function.
/// Evaluated as -sum ln(1 - z lambda_i) over the eigenvalues of the Hermitian
/// f D^1/2 (1 - S S^dagger) D^1/2, so small z keeps full relative precision.
inline double log_generating_density_thermal(double z, const ScatteringMatrix& s, const DetectionConfig& config,
                                             double occupation) {
    if (z == 0.0 || occupation == 0.0) return 0.0;
    const RealVector d = detection_efficiencies(s.n_modes(), config);
    const Matrix full = s.full();
    const Eigen::Index dim = full.rows();
    const RealVector root = d.cwiseSqrt();
    Matrix b = Matrix::Identity(dim, dim) - full * full.adjoint();
    b = (occupation * root).asDiagonal() * b * root.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(b, Eigen::EigenvaluesOnly);
    double out = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double x = -z * eig.eigenvalues()[i];
        if (!(x > -1.0)) throw DomainError("thermal generating function: det[1 - z D (1 - SS^dagger) f] <= 0");
        out -= std::log1p(x);
    }
    return out;
}

/// Spectral density of the direct-detection generating function F(z) for a
/// single squeezed incident mode:
///   F_th(z) - 1/2 ln(1 + 2 m sh^2 - m^2 sh^2)
///           - m |alpha|^2 (1 + m sh [sh + ch cos(2 arg alpha - phi)]) / (1 + 2 m sh^2 - m^2 sh^2)
inline double log_generating_density_direct(double z, const ScatteringMatrix& s, const SqueezedInput& in,
                                            const DetectionConfig& config, double occupation) {
    in.validate();
    const double m = m_element(s, in.incident_mode, config, occupation, z);
    const double sh = std::sinh(in.rho);
    const double ch = std::cosh(in.rho);
    const double sh2 = sh * sh;
    const double excess = m * sh2 * (2.0 - m);
    const double denom = 1.0 + excess;
    if (!(denom > 0.0)) throw DomainError("log_generating_density_direct: 1 + 2 m sinh^2 rho - m^2 sinh^2 rho <= 0");
    const double a2 = std::norm(in.alpha);
    const double angle = a2 > 0.0 ? 2.0 * std::arg(in.alpha) - in.phi : 0.0;
    const double coherent = -m * a2 * (1.0 + m * sh * (sh + ch * std::cos(angle))) / denom;
    return log_generating_density_thermal(z, s, config, occupation) - 0.5 * std::log1p(excess) + coherent;
}

struct NumericCumulants {
    std::vector<double> values;        // kappa_1 .. kappa_k
    std::vector<double> disagreement;  // |last two Richardson levels| / max(|value|, tiny)
    bool precision_loss = false;       // some disagreement > 1e-5
};

namespace detail {

/// Second-order central stencil for the k-th derivative at 0, k = 1..4.
inline double central_derivative(const std::function<double(double)>& g, int order, double h, double g0) {
    switch (order) {
        case 1: return (g(h) - g(-h)) / (2.0 * h);
        case 2: return (g(h) - 2.0 * g0 + g(-h)) / (h * h);
        case 3: return (g(2 * h) - 2.0 * g(h) + 2.0 * g(-h) - g(-2 * h)) / (2.0 * h * h * h);
        case 4: return (g(2 * h) - 4.0 * g(h) + 6.0 * g0 - 4.0 * g(-h) + g(-2 * h)) / (h * h * h * h);
        default: throw InvalidArgument("central_derivative: order must be 1..4");
    }
}

}  // namespace detail

/// k-th derivatives at 0 of a generating density, by central differences
/// with two Richardson levels (steps h, h/2, h/4). h grows with the order
/// to keep round-off below the truncation error.
inline NumericCumulants richardson_derivatives(const std::function<double(double)>& g, int max_order,
                                               double base_step = 1e-3) {
    if (max_order < 1 || max_order > 4) throw InvalidArgument("numeric_factorial_cumulants: order must be 1..4");
    NumericCumulants out;
    const double g0 = g(0.0);
    for (int k = 1; k <= max_order; ++k) {
        const double h = base_step * std::pow(10.0, 0.5 * (k - 1));
        const double d0 = detail::central_derivative(g, k, h, g0);
        const double d1 = detail::central_derivative(g, k, h / 2, g0);
        const double d2 = detail::central_derivative(g, k, h / 4, g0);
        const double r1a = (4.0 * d1 - d0) / 3.0;
        const double r1b = (4.0 * d2 - d1) / 3.0;
        const double r2 = (16.0 * r1b - r1a) / 15.0;
        const double scale = std::max({std::abs(r2), std::abs(g0), 1e-300});
        const double gap = std::abs(r2 - r1b) / scale;
        out.values.push_back(r2);
        out.disagreement.push_back(gap);
        if (gap > 1e-5) out.precision_loss = true;
    }
    return out;
}

/// Factorial cumulants kappa_1..kappa_k from the generating density.
inline NumericCumulants numeric_factorial_cumulants(int order, const ScatteringMatrix& s, const SqueezedInput& in,
                                                    const DetectionConfig& config, double occupation) {
    return richardson_derivatives(
        [&](double z) { return log_generating_density_direct(z, s, in, config, occupation); }, order);
}

/// Narrow-band direct-detection Fano factor for an incident state of Fano
/// factor `fano_in` in left mode `incident_mode`:
///   F = 1 + d T (F_in - 1) + 2 d f [t^dagger (1 - rr^dagger - tt^dagger) t]_mm / T,  T = [t^dagger t]_mm.
inline FanoBreakdown fano_direct(const ScatteringMatrix& s, int incident_mode, double fano_in,
                                 const DetectionConfig& config, double occupation) {
    config.validate();
    detail::require_transmission(config, "fano_direct");
    detail::require_mode(incident_mode, s.n_modes(), "incident_mode");
    const auto col = s.t().col(incident_mode);
    const double tt = col.squaredNorm();
    if (!(tt > 0.0)) throw ZeroTransmission("fano_direct: [t^dagger t]_{m0 m0} = 0");
    const double beat = (col.adjoint() * detail::transmitted_noise_block(s) * col)(0, 0).real();
    const double d = config.efficiency;
    FanoBreakdown out;
    out.incident_term = d * tt * (fano_in - 1.0);
    out.beating_term = 2.0 * d * occupation * beat / tt;
    out.value = 1.0 + out.incident_term + out.beating_term;
    return out;
}

inline FanoBreakdown fano_direct(const ScatteringMatrix& s, const SqueezedInput& in, const DetectionConfig& config,
                                 double occupation) {
    return fano_direct(s, in.incident_mode, fano_in_squeezed(in), config, occupation);
}

namespace detail {

struct HomodyneTerms {
    cplx t_nm;
    double noise_nn;
};

inline HomodyneTerms homodyne_terms(const ScatteringMatrix& s, const SqueezedInput& in, const DetectionConfig& config) {
    in.validate();
    config.validate();
    require_transmission(config, "homodyne detection");
    if (!config.homodyne) throw InvalidArgument("homodyne detection: DetectionConfig has no homodyne setup");
    require_mode(in.incident_mode, s.n_modes(), "incident_mode");
    require_mode(config.homodyne->probe_mode, s.n_modes(), "probe_mode");
    const int n0 = config.homodyne->probe_mode;
    const double noise = 1.0 - s.r().row(n0).squaredNorm() - s.t().row(n0).squaredNorm();
    return {s.t()(n0, in.incident_mode), noise};
}

}  // namespace detail

/// Strong-probe homodyne Fano factor at probe phase arg beta:
///   F - 1 = 2 d k |t|^2 sinh^2 rho + 2 d k f (1 - rr^dagger - tt^dagger)_{n0 n0}
///           - d k Re[e^{i(phi - 2 arg beta)} t^2] sinh 2 rho,   t = t_{n0 m0}.
inline FanoBreakdown fano_homodyne(const ScatteringMatrix& s, const SqueezedInput& in, const DetectionConfig& config,
                                   double occupation) {
    const auto terms = detail::homodyne_terms(s, in, config);
    const double dk = config.efficiency * config.homodyne->coupling;
    const double sh = std::sinh(in.rho);
    FanoBreakdown out;
    out.incident_term = 2.0 * dk * std::norm(terms.t_nm) * sh * sh;
    out.beating_term = 2.0 * dk * occupation * terms.noise_nn;
    out.probe_term = -dk *
                     (std::polar(1.0, in.phi - 2.0 * config.homodyne->probe_phase) * terms.t_nm * terms.t_nm).real() *
                     std::sinh(2.0 * in.rho);
    out.value = 1.0 + out.incident_term + out.beating_term + out.probe_term;
    return out;
}

/// Homodyne Fano factor with the probe phase tuned to its minimum,
/// arg beta = phi/2 + arg t_{n0 m0}:
///   F = 1 - 2 d k |t|^2 e^{-rho} sinh rho + 2 d k f (1 - rr^dagger - tt^dagger)_{n0 n0}.
/// The incident term carries the whole phase-dependent part (probe_term = 0).
inline HomodyneMinimum fano_homodyne_min(const ScatteringMatrix& s, const SqueezedInput& in,
                                         const DetectionConfig& config, double occupation) {
    const auto terms = detail::homodyne_terms(s, in, config);
    const double dk = config.efficiency * config.homodyne->coupling;
    HomodyneMinimum out;
    out.fano.incident_term = -2.0 * dk * std::norm(terms.t_nm) * std::exp(-in.rho) * std::sinh(in.rho);
    out.fano.beating_term = 2.0 * dk * occupation * terms.noise_nn;
    out.fano.value = 1.0 + out.fano.incident_term + out.fano.beating_term;
    out.optimal_probe_phase = 0.5 * in.phi + std::arg(terms.t_nm);
    return out;
}

struct ProbePhaseScan {
    std::vector<double> phases;
    std::vector<double> fano;
    double best_grid_phase = 0.0;
    double refined_phase = 0.0;
    double refined_minimum = 0.0;
};

/// Brute-force search over the probe phase: `n_grid` equally spaced phases in
/// [0, 2 pi), then golden-section refinement inside the best grid cell. Does
/// not use the analytic optimum.
inline ProbePhaseScan scan_probe_phase(const ScatteringMatrix& s, const SqueezedInput& in,
                                       const DetectionConfig& config, double occupation, int n_grid = 64) {
    if (n_grid < 3) throw InvalidArgument("scan_probe_phase: n_grid must be >= 3");
    if (!config.homodyne) throw InvalidArgument("scan_probe_phase: DetectionConfig has no homodyne setup");
    DetectionConfig probe = config;
    auto eval = [&](double phase) {
        probe.homodyne->probe_phase = phase;
        return fano_homodyne(s, in, probe, occupation).value;
    };
    ProbePhaseScan out;
    const double step = 2.0 * std::numbers::pi / n_grid;
    std::size_t best = 0;
    for (int k = 0; k < n_grid; ++k) {
        out.phases.push_back(k * step);
        out.fano.push_back(eval(k * step));
        if (out.fano.back() < out.fano[best]) best = static_cast<std::size_t>(k);
    }
    out.best_grid_phase = out.phases[best];
    double a = out.best_grid_phase - step, b = out.best_grid_phase + step;
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - golden * (b - a), x2 = a + golden * (b - a);
    double f1 = eval(x1), f2 = eval(x2);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - golden * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + golden * (b - a);
            f2 = eval(x2);
        }
    }
    out.refined_phase = 0.5 * (a + b);
    out.refined_minimum = std::min({eval(out.refined_phase), f1, f2, out.fano[best]});
    return out;
}

}  // namespace sqt
