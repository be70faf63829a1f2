#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqt/app/table.hpp"
#include "sqt/ensemble.hpp"
#include "sqt/fock_oracle.hpp"
#include "sqt/medium.hpp"
#include "sqt/photostatistics.hpp"
#include "sqt/rmt_analytics.hpp"

namespace sqt::app {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Formulas under test. The validation suite evaluates the direct-detection
/// averages through these, so a corrupted bracket can be injected.
struct FormulaSet {
    std::function<cplx(cplx)> absorbing_bracket = [](cplx s) { return sqt::detail::absorbing_direct_bracket(s); };
    std::function<cplx(cplx)> amplifying_bracket = [](cplx s) { return sqt::detail::amplifying_direct_bracket(s); };

    double fano_direct_absorbing(const WaveguideRatios& w) const {
        return 1.0 + 4.0 * w.l_over_xi * w.efficiency / (3.0 * std::sinh(w.s)) * (w.fano_in - 1.0) +
               0.5 * w.efficiency * w.occupation * absorbing_bracket(w.s).real();
    }
    double fano_direct_amplifying(const WaveguideRatios& w) const {
        return 1.0 + 4.0 * w.l_over_xi * w.efficiency / (3.0 * std::sin(w.s)) * (w.fano_in - 1.0) +
               0.5 * w.efficiency * w.occupation * amplifying_bracket(w.s).real();
    }
};

/// The last term of the absorbing bracket with its sign flipped.
inline FormulaSet mutated_formulas() {
    FormulaSet f;
    f.absorbing_bracket = [](cplx s) {
        const cplx sh = std::sinh(s);
        return sqt::detail::absorbing_direct_bracket(s) - 2.0 * s / (sh * sh * sh);
    };
    return f;
}

namespace detail {

inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline WaveguideRatios figure_ratios(double s, double fano_in, double f) {
    WaveguideRatios w;
    w.s = s;
    w.l_over_xi = 0.1;
    w.efficiency = 1.0;
    w.occupation = f;
    w.fano_in = fano_in;
    return w;
}

/// Random squeezed input, efficiency and temperature for the property checks.
struct RandomCase {
    SqueezedInput input;
    DetectionConfig config;
    double occupation;
};

inline RandomCase random_case(Rng& rng, int n_modes) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RandomCase c;
    c.input.alpha = std::polar(0.2 + 1.5 * u(rng), 2.0 * std::numbers::pi * u(rng));
    c.input.rho = 0.8 * u(rng);
    c.input.phi = 2.0 * std::numbers::pi * u(rng);
    c.input.incident_mode = static_cast<int>(u(rng) * n_modes) % n_modes;
    c.config.efficiency = 0.5 + 0.5 * u(rng);
    c.occupation = 0.5 * u(rng);
    return c;
}

/// Haar unitary times uniform singular values in [lo, 1].
inline ScatteringMatrix random_lossy_matrix(int n_modes, double lo, Rng& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(lo, 1.0);
    const Eigen::Index dim = 2 * n_modes;
    auto haar = [&] {
        Matrix a(dim, dim);
        for (Eigen::Index i = 0; i < dim; ++i)
            for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = cplx(g(rng), g(rng));
        Eigen::HouseholderQR<Matrix> qr(a);
        return Matrix(qr.householderQ() * Matrix::Identity(dim, dim));
    };
    RealVector sigma(dim);
    for (Eigen::Index i = 0; i < dim; ++i) sigma[i] = u(rng);
    return ScatteringMatrix::from_full(haar() * sigma.cast<cplx>().asDiagonal() * haar(), MediumKind::absorbing);
}

inline MediumSpec random_medium_spec(int n_modes, int sign, double length, std::uint64_t seed) {
    MediumSpec spec;
    spec.n_modes = n_modes;
    spec.total_length = length;
    spec.loss_gain_sign = sign;
    spec.ballistic_decay_length = sign != 0 ? 60.0 : 0.0;
    spec.occupation = sign > 0 ? 1e-3 : (sign < 0 ? -1.0 : 0.0);
    spec.seed = seed;
    return spec;
}

}  // namespace detail

/// Bracket fixtures (high-precision reference values), its small-s and
/// large-s limits, and the continuation onto the amplifying bracket.
inline std::vector<CheckResult> check_direct_formulas(const FormulaSet& fs) {
    std::vector<CheckResult> out;
    {
        const double b01 = fs.absorbing_bracket(0.1).real(), b1 = fs.absorbing_bracket(1.0).real();
        const double e = std::max(detail::rel_err(b01, 0.006655572462335439), detail::rel_err(b1, 0.5703385605916808));
        out.push_back({"absorbing bracket reference values", e < 1e-9, "max relative error " + detail::fmt(e)});
    }
    {
        double worst = 0.0;
        for (double s : {0.3, 1.0, 2.0, 3.0})
            worst = std::max(worst, std::abs(fs.absorbing_bracket(cplx(0.0, s)) - fs.amplifying_bracket(s)));
        out.push_back({"bracket continuation s -> i s", worst < 1e-10, "max deviation " + detail::fmt(worst)});
    }
    {
        const double e = std::abs(fs.absorbing_bracket(40.0).real() - 3.0);
        out.push_back({"bracket large-s limit 3", e < 1e-12, "deviation " + detail::fmt(e)});
    }
    {
        double worst = 0.0;
        for (double f_in : {0.0, 1.0, 3.0})
            for (double s : {0.5, 1.0, 2.0, 4.0}) {
                const auto w = detail::figure_ratios(s, f_in, 1e-3);
                worst = std::max(worst, std::abs(fs.fano_direct_absorbing(w) - fano_direct_absorbing_avg(w)));
                const auto a = detail::figure_ratios(std::min(s, 3.0), f_in, -1.0);
                worst = std::max(worst, std::abs(fs.fano_direct_amplifying(a) - fano_direct_amplifying_avg(a)));
            }
        out.push_back({"library averages use the checked formulas", worst < 1e-12, "max deviation " + detail::fmt(worst)});
    }
    return out;
}

/// Universal absorbing limit at s = 12: 1 + 3 d f / 2 within 1e-6 for F_in in {0, 1.5, 3}.
inline CheckResult check_universal_limit(const FormulaSet& fs = {}) {
    double worst = 0.0;
    std::ostringstream d;
    for (double f_in : {0.0, 1.5, 3.0}) {
        const double dev = std::abs(fs.fano_direct_absorbing(detail::figure_ratios(12.0, f_in, 1e-3)) - (1.0 + 1.5e-3));
        worst = std::max(worst, dev);
        d << "F_in=" << f_in << ": " << detail::fmt(dev) << "; ";
    }
    d << "tolerance 1e-6";
    return {"universal absorbing limit at s = 12", worst <= 1e-6, d.str()};
}

/// F_direct (amplifying, f = -1) above 1e3 at s = pi - 1e-3 and ThresholdReached at s = pi.
inline CheckResult check_threshold() {
    const double near = fano_direct_amplifying_avg(detail::figure_ratios(std::numbers::pi - 1e-3, 1.0, -1.0));
    bool raised = false;
    try {
        fano_direct_amplifying_avg(detail::figure_ratios(std::numbers::pi, 1.0, -1.0));
    } catch (const ThresholdReached&) {
        raised = true;
    }
    return {"laser threshold divergence", near > 1e3 && raised,
            "F(pi - 1e-3) = " + detail::fmt(near) + (raised ? ", ThresholdReached at pi" : ", no error at pi")};
}

/// Lossy-channel Fock oracle against the closed-form cumulants.
inline CheckResult check_fock_lossy() {
    const double t2 = 0.6, f = 0.1;
    SqueezedInput in;
    in.alpha = 1.3;
    in.rho = 0.5;
    in.phi = 0.7;
    const auto oracle = fock::lossy_channel_photostats(fock::squeezed_coherent_fock(in.alpha, in.rho, in.phi, 120),
                                                       std::sqrt(t2), f);
    Matrix z = Matrix::Zero(1, 1), t = Matrix::Constant(1, 1, cplx(std::sqrt(t2), 0.0));
    const ScatteringMatrix s(z, t, t, z, MediumKind::absorbing);
    const auto k = direct_cumulants_squeezed(s, in, DetectionConfig{}, f);
    const double e = std::max(detail::rel_err(k.kappa1, oracle.kappa1), detail::rel_err(k.kappa2, oracle.kappa2));
    return {"Fock oracle, absorbing channel", e <= 1e-8, "max relative error " + detail::fmt(e)};
}

/// Complete-inversion amplifier Fock oracle against the closed-form cumulants.
inline CheckResult check_fock_amplifying() {
    const double g = std::sqrt(1.5);
    SqueezedInput in;
    in.alpha = 1.0;
    in.rho = 0.4;
    const auto oracle =
        fock::amplifying_channel_photostats(fock::squeezed_coherent_fock(in.alpha, in.rho, in.phi, 120), g, -1.0);
    Matrix z = Matrix::Zero(1, 1), t = Matrix::Constant(1, 1, cplx(g, 0.0));
    const ScatteringMatrix s(z, t, t, z, MediumKind::amplifying);
    const auto k = direct_cumulants_squeezed(s, in, DetectionConfig{}, -1.0);
    const double e = std::max(detail::rel_err(k.kappa1, oracle.kappa1), detail::rel_err(k.kappa2, oracle.kappa2));
    return {"Fock oracle, amplifying channel", e <= 1e-7, "max relative error " + detail::fmt(e)};
}

/// Numeric factorial cumulants (orders 1-2) against the closed form on random
/// scalar and small-N lossy scattering matrices.
inline CheckResult check_generating_function(int configs, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> modes(2, 4);
    double worst = 0.0;
    int failures = 0;
    for (int c = 0; c < configs; ++c) {
        const int n = (c % 2 == 0) ? 1 : modes(rng);
        const auto s = detail::random_lossy_matrix(n, 0.2, rng);
        const auto rc = detail::random_case(rng, n);
        const auto closed = direct_cumulants_squeezed(s, rc.input, rc.config, rc.occupation);
        const auto num = numeric_factorial_cumulants(2, s, rc.input, rc.config, rc.occupation);
        const double e = std::max(detail::rel_err(num.values[0], closed.kappa1), detail::rel_err(num.values[1], closed.kappa2));
        worst = std::max(worst, e);
        if (!(e <= 1e-6)) ++failures;
    }
    return {"generating function vs closed-form cumulants", failures == 0,
            std::to_string(configs) + " configurations, " + std::to_string(failures) + " above 1e-6, worst " +
                detail::fmt(worst)};
}

/// Probe-phase scan (64-point grid plus refinement) against the analytic
/// minimum and its phase phi/2 + arg t, on random media.
inline CheckResult check_homodyne_scan(int media, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_value = 0.0, worst_phase = 0.0, worst_grid = 0.0;
    const double step = 2.0 * std::numbers::pi / 64.0;
    for (int k = 0; k < media; ++k) {
        const int n = 2 + k % 4;
        const auto s = build_medium(detail::random_medium_spec(n, +1, 10.0 + 30.0 * u(rng), sample_seed(seed, k)));
        auto rc = detail::random_case(rng, n);
        rc.input.rho = 0.1 + 0.9 * u(rng);
        HomodyneSetup h;
        h.coupling = 0.1 + 0.8 * u(rng);
        h.probe_mode = static_cast<int>(u(rng) * n) % n;
        rc.config.homodyne = h;
        const auto scan = scan_probe_phase(s, rc.input, rc.config, rc.occupation, 64);
        const auto best = fano_homodyne_min(s, rc.input, rc.config, rc.occupation);
        worst_value = std::max(worst_value, std::abs(scan.refined_minimum - best.fano.value));
        worst_grid = std::max(worst_grid, *std::min_element(scan.fano.begin(), scan.fano.end()) - best.fano.value);
        // F depends on the probe phase through 2 arg beta, so phases agree modulo pi
        worst_phase = std::max(worst_phase,
                               std::abs(std::remainder(scan.best_grid_phase - best.optimal_probe_phase, std::numbers::pi)));
    }
    const bool ok = worst_value <= 1e-10 && worst_phase <= step / 2.0 + 1e-12;
    return {"homodyne probe-phase scan minimum", ok,
            std::to_string(media) + " media: refined minimum off by " + detail::fmt(worst_value) +
                ", best grid phase off by " + detail::fmt(worst_phase) + " (half step " + detail::fmt(step / 2.0) +
                "), unrefined grid minimum above by up to " + detail::fmt(worst_grid)};
}

/// Absorbing composites are contractions, passive composites unitary.
inline CheckResult check_physicality(int absorbing, int passive, std::uint64_t seed) {
    double worst_sv = 0.0, worst_unitary = 0.0;
    for (int k = 0; k < absorbing; ++k) {
        const int n = 1 + k % 6;
        const auto s = build_medium(detail::random_medium_spec(n, +1, 5.0 + (k % 7) * 8.0, sample_seed(seed, k)));
        worst_sv = std::max(worst_sv, singular_values(s)[0] - 1.0);
    }
    for (int k = 0; k < passive; ++k) {
        const int n = 1 + k % 6;
        const auto s = build_medium(detail::random_medium_spec(n, 0, 5.0 + (k % 7) * 8.0, sample_seed(seed + 1, k)));
        worst_unitary = std::max(worst_unitary, deviation_from_unitarity(s).cwiseAbs().maxCoeff());
    }
    return {"physicality of composites", worst_sv <= 1e-10 && worst_unitary <= 1e-9,
            std::to_string(absorbing) + " absorbing: max singular value - 1 = " + detail::fmt(worst_sv) + "; " +
                std::to_string(passive) + " passive: max |S S^dagger - 1| = " + detail::fmt(worst_unitary)};
}

/// F_in(rho = 0) = 1, squeezed vacuum 1 + cosh 2 rho, amplitude-squeezed large alpha -> e^-2rho.
inline CheckResult check_squeezed_limits() {
    SqueezedInput coh;
    coh.alpha = {1.7, -0.4};
    const bool exact = fano_in_squeezed(coh) == 1.0;
    double vac_err = 0.0;
    for (double rho : {0.1, 0.5, 1.0, 2.0}) {
        SqueezedInput v;
        v.rho = rho;
        vac_err = std::max(vac_err, std::abs(fano_in_squeezed(v) - (1.0 + std::cosh(2.0 * rho))));
    }
    SqueezedInput amp;
    amp.alpha = 10.0;
    amp.rho = 0.5;
    amp.phi = 0.0;  // e^{i phi} aligned with alpha^2: amplitude squeezing
    const double large = std::abs(fano_in_squeezed(amp) - std::exp(-1.0));
    return {"squeezed-input limits", exact && vac_err <= 1e-12 && large <= 0.02,
            std::string(exact ? "rho = 0 exact" : "rho = 0 NOT exact") + ", vacuum error " + detail::fmt(vac_err) +
                ", |alpha| = 10 deviation " + detail::fmt(large)};
}

/// Zero-length ensembles reproduce the L = 0 limits exactly.
inline CheckResult check_zero_length_ensemble() {
    MediumSpec spec = detail::random_medium_spec(4, +1, 0.0, 0);
    SqueezedInput in;
    in.alpha = 0.8;
    in.rho = 0.6;
    DetectionConfig c;
    c.efficiency = 0.7;
    const auto r = run_ensemble(spec, in, c, 4, 5);
    const bool ok = r.mean_fano == zero_length_limits(in, c).fano_direct && r.stderr == 0.0;
    return {"zero-length ensemble limit", ok, "F = " + format_number(r.mean_fano)};
}

/// Monte Carlo against the large-N average at N = 50, plus the N = 25 -> 50 trend.
struct McComparison {
    std::vector<CheckResult> points;
    CheckResult trend;
};

inline McComparison check_mc_vs_analytic(int samples, unsigned threads, std::uint64_t seed = 2024,
                                         double ohm_length = 21.85) {
    McComparison out;
    const auto sc = diffusive_scales(ohm_length, 0.1, +1);
    auto base = [&](int n) {
        MediumSpec spec;
        spec.n_modes = n;
        spec.loss_gain_sign = +1;
        spec.ballistic_decay_length = sc.ballistic_decay_length;
        spec.occupation = 1e-3;
        return spec;
    };
    SqueezedInput in;
    in.alpha = 1.0;
    const DetectionConfig cfg;
    const std::vector<double> s_values{0.5, 1.0, 2.0};
    std::vector<double> lengths;
    for (double s : s_values) lengths.push_back(sc.length_for(s));
    const auto table = collect_observables(base(50), lengths, in, cfg, samples, seed, false, threads);
    double dev50 = 0.0;
    for (double f_in : {0.0, 1.0}) {
        EnsembleOptions opt;
        opt.fano_in = f_in;
        for (std::size_t j = 0; j < s_values.size(); ++j) {
            const auto r = reduce_observables(table[j], in, cfg, 1e-3, opt);
            const double analytic = fano_direct_absorbing_avg(detail::figure_ratios(s_values[j], f_in, 1e-3));
            const double tol = std::max(3.0 * r.stderr, 0.05 * std::abs(analytic - 1.0) + 0.01);
            const double dev = std::abs(r.mean_fano - analytic);
            if (f_in == 0.0 && s_values[j] == 1.0) dev50 = dev;
            // diagnostic only: the incident term scaled by L / (L + l_ohm), the
            // slice model's contact resistance, which the large-N average omits
            const double beating = fano_direct_absorbing_avg(detail::figure_ratios(s_values[j], 1.0, 1e-3));
            const double contact = lengths[j] / (lengths[j] + ohm_length);
            const double corrected = beating + (analytic - beating) * contact;
            std::ostringstream d;
            d << "MC " << format_number(r.mean_fano).substr(0, 10) << " +- " << detail::fmt(r.stderr) << ", analytic "
              << format_number(analytic).substr(0, 10) << ", |diff| " << detail::fmt(dev) << " vs tol " << detail::fmt(tol)
              << ", mean_of_ratios " << format_number(r.alternate_mean).substr(0, 10) << ", contact-corrected "
              << format_number(corrected).substr(0, 10);
            out.points.push_back({"MC vs analytic N=50 s=" + format_number(s_values[j]) + " F_in=" + format_number(f_in),
                                  dev <= tol, d.str()});
        }
    }
    const auto t25 = collect_observables(base(25), {sc.length_for(1.0)}, in, cfg, samples, seed, false, threads);
    EnsembleOptions opt;
    opt.fano_in = 0.0;
    const auto r25 = reduce_observables(t25[0], in, cfg, 1e-3, opt);
    const double dev25 = std::abs(r25.mean_fano - fano_direct_absorbing_avg(detail::figure_ratios(1.0, 0.0, 1e-3)));
    out.trend = {"N = 25 -> 50 discrepancy non-increasing at s = 1", dev50 <= dev25,
                 "|diff| N=25 " + detail::fmt(dev25) + ", N=50 " + detail::fmt(dev50)};
    return out;
}

struct ValidationReport {
    std::vector<CheckResult> checks;
    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
    }
};

/// fast: property suites and the oracles at one fixture each (seconds).
/// full: adds the Monte Carlo comparison at N = 50 (minutes).
inline ValidationReport run_validation(const std::string& level, const FormulaSet& formulas = {}, unsigned threads = 1) {
    if (level != "fast" && level != "full") throw InvalidArgument("validate: level must be fast or full");
    ValidationReport rep;
    for (auto& c : check_direct_formulas(formulas)) rep.checks.push_back(std::move(c));
    rep.checks.push_back(check_threshold());
    rep.checks.push_back(check_fock_lossy());
    rep.checks.push_back(check_fock_amplifying());
    rep.checks.push_back(check_generating_function(level == "full" ? 100 : 20, 31));
    rep.checks.push_back(check_homodyne_scan(level == "full" ? 100 : 20, 41));
    rep.checks.push_back(check_physicality(level == "full" ? 1000 : 100, level == "full" ? 200 : 40, 51));
    rep.checks.push_back(check_squeezed_limits());
    rep.checks.push_back(check_zero_length_ensemble());
    if (level == "full") {
        auto mc = check_mc_vs_analytic(500, threads);
        for (auto& c : mc.points) rep.checks.push_back(std::move(c));
        rep.checks.push_back(std::move(mc.trend));
    }
    return rep;
}

}  // namespace sqt::app
