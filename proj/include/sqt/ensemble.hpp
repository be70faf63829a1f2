#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqt/errors.hpp"
#include "sqt/medium.hpp"
#include "sqt/parallel.hpp"
#include "sqt/photostatistics.hpp"
#include "sqt/random.hpp"

namespace sqt {

enum class AveragingMode { ratio_of_means, mean_of_ratios };
enum class FanoQuantity { direct, homodyne_min, homodyne_fixed };

inline std::string_view to_string(AveragingMode m) {
    return m == AveragingMode::ratio_of_means ? "ratio_of_means" : "mean_of_ratios";
}

inline std::string_view to_string(FanoQuantity q) {
    switch (q) {
        case FanoQuantity::direct: return "direct";
        case FanoQuantity::homodyne_min: return "homodyne_min";
        case FanoQuantity::homodyne_fixed: return "homodyne_fixed";
    }
    return "unknown";
}

/// Matrix elements of one disorder realization that the Fano factors need.
struct SampleObservables {
    bool above_threshold = false;
    double transmission = 0.0;  // [t^dagger t]_{m0 m0}, or tr(t^dagger t)/N with mode averaging
    double beating = 0.0;       // [t^dagger (1 - rr^dagger - tt^dagger) t]_{m0 m0}, or its trace / N
    double t_squared = 0.0;     // |t_{n0 m0}|^2, or tr(t^dagger t)/N^2
    double noise = 0.0;         // (1 - rr^dagger - tt^dagger)_{n0 n0}, or its trace / N
    cplx t_element{0.0, 0.0};   // t_{n0 m0}, for the fixed-phase homodyne term
};

struct EnsembleOptions {
    FanoQuantity quantity = FanoQuantity::direct;
    AveragingMode averaging = AveragingMode::ratio_of_means;
    bool mode_average = false;  // replace matrix elements by mode averages
    bool keep_per_sample = false;
    unsigned threads = 1;
    std::optional<double> fano_in;  // overrides fano_in_squeezed(input) for direct detection
};

struct EnsembleResult {
    double mean_fano = 0.0;
    double stderr = 0.0;
    int n_samples = 0;
    int n_skipped_above_threshold = 0;
    AveragingMode averaging_mode = AveragingMode::ratio_of_means;
    // the other averaging convention, for diagnostics
    double alternate_mean = 0.0;
    double alternate_stderr = 0.0;
    double mean_transmission = 0.0;
    std::vector<double> per_sample;  // per-sample Fano factors when requested
};

/// Observables of one realization; incident/probe indices come from input/config.
inline SampleObservables sample_observables(const ScatteringMatrix& s, const SqueezedInput& input,
                                            const DetectionConfig& config, bool mode_average) {
    const Eigen::Index n = s.n_modes();
    detail::require_mode(input.incident_mode, n, "incident_mode");
    const int n0 = config.homodyne ? config.homodyne->probe_mode : input.incident_mode;
    detail::require_mode(n0, n, "probe_mode");
    const Matrix q = detail::transmitted_noise_block(s);
    SampleObservables o;
    o.t_element = s.t()(n0, input.incident_mode);
    if (mode_average) {
        const double nn = static_cast<double>(n);
        const double tt = s.t().squaredNorm();
        o.transmission = tt / nn;
        o.beating = (s.t().adjoint() * q * s.t()).trace().real() / nn;
        o.t_squared = tt / (nn * nn);
        o.noise = q.trace().real() / nn;
    } else {
        const auto col = s.t().col(input.incident_mode);
        o.transmission = col.squaredNorm();
        o.beating = (col.adjoint() * q * col)(0, 0).real();
        o.t_squared = std::norm(o.t_element);
        o.noise = q(n0, n0).real();
    }
    return o;
}

namespace detail {

struct FanoModel {
    FanoQuantity quantity;
    double d;
    double f;
    double fano_in;
    double dk;         // d kappa
    double rho;
    double phi;
    double probe_phase;
};

inline FanoModel make_model(const SqueezedInput& input, const DetectionConfig& config, double occupation,
                            const EnsembleOptions& options) {
    FanoModel m{};
    m.quantity = options.quantity;
    m.d = config.efficiency;
    m.f = occupation;
    m.rho = input.rho;
    m.phi = input.phi;
    if (options.quantity == FanoQuantity::direct) {
        m.fano_in = options.fano_in ? *options.fano_in : fano_in_squeezed(input);
    } else {
        if (!config.homodyne) throw InvalidArgument("run_ensemble: homodyne quantity requires a homodyne setup");
        m.dk = config.efficiency * config.homodyne->coupling;
        m.probe_phase = config.homodyne->probe_phase;
    }
    return m;
}

/// Per-sample Fano factor (the large-N expressions evaluated on one realization).
inline double sample_fano(const FanoModel& m, const SampleObservables& o) {
    switch (m.quantity) {
        case FanoQuantity::direct:
            if (!(o.transmission > 0.0)) throw ZeroTransmission("run_ensemble: sample with zero transmission");
            return 1.0 + m.d * o.transmission * (m.fano_in - 1.0) + 2.0 * m.d * m.f * o.beating / o.transmission;
        case FanoQuantity::homodyne_min:
            return 1.0 - 2.0 * m.dk * o.t_squared * std::exp(-m.rho) * std::sinh(m.rho) + 2.0 * m.dk * m.f * o.noise;
        case FanoQuantity::homodyne_fixed: {
            const double sh = std::sinh(m.rho);
            // the phase-sensitive part has zero ensemble mean but is kept sample by sample
            const cplx t2 = o.t_element * o.t_element;
            const double phase = (std::polar(1.0, m.phi - 2.0 * m.probe_phase) * t2).real();
            return 1.0 + 2.0 * m.dk * o.t_squared * sh * sh + 2.0 * m.dk * m.f * o.noise -
                   m.dk * phase * std::sinh(2.0 * m.rho);
        }
    }
    return 1.0;
}

/// Ratio-of-means Fano factor from summed observables: numerator and
/// denominator of the beating ratio are averaged separately.
inline double pooled_fano(const FanoModel& m, double sum_t, double sum_b, double sum_direct, double count) {
    if (m.quantity == FanoQuantity::direct) {
        const double t = sum_t / count;
        if (!(t > 0.0)) throw ZeroTransmission("run_ensemble: mean transmission is zero");
        return 1.0 + m.d * t * (m.fano_in - 1.0) + 2.0 * m.d * m.f * (sum_b / count) / t;
    }
    return sum_direct / count;  // homodyne factors are linear in the matrix elements
}

struct JackknifeStats {
    double mean;
    double stderr;
};

inline JackknifeStats jackknife_mean(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double sum = 0.0;
    for (double v : x) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    // leave-one-out means deviate by (x_i - mean)/(n - 1), which gives the usual s/sqrt(n)
    return {mean, n > 1 ? std::sqrt(ss / (n * (n - 1.0))) : 0.0};
}

}  // namespace detail

/// Reduce stored observables to an ensemble Fano factor.
inline EnsembleResult reduce_observables(const std::vector<SampleObservables>& samples, const SqueezedInput& input,
                                         const DetectionConfig& config, double occupation,
                                         const EnsembleOptions& options) {
    const detail::FanoModel model = detail::make_model(input, config, occupation, options);
    EnsembleResult out;
    out.averaging_mode = options.averaging;
    std::vector<const SampleObservables*> kept;
    for (const auto& o : samples) {
        if (o.above_threshold) ++out.n_skipped_above_threshold;
        else kept.push_back(&o);
    }
    out.n_samples = static_cast<int>(kept.size());
    if (kept.empty())
        throw AllSamplesAboveThreshold("run_ensemble: all " + std::to_string(samples.size()) +
                                       " samples are above threshold");

    std::vector<double> per(kept.size());
    double sum_t = 0.0, sum_b = 0.0, sum_f = 0.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        per[k] = detail::sample_fano(model, *kept[k]);
        sum_t += kept[k]->transmission;
        sum_b += kept[k]->beating;
        sum_f += per[k];
    }
    const double count = static_cast<double>(kept.size());
    out.mean_transmission = sum_t / count;

    // ratio of means, jackknife over leave-one-out pooled estimates
    const double pooled = detail::pooled_fano(model, sum_t, sum_b, sum_f, count);
    double pooled_err = 0.0;
    if (kept.size() > 1) {
        std::vector<double> loo(kept.size());
        double loo_mean = 0.0;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            loo[k] = detail::pooled_fano(model, sum_t - kept[k]->transmission, sum_b - kept[k]->beating,
                                         sum_f - per[k], count - 1.0);
            loo_mean += loo[k];
        }
        loo_mean /= count;
        double ss = 0.0;
        for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
        pooled_err = std::sqrt(ss * (count - 1.0) / count);
    }
    const detail::JackknifeStats mor = detail::jackknife_mean(per);

    if (options.averaging == AveragingMode::ratio_of_means) {
        out.mean_fano = pooled;
        out.stderr = pooled_err;
        out.alternate_mean = mor.mean;
        out.alternate_stderr = mor.stderr;
    } else {
        out.mean_fano = mor.mean;
        out.stderr = mor.stderr;
        out.alternate_mean = pooled;
        out.alternate_stderr = pooled_err;
    }
    if (options.keep_per_sample) out.per_sample = std::move(per);
    return out;
}

namespace detail {

inline bool is_above_threshold_signal(const DomainError& e) {
    return dynamic_cast<const NearSingularCavity*>(&e) != nullptr ||
           dynamic_cast<const GainPositivityViolation*>(&e) != nullptr;
}

}  // namespace detail

/// Observables for every sample at every requested length (slice units,
/// ascending). Each sample grows one medium and reads it at each length, so
/// neighbouring lengths share their slice prefix. A sample that trips the
/// cavity or gain check is marked above threshold from that length on.
inline std::vector<std::vector<SampleObservables>> collect_observables(const MediumSpec& base,
                                                                      const std::vector<double>& lengths,
                                                                      const SqueezedInput& input,
                                                                      const DetectionConfig& config, int n_samples,
                                                                      std::uint64_t master_seed, bool mode_average,
                                                                      unsigned threads) {
    if (n_samples < 2) throw InvalidArgument("run_ensemble: n_samples must be >= 2");
    for (std::size_t j = 1; j < lengths.size(); ++j)
        if (lengths[j] < lengths[j - 1]) throw InvalidArgument("sweep_lengths: lengths must be ascending");
    base.validate();
    input.validate();
    config.validate();
    detail::require_transmission(config, "run_ensemble");
    std::vector<std::vector<SampleObservables>> table(lengths.size(),
                                                      std::vector<SampleObservables>(static_cast<std::size_t>(n_samples)));
    parallel_for(static_cast<std::size_t>(n_samples), threads, [&](std::size_t k) {
        MediumSpec spec = base;
        spec.total_length = lengths.empty() ? 0.0 : lengths.back();
        spec.seed = sample_seed(master_seed, k);
        MediumBuilder builder(spec);
        bool dead = false;
        for (std::size_t j = 0; j < lengths.size(); ++j) {
            SampleObservables& slot = table[j][k];
            if (!dead) {
                try {
                    builder.advance_to(MediumSpec::periods_for(lengths[j]));
                    slot = sample_observables(builder.checked(), input, config, mode_average);
                } catch (const DomainError& e) {
                    if (!detail::is_above_threshold_signal(e)) throw;
                    dead = true;
                }
            }
            slot.above_threshold = dead;
        }
    });
    return table;
}

/// Monte Carlo ensemble average of the requested Fano factor. Sample k uses
/// seed sample_seed(master_seed, k); reduction is in sample order.
inline EnsembleResult run_ensemble(const MediumSpec& medium, const SqueezedInput& input, const DetectionConfig& config,
                                   int n_samples, std::uint64_t master_seed, const EnsembleOptions& options = {}) {
    const auto table = collect_observables(medium, {medium.total_length}, input, config, n_samples, master_seed,
                                           options.mode_average, options.threads);
    return reduce_observables(table.front(), input, config, medium.occupation, options);
}

struct SweepPoint {
    double s = 0.0;
    double length = 0.0;  // slice units
    std::optional<EnsembleResult> result;
    std::string error;  // set when the point failed (e.g. every sample above threshold)
};

/// One ensemble per s, with L = s * absorption_length, common random numbers across s.
inline std::vector<SweepPoint> sweep_lengths(const MediumSpec& base, double absorption_length,
                                             const std::vector<double>& s_values, const SqueezedInput& input,
                                             const DetectionConfig& config, int n_samples, std::uint64_t master_seed,
                                             const EnsembleOptions& options = {}) {
    std::vector<double> lengths;
    for (double s : s_values) lengths.push_back(s * absorption_length);
    const auto table = collect_observables(base, lengths, input, config, n_samples, master_seed, options.mode_average,
                                           options.threads);
    std::vector<SweepPoint> out;
    for (std::size_t j = 0; j < s_values.size(); ++j) {
        SweepPoint p;
        p.s = s_values[j];
        p.length = lengths[j];
        try {
            p.result = reduce_observables(table[j], input, config, base.occupation, options);
        } catch (const DomainError& e) {
            p.error = e.what();
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace sqt
