#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sqt/app/config.hpp"
#include "sqt/app/table.hpp"
#include "sqt/ensemble.hpp"
#include "sqt/medium.hpp"
#include "sqt/photostatistics.hpp"
#include "sqt/rmt_analytics.hpp"

namespace sqt::app {

/// Ohm's-law length of the slice model at scatter_strength 0.3 (calibrate, N = 50).
inline constexpr double kDefaultOhmLength = 21.85;

/// What a command produces: a table, the resolved configuration and results
/// that belong in the header rather than in rows.
struct CommandOutput {
    std::string command;
    Table table;
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<std::pair<std::string, std::string>> results;
    std::vector<std::string> warnings;

    std::vector<std::pair<std::string, std::string>> all_header() const {
        std::vector<std::pair<std::string, std::string>> h{{"command", command},
                                                           {"schema_version", std::to_string(kSchemaVersion)}};
        h.insert(h.end(), header.begin(), header.end());
        h.insert(h.end(), results.begin(), results.end());
        return h;
    }
};

/// Keys that steer execution but never change results; kept out of the header.
inline const std::set<std::string>& run_keys() {
    static const std::set<std::string> keys{"threads", "output", "json"};
    return keys;
}

namespace detail {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Default value per key, as text. The resolved header is built from it.
using Defaults = std::map<std::string, std::string>;

inline Defaults merge(std::initializer_list<Defaults> parts) {
    Defaults out;
    for (const auto& p : parts) out.insert(p.begin(), p.end());
    return out;
}

inline const Defaults& medium_defaults() {
    static const Defaults d{{"medium", "absorbing"},     {"n_modes", "10"},   {"scatter_strength", "0.3"},
                            {"ohm_length", "21.85"},     {"l_over_xi", "0.1"}, {"occupation", "auto"}};
    return d;
}

inline const Defaults& input_defaults() {
    static const Defaults d{{"alpha", "1"}, {"alpha_phase", "0"}, {"rho", "0"}, {"phi", "0"}, {"incident_mode", "0"}};
    return d;
}

inline const Defaults& homodyne_defaults() {
    static const Defaults d{{"coupling", "0.5"}, {"probe_mode", "0"}, {"probe_phase", "0"}};
    return d;
}

inline const Defaults& ensemble_defaults() {
    static const Defaults d{{"samples", "0"},
                            {"seed", "1"},
                            {"averaging", "ratio_of_means"},
                            {"mode_average", "false"},
                            {"s", "1"}};
    return d;
}

/// Checks unknown keys, then records every known key with its effective value.
inline std::vector<std::pair<std::string, std::string>> resolve(const Config& cfg, const Defaults& defaults,
                                                                const std::string& command) {
    std::set<std::string> allowed = run_keys();
    for (const auto& [k, v] : defaults) allowed.insert(k);
    cfg.require_known(allowed, command);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : defaults) out.emplace_back(k, cfg.get_string(k, v));
    return out;
}

/// Replaces a header value by what the command actually used.
inline void resolved(std::vector<std::pair<std::string, std::string>>& header, const std::string& key,
                     const std::string& value) {
    for (auto& [k, v] : header)
        if (k == key) v = value;
}

inline int sign_of(const Config& cfg, const std::string& key, const std::string& fallback) {
    const std::string m = cfg.get_string(key, fallback);
    if (m == "absorbing") return +1;
    if (m == "amplifying") return -1;
    if (m == "passive") return 0;
    cfg.require(false, key, "expected absorbing, amplifying or passive, got '" + m + "'");
    return 0;
}

inline double occupation_of(const Config& cfg, const std::string& key, int sign) {
    const std::string raw = cfg.get_string(key, "auto");
    double f = sign > 0 ? 1e-3 : (sign < 0 ? -1.0 : 0.0);
    if (raw != "auto") f = cfg.get_double(key, f);
    if (sign > 0) cfg.require(f >= 0.0, key, "must be >= 0 for an absorbing medium");
    if (sign < 0) cfg.require(f < 0.0, key, "must be < 0 for an amplifying medium");
    if (sign == 0) cfg.require(f == 0.0, key, "must be 0 for a passive medium");
    return f;
}

inline std::vector<double> list_of(const Config& cfg, const std::string& key, const std::string& fallback) {
    if (cfg.has(key)) return cfg.get_list(key, {});
    Config tmp;
    tmp.set(key, fallback, "default");
    return tmp.get_list(key, {});
}

/// Non-negative, strictly ascending list.
inline std::vector<double> s_grid(const Config& cfg, const std::string& key, const std::string& fallback) {
    const std::vector<double> out = list_of(cfg, key, fallback);
    for (std::size_t j = 0; j < out.size(); ++j) {
        cfg.require(out[j] >= 0.0, key, "values must be >= 0");
        if (j) cfg.require(out[j] > out[j - 1], key, "values must be strictly ascending");
    }
    return out;
}

inline unsigned threads_of(const Config& cfg) {
    const long t = cfg.get_int("threads", 0);
    cfg.require(t >= 0, "threads", "must be >= 0");
    const unsigned hw = default_thread_count();
    return t == 0 ? hw : std::min<unsigned>(static_cast<unsigned>(t), hw);
}

/// Physical parameters shared by the ensemble commands.
struct Setup {
    int n_modes = 10;
    int sign = 1;
    double occupation = 1e-3;
    double l_over_xi = 0.1;
    DiffusiveScales scales;
    MediumSpec base;
    SqueezedInput input;
    DetectionConfig detection;
    int samples = 0;
    std::uint64_t seed = 1;
    EnsembleOptions options;

    MediumKind kind() const { return kind_from_sign(sign); }
};

inline Setup read_setup(const Config& cfg, bool homodyne) {
    Setup st;
    const long n = cfg.get_int("n_modes", 10);
    cfg.require(n >= 1 && n <= 2000, "n_modes", "must lie in [1, 2000]");
    st.n_modes = static_cast<int>(n);
    st.sign = sign_of(cfg, "medium", "absorbing");
    st.occupation = occupation_of(cfg, "occupation", st.sign);
    const double eps = cfg.get_double("scatter_strength", 0.3);
    cfg.require(eps > 0.0 && eps < 2.0, "scatter_strength", "must lie in (0, 2)");
    const double ohm = cfg.get_double("ohm_length", kDefaultOhmLength);
    cfg.require(ohm > 0.0, "ohm_length", "must be > 0");
    st.l_over_xi = cfg.get_double("l_over_xi", 0.1);
    cfg.require(st.l_over_xi > 0.0, "l_over_xi", "must be > 0");
    try {
        st.scales = diffusive_scales(ohm, st.l_over_xi, st.sign);
    } catch (const InvalidArgument& e) {
        cfg.require(false, "l_over_xi", e.what());
    }
    st.base.n_modes = st.n_modes;
    st.base.scatter_strength = eps;
    st.base.loss_gain_sign = st.sign;
    st.base.ballistic_decay_length = st.sign != 0 ? st.scales.ballistic_decay_length : 0.0;
    st.base.occupation = st.occupation;

    st.input.alpha = std::polar(cfg.get_double("alpha", 1.0), cfg.get_double("alpha_phase", 0.0));
    if (!homodyne) {
        st.input.rho = cfg.get_double("rho", 0.0);
        cfg.require(st.input.rho >= 0.0, "rho", "must be >= 0");
    }
    st.input.phi = cfg.get_double("phi", 0.0);
    const long m0 = cfg.get_int("incident_mode", 0);
    cfg.require(m0 >= 0 && m0 < n, "incident_mode", "must lie in [0, n_modes)");
    st.input.incident_mode = static_cast<int>(m0);

    st.detection.efficiency = cfg.get_double("efficiency", 1.0);
    cfg.require(st.detection.efficiency >= 0.0 && st.detection.efficiency <= 1.0, "efficiency", "must lie in [0, 1]");
    if (homodyne) {
        HomodyneSetup h;
        h.coupling = cfg.get_double("coupling", 0.5);
        cfg.require(h.coupling > 0.0 && h.coupling < 1.0, "coupling", "must lie in (0, 1)");
        const long n0 = cfg.get_int("probe_mode", 0);
        cfg.require(n0 >= 0 && n0 < n, "probe_mode", "must lie in [0, n_modes)");
        h.probe_mode = static_cast<int>(n0);
        h.probe_phase = cfg.get_double("probe_phase", 0.0);
        st.detection.homodyne = h;
    }

    const long samples = cfg.get_int("samples", 0);
    cfg.require(samples == 0 || samples >= 2, "samples", "must be 0 (analytic only) or >= 2");
    st.samples = static_cast<int>(samples);
    st.seed = cfg.get_uint64("seed", 1);
    const std::string avg = cfg.get_string("averaging", "ratio_of_means");
    if (avg == "ratio_of_means") st.options.averaging = AveragingMode::ratio_of_means;
    else if (avg == "mean_of_ratios") st.options.averaging = AveragingMode::mean_of_ratios;
    else cfg.require(false, "averaging", "expected ratio_of_means or mean_of_ratios");
    st.options.mode_average = cfg.get_bool("mode_average", false);
    st.options.threads = threads_of(cfg);
    return st;
}

inline WaveguideRatios ratios(const Setup& st, double s) {
    WaveguideRatios w;
    w.s = s;
    w.l_over_xi = st.l_over_xi;
    w.n_modes = st.n_modes;
    w.efficiency = st.detection.efficiency;
    if (st.detection.homodyne) w.coupling = st.detection.homodyne->coupling;
    w.occupation = st.occupation;
    w.rho = st.input.rho;
    return w;
}

inline void collect_warnings(const Setup& st, const std::vector<double>& s_values, std::vector<std::string>& out) {
    for (double s : s_values) {
        if (s <= 0.0) continue;
        if (const auto w = validity_warning(ratios(st, s))) out.push_back("s = " + format_number(s) + ": " + *w);
    }
}

/// Large-N direct-detection average; the L = 0 value is exact.
inline double analytic_direct(const Setup& st, double s, double fano_in) {
    if (s == 0.0) {
        const auto id = ScatteringMatrix::identity(st.n_modes, st.kind());
        return fano_direct(id, st.input.incident_mode, fano_in, st.detection, st.occupation).value;
    }
    WaveguideRatios w = ratios(st, s);
    w.fano_in = fano_in;
    if (st.sign > 0) return fano_direct_absorbing_avg(w);
    if (st.sign < 0) return fano_direct_amplifying_avg(w);
    return detail::kNaN;
}

inline double analytic_homodyne(const Setup& st, double s, double rho, bool fixed) {
    SqueezedInput in = st.input;
    in.rho = rho;
    if (s == 0.0) {
        const auto id = ScatteringMatrix::identity(st.n_modes, st.kind());
        return fixed ? fano_homodyne(id, in, st.detection, st.occupation).value
                     : fano_homodyne_min(id, in, st.detection, st.occupation).fano.value;
    }
    WaveguideRatios w = ratios(st, s);
    w.rho = rho;
    if (st.sign == 0) return detail::kNaN;
    if (fixed) return fano_homo_fixed_phase_avg(w, st.kind());
    return st.sign > 0 ? fano_homo_min_absorbing_avg(w) : fano_homo_min_amplifying_avg(w);
}

inline std::vector<double> lengths_for(const Setup& st, const std::vector<double>& s_values) {
    std::vector<double> out;
    for (double s : s_values) out.push_back(st.scales.length_for(s));
    return out;
}

}  // namespace detail

/// F_direct against the medium length: analytic average and, with samples > 0,
/// Monte Carlo. One curve per F_in (from fano_in, else from the squeezed input).
inline CommandOutput cmd_fano_direct(const Config& cfg) {
    const std::string name = "fano-direct";
    const auto defaults = detail::merge({detail::medium_defaults(), detail::input_defaults(),
                                         detail::ensemble_defaults(), {{"efficiency", "1"}, {"fano_in", "input"}}});
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    const detail::Setup st = detail::read_setup(cfg, false);
    detail::resolved(out.header, "occupation", format_number(st.occupation));
    const auto s_values = detail::s_grid(cfg, "s", "1");
    const std::vector<double> fano_ins = cfg.get_string("fano_in", "input") == "input"
                                             ? std::vector<double>{fano_in_squeezed(st.input)}
                                             : detail::list_of(cfg, "fano_in", "1");
    for (double f : fano_ins) cfg.require(f >= 0.0, "fano_in", "must be >= 0");
    detail::collect_warnings(st, s_values, out.warnings);

    std::vector<std::vector<SampleObservables>> table;
    if (st.samples > 0)
        table = collect_observables(st.base, detail::lengths_for(st, s_values), st.input, st.detection, st.samples,
                                    st.seed, st.options.mode_average, st.options.threads);

    out.table.columns = {"s", "N", "F_in", "F_mc", "stderr", "F_analytic", "skipped"};
    for (double fin : fano_ins) {
        EnsembleOptions opt = st.options;
        opt.fano_in = fin;
        for (std::size_t j = 0; j < s_values.size(); ++j) {
            double mc = detail::kNaN, err = detail::kNaN, skipped = 0.0;
            if (st.samples > 0) {
                const auto r = reduce_observables(table[j], st.input, st.detection, st.occupation, opt);
                mc = r.mean_fano;
                err = r.stderr;
                skipped = r.n_skipped_above_threshold;
            }
            out.table.add({s_values[j], static_cast<double>(st.n_modes), fin, mc, err,
                           detail::analytic_direct(st, s_values[j], fin), skipped});
        }
    }
    return out;
}

/// Homodyne Fano factor: mode = min (probe phase tuned per sample), fixed, or
/// scan (brute-force probe-phase search on individual samples).
inline CommandOutput cmd_fano_homodyne(const Config& cfg) {
    const std::string name = "fano-homodyne";
    const auto defaults =
        detail::merge({detail::medium_defaults(), detail::input_defaults(), detail::homodyne_defaults(),
                       detail::ensemble_defaults(), {{"efficiency", "1"}, {"mode", "min"}, {"scan_points", "64"}}});
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    detail::Setup st = detail::read_setup(cfg, true);
    detail::resolved(out.header, "occupation", format_number(st.occupation));
    const auto s_values = detail::s_grid(cfg, "s", "1");
    const auto rhos = detail::list_of(cfg, "rho", "0");
    for (double r : rhos) cfg.require(r >= 0.0, "rho", "must be >= 0");
    const std::string mode = cfg.get_string("mode", "min");
    cfg.require(mode == "min" || mode == "fixed" || mode == "scan", "mode", "expected min, fixed or scan");
    detail::collect_warnings(st, s_values, out.warnings);

    if (mode == "scan") {
        const long points = cfg.get_int("scan_points", 64);
        cfg.require(points >= 3, "scan_points", "must be >= 3");
        const int samples = std::max(st.samples, 1);
        out.table.columns = {"s",     "N",           "rho",       "sample",    "F_grid_min",
                             "F_scan_min", "F_min", "phase_scan", "phase_min"};
        // one grown medium per sample, read at every s
        std::vector<std::vector<std::optional<ScatteringMatrix>>> media(
            static_cast<std::size_t>(samples), std::vector<std::optional<ScatteringMatrix>>(s_values.size()));
        const auto lengths = detail::lengths_for(st, s_values);
        parallel_for(static_cast<std::size_t>(samples), st.options.threads, [&](std::size_t k) {
            MediumSpec spec = st.base;
            spec.total_length = lengths.back();
            spec.seed = sample_seed(st.seed, k);
            MediumBuilder builder(spec);
            for (std::size_t j = 0; j < lengths.size(); ++j) {
                try {
                    builder.advance_to(MediumSpec::periods_for(lengths[j]));
                    media[k][j] = builder.checked();
                } catch (const DomainError& e) {
                    if (!sqt::detail::is_above_threshold_signal(e)) throw;
                    break;
                }
            }
        });
        for (double rho : rhos) {
            SqueezedInput in = st.input;
            in.rho = rho;
            for (std::size_t j = 0; j < s_values.size(); ++j)
                for (int k = 0; k < samples; ++k) {
                    const auto& s = media[static_cast<std::size_t>(k)][j];
                    double grid = detail::kNaN, scan = detail::kNaN, fmin = detail::kNaN, ps = detail::kNaN,
                           pm = detail::kNaN;
                    if (s) {
                        const auto sc = scan_probe_phase(*s, in, st.detection, st.occupation, static_cast<int>(points));
                        const auto m = fano_homodyne_min(*s, in, st.detection, st.occupation);
                        grid = *std::min_element(sc.fano.begin(), sc.fano.end());
                        scan = sc.refined_minimum;
                        fmin = m.fano.value;
                        ps = sc.refined_phase;
                        pm = m.optimal_probe_phase;
                    }
                    out.table.add({s_values[j], static_cast<double>(st.n_modes), rho, static_cast<double>(k), grid,
                                   scan, fmin, ps, pm});
                }
        }
        return out;
    }

    const bool fixed = mode == "fixed";
    std::vector<std::vector<SampleObservables>> table;
    if (st.samples > 0)
        table = collect_observables(st.base, detail::lengths_for(st, s_values), st.input, st.detection, st.samples,
                                    st.seed, st.options.mode_average, st.options.threads);
    EnsembleOptions opt = st.options;
    opt.quantity = fixed ? FanoQuantity::homodyne_fixed : FanoQuantity::homodyne_min;
    out.table.columns = {"s", "N", "rho", "F_mc", "stderr", "F_analytic", "skipped"};
    for (double rho : rhos) {
        SqueezedInput in = st.input;
        in.rho = rho;
        for (std::size_t j = 0; j < s_values.size(); ++j) {
            double mc = detail::kNaN, err = detail::kNaN, skipped = 0.0;
            if (st.samples > 0) {
                const auto r = reduce_observables(table[j], in, st.detection, st.occupation, opt);
                mc = r.mean_fano;
                err = r.stderr;
                skipped = r.n_skipped_above_threshold;
            }
            out.table.add({s_values[j], static_cast<double>(st.n_modes), rho, mc, err,
                           detail::analytic_homodyne(st, s_values[j], rho, fixed), skipped});
        }
    }
    return out;
}

/// Monte Carlo length sweep with common random numbers; failures are recorded per point.
inline CommandOutput cmd_sweep(const Config& cfg) {
    const std::string name = "sweep";
    auto defaults = detail::merge({detail::medium_defaults(), detail::input_defaults(), detail::homodyne_defaults(),
                                   detail::ensemble_defaults(),
                                   {{"efficiency", "1"}, {"quantity", "direct"}, {"fano_in", "input"}}});
    defaults["samples"] = "100";
    defaults["s"] = "0.25:2:0.25";
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    const std::string quantity = cfg.get_string("quantity", "direct");
    cfg.require(quantity == "direct" || quantity == "homodyne_min" || quantity == "homodyne_fixed", "quantity",
                "expected direct, homodyne_min or homodyne_fixed");
    detail::Setup st = detail::read_setup(cfg, quantity != "direct");
    detail::resolved(out.header, "occupation", format_number(st.occupation));
    if (!cfg.has("samples")) st.samples = 100;
    cfg.require(st.samples >= 2, "samples", "sweep needs >= 2 samples");
    const auto s_values = detail::s_grid(cfg, "s", "0.25:2:0.25");
    EnsembleOptions opt = st.options;
    if (quantity == "homodyne_min") opt.quantity = FanoQuantity::homodyne_min;
    if (quantity == "homodyne_fixed") opt.quantity = FanoQuantity::homodyne_fixed;
    if (quantity == "direct" && cfg.get_string("fano_in", "input") != "input") {
        opt.fano_in = cfg.get_double("fano_in", 1.0);
        cfg.require(*opt.fano_in >= 0.0, "fano_in", "must be >= 0");
    }
    detail::collect_warnings(st, s_values, out.warnings);

    const auto points =
        sweep_lengths(st.base, st.scales.absorption_length, s_values, st.input, st.detection, st.samples, st.seed, opt);
    out.table.columns = {"s",          "length",           "N",      "F_mc",      "stderr",  "alternate_mean",
                         "alternate_stderr", "mean_T", "n_samples", "skipped", "error"};
    for (const auto& p : points) {
        if (p.result) {
            const auto& r = *p.result;
            out.table.add({p.s, p.length, static_cast<double>(st.n_modes), r.mean_fano, r.stderr, r.alternate_mean,
                           r.alternate_stderr, r.mean_transmission, static_cast<double>(r.n_samples),
                           static_cast<double>(r.n_skipped_above_threshold), std::string()});
        } else {
            out.table.add({p.s, p.length, static_cast<double>(st.n_modes), detail::kNaN, detail::kNaN, detail::kNaN,
                           detail::kNaN, detail::kNaN, 0.0, static_cast<double>(st.samples), p.error});
        }
    }
    return out;
}

namespace detail {

/// Analytic s grid of a figure panel: absorbing up to s_max, amplifying up to
/// just below threshold. Both start at 0 (the L = 0 extrapolation point).
inline std::vector<double> panel_grid(int sign, double s_max, int points) {
    std::vector<double> s{0.0};
    const double top = sign > 0 ? s_max : std::numbers::pi;
    const double denom = sign > 0 ? points : points + 1.0;
    for (int k = 1; k <= points; ++k) s.push_back(top * k / denom);
    return s;
}

struct FigureCommon {
    double l_over_xi;
    double efficiency;
    double f_absorbing;
    double f_amplifying;
    double s_max;
    int points;
    std::vector<double> mc_s;
    int samples;
};

inline const Defaults& figure_defaults() {
    static const Defaults d{{"l_over_xi", "0.1"},    {"efficiency", "1"},  {"f_absorbing", "0.001"},
                            {"f_amplifying", "-1"},  {"s_max", "5"},       {"points", "100"},
                            {"samples", "0"},        {"mc_s", "0.5,1,2"},  {"seed", "1"},
                            {"scatter_strength", "0.3"}, {"ohm_length", "21.85"}, {"averaging", "ratio_of_means"}};
    return d;
}

inline FigureCommon read_figure(const Config& cfg) {
    FigureCommon fc;
    fc.l_over_xi = cfg.get_double("l_over_xi", 0.1);
    cfg.require(fc.l_over_xi > 0.0, "l_over_xi", "must be > 0");
    fc.efficiency = cfg.get_double("efficiency", 1.0);
    cfg.require(fc.efficiency >= 0.0 && fc.efficiency <= 1.0, "efficiency", "must lie in [0, 1]");
    fc.f_absorbing = cfg.get_double("f_absorbing", 1e-3);
    cfg.require(fc.f_absorbing >= 0.0, "f_absorbing", "must be >= 0");
    fc.f_amplifying = cfg.get_double("f_amplifying", -1.0);
    cfg.require(fc.f_amplifying < 0.0, "f_amplifying", "must be < 0");
    fc.s_max = cfg.get_double("s_max", 5.0);
    cfg.require(fc.s_max > 0.0, "s_max", "must be > 0");
    const long points = cfg.get_int("points", 100);
    cfg.require(points >= 2 && points <= 100000, "points", "must lie in [2, 100000]");
    fc.points = static_cast<int>(points);
    fc.mc_s = s_grid(cfg, "mc_s", "0.5,1,2");
    const long samples = cfg.get_int("samples", 0);
    cfg.require(samples == 0 || samples >= 2, "samples", "must be 0 (analytic only) or >= 2");
    fc.samples = static_cast<int>(samples);
    return fc;
}

/// Monte Carlo setup of one figure panel, reusing the ensemble command keys.
inline Setup panel_setup(const Config& cfg, const FigureCommon& fc, int sign, int n_modes, bool homodyne) {
    Config c;
    for (const auto& [k, e] : cfg.entries())
        if (k == "scatter_strength" || k == "ohm_length" || k == "seed" || k == "threads" || k == "averaging" ||
            k == "mode_average" || k == "coupling" || k == "efficiency")
            c.set(k, e.value, e.origin);
    c.set("medium", sign > 0 ? "absorbing" : "amplifying", "panel");
    c.set("n_modes", std::to_string(n_modes), "n_modes");
    c.set("l_over_xi", format_number(fc.l_over_xi), "l_over_xi");
    c.set("occupation", format_number(sign > 0 ? fc.f_absorbing : fc.f_amplifying), "panel");
    c.set("samples", std::to_string(fc.samples), "samples");
    c.set("alpha", "0", "panel");
    Setup st = read_setup(c, homodyne);
    if (homodyne && !cfg.has("mode_average")) st.options.mode_average = true;
    return st;
}

inline std::vector<double> below_threshold(int sign, const std::vector<double>& s) {
    std::vector<double> out;
    for (double x : s)
        if (sign > 0 || x < std::numbers::pi) out.push_back(x);
    return out;
}

}  // namespace detail

/// Curve families of the direct-detection figure: both panels, F_in from the
/// fano_in list. Rows with extrapolated = 1 lie at L < l.
inline CommandOutput cmd_figure3(const Config& cfg) {
    const std::string name = "figure3";
    const auto defaults = detail::merge({detail::figure_defaults(), {{"fano_in", "0:3:0.5"}, {"n_modes", "50"}}});
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    const auto fc = detail::read_figure(cfg);
    const auto fano_ins = detail::list_of(cfg, "fano_in", "0:3:0.5");
    for (double f : fano_ins) cfg.require(f >= 0.0, "fano_in", "must be >= 0");
    const long n = cfg.get_int("n_modes", 50);
    cfg.require(n >= 1, "n_modes", "must be >= 1");

    out.table.columns = {"panel", "source", "F_in", "s", "F_analytic", "F_mc", "stderr", "extrapolated"};
    for (int sign : {-1, +1}) {
        const std::string panel = sign > 0 ? "absorbing" : "amplifying";
        const double f = sign > 0 ? fc.f_absorbing : fc.f_amplifying;
        const auto grid = detail::panel_grid(sign, fc.s_max, fc.points);
        for (double fin : fano_ins)
            for (double s : grid) {
                double value = 1.0 + fc.efficiency * (fin - 1.0);
                if (s > 0.0) {
                    WaveguideRatios w;
                    w.s = s;
                    w.l_over_xi = fc.l_over_xi;
                    w.efficiency = fc.efficiency;
                    w.occupation = f;
                    w.fano_in = fin;
                    value = sign > 0 ? fano_direct_absorbing_avg(w) : fano_direct_amplifying_avg(w);
                }
                out.table.add({panel, std::string("analytic"), fin, s, value, detail::kNaN, detail::kNaN,
                               s < fc.l_over_xi ? 1.0 : 0.0});
            }
        if (fc.samples == 0) continue;
        const auto st = detail::panel_setup(cfg, fc, sign, static_cast<int>(n), false);
        const auto mc_s = detail::below_threshold(sign, fc.mc_s);
        if (mc_s.empty()) continue;
        const auto table = collect_observables(st.base, detail::lengths_for(st, mc_s), st.input, st.detection,
                                               st.samples, st.seed, false, st.options.threads);
        for (double fin : fano_ins) {
            EnsembleOptions opt = st.options;
            opt.fano_in = fin;
            for (std::size_t j = 0; j < mc_s.size(); ++j) {
                const auto r = reduce_observables(table[j], st.input, st.detection, st.occupation, opt);
                out.table.add({panel, std::string("mc"), fin, mc_s[j], detail::analytic_direct(st, mc_s[j], fin),
                               r.mean_fano, r.stderr, mc_s[j] < fc.l_over_xi ? 1.0 : 0.0});
            }
        }
    }
    return out;
}

/// Curve families of the minimal-homodyne figure: N modes, coupling kappa,
/// one curve per rho.
inline CommandOutput cmd_figure4(const Config& cfg) {
    const std::string name = "figure4";
    const auto defaults = detail::merge(
        {detail::figure_defaults(),
         {{"rho", "0:1:0.25"}, {"n_modes", "10"}, {"coupling", "0.5"}, {"mode_average", "true"}, {"same_mode", "true"}}});
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    const auto fc = detail::read_figure(cfg);
    const auto rhos = detail::list_of(cfg, "rho", "0:1:0.25");
    for (double r : rhos) cfg.require(r >= 0.0, "rho", "must be >= 0");
    const long n = cfg.get_int("n_modes", 10);
    cfg.require(n >= 1, "n_modes", "must be >= 1");
    const double kappa = cfg.get_double("coupling", 0.5);
    cfg.require(kappa > 0.0 && kappa < 1.0, "coupling", "must lie in (0, 1)");
    const bool same_mode = cfg.get_bool("same_mode", true);

    out.table.columns = {"panel", "source", "rho", "s", "F_analytic", "F_mc", "stderr", "extrapolated"};
    for (int sign : {-1, +1}) {
        const std::string panel = sign > 0 ? "absorbing" : "amplifying";
        const double f = sign > 0 ? fc.f_absorbing : fc.f_amplifying;
        const auto grid = detail::panel_grid(sign, fc.s_max, fc.points);
        for (double rho : rhos)
            for (double s : grid) {
                DetectionConfig dc;
                dc.efficiency = fc.efficiency;
                HomodyneSetup h;
                h.coupling = kappa;
                dc.homodyne = h;
                double value = zero_length_limits(1.0, rho, dc, same_mode).fano_homodyne_min;
                if (s > 0.0) {
                    WaveguideRatios w;
                    w.s = s;
                    w.l_over_xi = fc.l_over_xi;
                    w.n_modes = static_cast<int>(n);
                    w.efficiency = fc.efficiency;
                    w.coupling = kappa;
                    w.occupation = f;
                    w.rho = rho;
                    value = sign > 0 ? fano_homo_min_absorbing_avg(w) : fano_homo_min_amplifying_avg(w);
                }
                out.table.add({panel, std::string("analytic"), rho, s, value, detail::kNaN, detail::kNaN,
                               s < fc.l_over_xi ? 1.0 : 0.0});
            }
        if (fc.samples == 0) continue;
        auto st = detail::panel_setup(cfg, fc, sign, static_cast<int>(n), true);
        st.detection.homodyne->coupling = kappa;
        const auto mc_s = detail::below_threshold(sign, fc.mc_s);
        if (mc_s.empty()) continue;
        const auto table = collect_observables(st.base, detail::lengths_for(st, mc_s), st.input, st.detection,
                                               st.samples, st.seed, st.options.mode_average, st.options.threads);
        EnsembleOptions opt = st.options;
        opt.quantity = FanoQuantity::homodyne_min;
        for (double rho : rhos) {
            SqueezedInput in = st.input;
            in.rho = rho;
            for (std::size_t j = 0; j < mc_s.size(); ++j) {
                const auto r = reduce_observables(table[j], in, st.detection, st.occupation, opt);
                out.table.add({panel, std::string("mc"), rho, mc_s[j], detail::analytic_homodyne(st, mc_s[j], rho, false),
                               r.mean_fano, r.stderr, mc_s[j] < fc.l_over_xi ? 1.0 : 0.0});
            }
        }
    }
    return out;
}

/// Ohm's-law fit of N / <tr t^dagger t> against length.
inline CommandOutput cmd_calibrate(const Config& cfg) {
    const std::string name = "calibrate";
    const detail::Defaults defaults{{"n_modes", "50"},          {"scatter_strength", "0.3"}, {"lengths", "20,40,80,160"},
                                    {"samples", "40"},          {"seed", "1"}};
    CommandOutput out;
    out.command = name;
    out.header = detail::resolve(cfg, defaults, name);
    const long n = cfg.get_int("n_modes", 50);
    cfg.require(n >= 1 && n <= 2000, "n_modes", "must lie in [1, 2000]");
    const double eps = cfg.get_double("scatter_strength", 0.3);
    cfg.require(eps > 0.0 && eps < 2.0, "scatter_strength", "must lie in (0, 2)");
    const auto lengths = detail::s_grid(cfg, "lengths", "20,40,80,160");
    cfg.require(lengths.size() >= 3 && lengths.front() > 0.0 && lengths.back() >= 4.0 * lengths.front(), "lengths",
                "need >= 3 positive lengths spanning a factor >= 4");
    const long samples = cfg.get_int("samples", 40);
    cfg.require(samples >= 2, "samples", "must be >= 2");
    const auto fit = calibrate_mean_free_path(static_cast<int>(n), eps, lengths, static_cast<int>(samples),
                                              cfg.get_uint64("seed", 1), detail::threads_of(cfg));
    out.table.columns = {"length", "inverse_transmission", "fit"};
    for (std::size_t j = 0; j < fit.lengths.size(); ++j)
        out.table.add({fit.lengths[j], fit.inverse_transmission[j], fit.intercept + fit.lengths[j] / fit.length});
    out.results = {{"result.ohm_length", format_number(fit.length)},
                   {"result.ohm_length_stderr", format_number(fit.stderr)},
                   {"result.intercept", format_number(fit.intercept)},
                   {"result.max_relative_residual", format_number(fit.max_relative_residual)},
                   {"result.mean_free_path", format_number(0.75 * fit.length)}};
    return out;
}

}  // namespace sqt::app
