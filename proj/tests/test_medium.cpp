#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "sqt/medium.hpp"

using namespace sqt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

ScatteringMatrix scalar(cplx rp, cplx tp, cplx t, cplx r, MediumKind kind) {
    Matrix a(1, 1), b(1, 1), c(1, 1), d(1, 1);
    a(0, 0) = rp;
    b(0, 0) = tp;
    c(0, 0) = t;
    d(0, 0) = r;
    return {a, b, c, d, kind};
}

MediumSpec absorbing_spec(int n, double length, std::uint64_t seed) {
    MediumSpec spec;
    spec.n_modes = n;
    spec.total_length = length;
    spec.scatter_strength = 0.3;
    spec.loss_gain_sign = +1;
    spec.ballistic_decay_length = 200.0;
    spec.occupation = 1e-3;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("slice is unitary to round-off", "[medium][slice]") {
    Rng rng(42);
    for (int rep = 0; rep < 5; ++rep) {
        const ScatteringMatrix s = sample_slice(8, 0.1, rng);
        const Matrix full = s.full();
        CHECK(max_abs(full.adjoint() * full - Matrix::Identity(16, 16)) < 1e-12);
        CHECK(s.kind() == MediumKind::passive);
    }
}

TEST_CASE("weak slice is close to free propagation", "[medium][slice]") {
    Rng rng(7);
    const double eps = 1e-6;
    const ScatteringMatrix s = sample_slice(1, eps, rng);
    const Matrix diff = s.full() - ScatteringMatrix::identity(1).full();
    CHECK(max_abs(diff) < 20 * eps);
    CHECK(max_abs(diff) > 0.0);
}

TEST_CASE("slice rejects bad arguments", "[medium][slice]") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_slice(0, 0.1, rng), InvalidArgument);
    CHECK_THROWS_AS(sample_slice(4, 0.0, rng), InvalidArgument);
    CHECK_THROWS_AS(sample_slice(4, -0.1, rng), InvalidArgument);
}

TEST_CASE("slice entries have the requested variance", "[medium][slice]") {
    // K entries have variance 1/(2N); for small eps the off-diagonal blocks of
    // S are i eps K, so <tr r' r'^dagger>/N = eps^2 N^2 / (2N) / N = eps^2 / 2.
    Rng rng(11);
    const int n = 6;
    const double eps = 0.02;
    double acc = 0.0;
    const int reps = 2000;
    for (int k = 0; k < reps; ++k) acc += sample_slice(n, eps, rng).r_prime().squaredNorm() / n;
    CHECK_THAT(acc / reps, WithinRel(eps * eps / 2.0, 0.05));
}

TEST_CASE("propagation unit has the requested magnitude", "[medium][propagation]") {
    Rng rng(3);
    const auto passive = propagation_unit(5, 0, 0.0, rng);
    const auto absorbing = propagation_unit(5, +1, 10.0, rng);
    const auto amplifying = propagation_unit(5, -1, 10.0, rng);
    for (int n = 0; n < 5; ++n) {
        CHECK_THAT(std::abs(passive.t()(n, n)), WithinAbs(1.0, 1e-15));
        CHECK_THAT(std::abs(absorbing.t()(n, n)), WithinAbs(std::exp(-0.05), 1e-15));
        CHECK_THAT(std::abs(amplifying.t()(n, n)), WithinAbs(std::exp(0.05), 1e-15));
        CHECK(absorbing.t()(n, n) == absorbing.t_prime()(n, n));
    }
    CHECK(max_abs(absorbing.r()) == 0.0);
    CHECK(max_abs(absorbing.r_prime()) == 0.0);
    CHECK(absorbing.kind() == MediumKind::absorbing);
    CHECK(amplifying.kind() == MediumKind::amplifying);
    CHECK_THROWS_AS(propagation_unit(5, +1, 0.0, rng), InvalidArgument);
}

TEST_CASE("star product identity element", "[medium][star]") {
    Rng rng(5);
    const auto b = sample_slice(4, 0.3, rng);
    const auto id = ScatteringMatrix::identity(4);
    CHECK(max_abs(star_compose(id, b).full() - b.full()) < 1e-14);
    CHECK(max_abs(star_compose(b, id).full() - b.full()) < 1e-14);
}

TEST_CASE("star product of scalar slabs multiplies transmissions", "[medium][star]") {
    const double t = std::sqrt(0.5);
    const auto a = scalar(0.0, t, t, 0.0, MediumKind::absorbing);
    const auto ab = star_compose(a, a);
    CHECK_THAT(std::norm(ab.t()(0, 0)), WithinAbs(0.25, 1e-15));
}

TEST_CASE("star product matches the Fabry-Perot closed form", "[medium][star]") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const auto a = sample_slice(1, 1.3, rng);
        const auto b = sample_slice(1, 1.1, rng);
        const auto ab = star_compose(a, b);
        const cplx fp = b.t()(0, 0) * a.t()(0, 0) / (1.0 - a.r()(0, 0) * b.r_prime()(0, 0));
        CHECK_THAT(std::norm(ab.t()(0, 0)), WithinAbs(std::norm(fp), 1e-12));
        // the remaining blocks against the textbook formulas
        const cplx den = 1.0 - a.r()(0, 0) * b.r_prime()(0, 0);
        const cplx rp = a.r_prime()(0, 0) + a.t_prime()(0, 0) * b.r_prime()(0, 0) * a.t()(0, 0) / den;
        const cplx r = b.r()(0, 0) + b.t()(0, 0) * a.r()(0, 0) * b.t_prime()(0, 0) / den;
        const cplx tp = a.t_prime()(0, 0) * b.t_prime()(0, 0) / den;
        CHECK(std::abs(ab.r_prime()(0, 0) - rp) < 1e-13);
        CHECK(std::abs(ab.r()(0, 0) - r) < 1e-13);
        CHECK(std::abs(ab.t_prime()(0, 0) - tp) < 1e-13);
    }
}

TEST_CASE("star product blocks against explicit inverses", "[medium][star]") {
    Rng rng(19);
    const auto a = sample_slice(3, 0.8, rng);
    const auto b = sample_slice(3, 0.9, rng);
    const auto ab = star_compose(a, b);
    const Matrix one = Matrix::Identity(3, 3);
    const Matrix inv1 = (one - a.r() * b.r_prime()).inverse();
    const Matrix inv2 = (one - b.r_prime() * a.r()).inverse();
    CHECK(max_abs(ab.t() - b.t() * inv1 * a.t()) < 1e-13);
    CHECK(max_abs(ab.r_prime() - (a.r_prime() + a.t_prime() * b.r_prime() * inv1 * a.t())) < 1e-13);
    CHECK(max_abs(ab.r() - (b.r() + b.t() * a.r() * inv2 * b.t_prime())) < 1e-13);
    CHECK(max_abs(ab.t_prime() - a.t_prime() * inv2 * b.t_prime()) < 1e-13);
}

TEST_CASE("star product detects a lasing cavity", "[medium][star]") {
    const auto mirror_left = scalar(0.0, 0.0, 0.0, 1.0, MediumKind::amplifying);
    const auto mirror_right = scalar(1.0, 0.0, 0.0, 0.0, MediumKind::amplifying);
    CHECK_THROWS_AS(star_compose(mirror_left, mirror_right), NearSingularCavity);
    CHECK_THROWS_AS(star_compose(ScatteringMatrix::identity(2), ScatteringMatrix::identity(3)), InvalidArgument);
}

TEST_CASE("passive composition stays unitary over 1000 periods", "[medium][invariants]") {
    MediumSpec spec;
    spec.n_modes = 4;
    spec.total_length = 1000;
    spec.scatter_strength = 0.3;
    spec.seed = 123;
    const auto s = build_medium(spec);
    const RealVector sv = singular_values(s);
    CHECK(std::abs(sv.maxCoeff() - 1.0) < 1e-9);
    CHECK(std::abs(sv.minCoeff() - 1.0) < 1e-9);
}

TEST_CASE("absorbing composites are contractive", "[medium][invariants]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = build_medium(absorbing_spec(5, 60, seed));
        CHECK(singular_values(s).maxCoeff() <= 1.0 + 1e-10);
        CHECK(s.kind() == MediumKind::absorbing);
    }
}

TEST_CASE("amplifying composites below threshold have 1 - SS^dagger <= 0", "[medium][invariants]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        MediumSpec spec = absorbing_spec(3, 40, seed);
        spec.loss_gain_sign = -1;
        spec.occupation = -1.0;
        spec.ballistic_decay_length = 400.0;
        const auto s = build_medium(spec);
        Eigen::SelfAdjointEigenSolver<Matrix> es(deviation_from_unitarity(s));
        CHECK(es.eigenvalues().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("zero length gives free propagation", "[medium]") {
    const auto s = build_medium(absorbing_spec(6, 0.0, 9));
    CHECK(max_abs(s.full() - ScatteringMatrix::identity(6).full()) == 0.0);
}

TEST_CASE("build is deterministic in the seed", "[medium]") {
    const auto a = build_medium(absorbing_spec(7, 25, 77));
    const auto b = build_medium(absorbing_spec(7, 25, 77));
    const auto c = build_medium(absorbing_spec(7, 25, 78));
    CHECK((a.full().array() == b.full().array()).all());
    CHECK(max_abs(a.full() - c.full()) > 1e-3);
}

TEST_CASE("medium spec validation", "[medium]") {
    MediumSpec spec = absorbing_spec(3, 10, 1);
    spec.occupation = -0.1;
    CHECK_THROWS_AS(build_medium(spec), InvalidArgument);
    spec = absorbing_spec(3, 10, 1);
    spec.ballistic_decay_length = 0.0;
    CHECK_THROWS_AS(build_medium(spec), InvalidArgument);
    spec = absorbing_spec(3, 10, 1);
    spec.loss_gain_sign = -1;
    spec.occupation = 0.5;
    CHECK_THROWS_AS(build_medium(spec), InvalidArgument);
    spec = absorbing_spec(0, 10, 1);
    CHECK_THROWS_AS(build_medium(spec), InvalidArgument);
}

TEST_CASE("deviation from unitarity", "[medium]") {
    Rng rng(2);
    CHECK(max_abs(deviation_from_unitarity(sample_slice(4, 0.2, rng))) < 1e-12);
    const double t = std::sqrt(0.6);
    const Matrix d = deviation_from_unitarity(scalar(0.0, t, t, 0.0, MediumKind::absorbing));
    CHECK_THAT(d(0, 0).real(), WithinAbs(0.4, 1e-15));
    CHECK_THAT(d(1, 1).real(), WithinAbs(0.4, 1e-15));
    CHECK(std::abs(d(0, 1)) < 1e-15);
}

TEST_CASE("mean free path calibration", "[medium][calibration]") {
    const auto fit = calibrate_mean_free_path(25, 0.1, {50, 100, 200, 400}, 40, 2024);
    CHECK(fit.length > 0.0);
    CHECK(fit.stderr / fit.length < 0.05);
    CHECK(fit.max_relative_residual < 0.10);
    CHECK_THAT(fit.intercept, WithinAbs(1.0, 0.1));

    // stronger scattering, shorter mean free path
    const auto fit2 = calibrate_mean_free_path(25, 0.2, {25, 50, 100, 200}, 40, 2024);
    const auto fit3 = calibrate_mean_free_path(25, 0.4, {10, 20, 40, 80}, 40, 2024);
    CHECK(fit2.length < fit.length);
    CHECK(fit3.length < fit2.length);

    // essentially no scattering
    const auto weak = calibrate_mean_free_path(4, 1e-5, {10, 20, 40}, 4, 1);
    CHECK(weak.length > 1e6);

    CHECK_THROWS_AS(calibrate_mean_free_path(4, 0.1, {10, 20}, 4, 1), InvalidArgument);
    CHECK_THROWS_AS(calibrate_mean_free_path(4, 0.1, {10, 20, 30}, 4, 1), InvalidArgument);
}

TEST_CASE("diffusive scales reproduce the requested absorption length", "[medium][calibration]") {
    const double l_ohm = 20.0;
    const auto abs = diffusive_scales(l_ohm, 0.1, +1);
    CHECK_THAT(abs.mean_free_path, WithinAbs(15.0, 1e-12));
    CHECK_THAT(abs.absorption_length, WithinAbs(150.0, 1e-12));
    const double a = 1.0 / abs.ballistic_decay_length;
    CHECK_THAT(a * (2.0 / l_ohm + a), WithinRel(1.0 / (150.0 * 150.0), 1e-12));

    const auto amp = diffusive_scales(l_ohm, 0.1, -1);
    const double g = 1.0 / amp.ballistic_decay_length;
    CHECK_THAT(g * (2.0 / l_ohm - g), WithinRel(1.0 / (150.0 * 150.0), 1e-12));
    CHECK_THAT(amp.length_for(2.0), WithinAbs(300.0, 1e-12));
}
