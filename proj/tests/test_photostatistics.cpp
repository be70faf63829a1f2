#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "sqt/photostatistics.hpp"

using namespace sqt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using fixtures::random_absorbing_medium;
using fixtures::random_contraction;
using fixtures::scalar_channel;

namespace {

DetectionConfig transmission(double d = 1.0) {
    DetectionConfig c;
    c.efficiency = d;
    return c;
}

DetectionConfig homodyne(double d, double kappa, int probe, double phase = 0.0) {
    DetectionConfig c = transmission(d);
    c.homodyne = HomodyneSetup{kappa, probe, phase};
    return c;
}

SqueezedInput squeezed(cplx alpha, double rho, double phi, int mode = 0) {
    SqueezedInput in;
    in.alpha = alpha;
    in.rho = rho;
    in.phi = phi;
    in.incident_mode = mode;
    return in;
}

}  // namespace

TEST_CASE("Bose-Einstein occupation", "[photostatistics]") {
    CHECK(bose_einstein(std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(bose_einstein(800.0) == 0.0);
    CHECK_THAT(bose_einstein(std::log(2.0)), WithinRel(1.0, 1e-14));
    CHECK_THAT(bose_einstein(std::log(1001.0)), WithinRel(1e-3, 1e-12));
    CHECK_THAT(bose_einstein(9.97), WithinRel(1.0 / (std::exp(9.97) - 1.0), 1e-12));
    CHECK(bose_einstein(-0.5) < -1.0);
    CHECK_THAT(bose_einstein(-50.0), WithinAbs(-1.0, 1e-15));
    CHECK_THROWS_AS(bose_einstein(0.0), DomainError);
}

TEST_CASE("incident Fano factor limits", "[photostatistics][squeezed]") {
    for (double a : {0.3, 1.0, 4.0})
        for (double phi : {0.0, 1.0, 2.5}) CHECK(fano_in_squeezed(squeezed({a, 0.2 * a}, 0.0, phi)) == 1.0);
    for (double rho : {0.1, 0.5, 1.3}) {
        CHECK_THAT(fano_in_squeezed(squeezed(0.0, rho, 0.4)), WithinAbs(1.0 + std::cosh(2 * rho), 1e-12));
    }
    CHECK_THAT(fano_in_squeezed(squeezed(10.0, 0.5, 0.0)), WithinAbs(std::exp(-1.0), 0.02));
    // approach to e^{-2 rho} improves with |alpha|
    const double e10 = std::abs(fano_in_squeezed(squeezed(10.0, 0.5, 0.0)) - std::exp(-1.0));
    const double e100 = std::abs(fano_in_squeezed(squeezed(100.0, 0.5, 0.0)) - std::exp(-1.0));
    CHECK(e100 < e10 / 50.0);
    CHECK_THROWS_AS(fano_in_squeezed(squeezed(0.0, 0.0, 0.0)), ZeroMeanCount);
    CHECK_THROWS_AS(fano_in_squeezed(squeezed(1.0, -0.1, 0.0)), InvalidArgument);
}

TEST_CASE("incident Fano factor depends on 2 arg alpha - phi only", "[photostatistics][squeezed]") {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < 50; ++k) {
        const double mag = 0.1 + 3.0 * std::abs(std::sin(u(rng)));
        const double arg = u(rng), phi = u(rng), delta = u(rng), rho = 0.05 + 0.2 * u(rng);
        const double f0 = fano_in_squeezed(squeezed(std::polar(mag, arg), rho, phi));
        const double f1 = fano_in_squeezed(squeezed(std::polar(mag, arg + delta), rho, phi + 2 * delta));
        CHECK_THAT(f1, WithinRel(f0, 1e-12));
    }
}

TEST_CASE("thermal cumulants", "[photostatistics][thermal]") {
    Rng rng(4);
    const auto unitary = ScatteringMatrix::from_full(fixtures::random_unitary(6, rng), MediumKind::passive);
    const auto th0 = thermal_cumulant_densities(unitary, transmission(), 0.3);
    CHECK(std::abs(th0[0]) < 1e-13);
    CHECK(std::abs(th0[1]) < 1e-13);

    const auto lossy = scalar_channel(std::sqrt(0.6), 0.0, MediumKind::absorbing);
    const auto th = thermal_cumulant_densities(lossy, transmission(), 0.1);
    CHECK_THAT(th[0], WithinRel(0.04, 1e-13));
    CHECK_THAT(th[1], WithinRel(0.0016, 1e-13));

    // spectral oracle: eigenvalues of the transmitted block of 1 - SS^dagger
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = random_absorbing_medium(5, seed);
        const double d = 0.7, f = 0.25;
        const Matrix full = s.full();
        const Matrix q = (Matrix::Identity(10, 10) - full * full.adjoint()).bottomRightCorner(5, 5);
        Eigen::SelfAdjointEigenSolver<Matrix> es(q);
        const RealVector lam = es.eigenvalues();
        const auto got = thermal_cumulant_densities(s, transmission(d), f);
        CHECK_THAT(got[0], WithinAbs(d * f * lam.sum(), 1e-12));
        CHECK_THAT(got[1], WithinAbs(d * d * f * f * lam.squaredNorm(), 1e-12));
    }
}

TEST_CASE("squeezed cumulants reduce to the coherent-state result at rho = 0", "[photostatistics][cumulants]") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto s = random_absorbing_medium(4, seed);
        const cplx alpha(1.1, -0.7);
        const int m0 = static_cast<int>(seed % 4);
        const double d = 0.8, f = 0.05;
        const auto got = direct_cumulants_squeezed(s, squeezed(alpha, 0.0, 1.2, m0), transmission(d), f);
        const auto th = thermal_cumulant_densities(s, transmission(d), f);
        const Vector tm = s.t().col(m0);
        const Matrix q = Matrix::Identity(4, 4) - s.r() * s.r().adjoint() - s.t() * s.t().adjoint();
        const double intensity = std::norm(alpha);
        const double k1 = th[0] + d * intensity * tm.squaredNorm();
        const double k2 = th[1] + 2.0 * d * d * f * intensity * tm.dot(q * tm).real();
        CHECK_THAT(got.kappa1, WithinAbs(k1, 1e-12));
        CHECK_THAT(got.kappa2, WithinAbs(k2, 1e-12));
        CHECK(got.thermal_kappa1 == th[0]);
        CHECK(got.thermal_kappa2 == th[1]);
    }
}

TEST_CASE("squeezed bracket equals mean count times (F_in - 1)", "[photostatistics][cumulants]") {
    Rng rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const auto in = squeezed(std::polar(3.0 * u(rng), 6.3 * u(rng)), 1.5 * u(rng) + 1e-3, 6.3 * u(rng));
        const double ch = std::cosh(in.rho), sh = std::sinh(in.rho);
        const double bracket = std::norm(in.alpha * ch - std::conj(in.alpha) * std::polar(1.0, in.phi) * sh) -
                               std::norm(in.alpha) + sh * sh * (ch * ch + sh * sh);
        const double n = in.mean_count();
        CHECK_THAT(n * (fano_in_squeezed(in) - 1.0), WithinAbs(bracket, 1e-12 * std::max(1.0, std::abs(bracket))));
    }
}

TEST_CASE("photon statistics survive an ideal lossless channel", "[photostatistics][cumulants]") {
    const auto in = squeezed({0.9, 0.4}, 0.6, 0.3);
    const auto got = direct_cumulants_squeezed(ScatteringMatrix::identity(3), in, transmission(1.0), 0.2);
    CHECK(got.thermal_kappa2 == 0.0);
    CHECK_THAT(got.kappa2 - got.thermal_kappa2, WithinRel(in.mean_count() * (fano_in_squeezed(in) - 1.0), 1e-13));
    CHECK_THAT(got.kappa1, WithinRel(in.mean_count(), 1e-13));
    CHECK_THROWS_AS(direct_cumulants_squeezed(ScatteringMatrix::identity(3), squeezed(1.0, 0.1, 0.0, 3),
                                              transmission(), 0.1),
                    InvalidArgument);
    DetectionConfig refl = transmission();
    refl.mode_set = ModeSet::reflection;
    CHECK_THROWS_AS(direct_cumulants_squeezed(ScatteringMatrix::identity(3), in, refl, 0.1), InvalidArgument);
}

TEST_CASE("m element", "[photostatistics][generating]") {
    const auto lossy = scalar_channel(std::sqrt(0.6), 0.0, MediumKind::absorbing);
    CHECK(m_element(lossy, 0, transmission(), 0.1, 0.0) == 0.0);
    CHECK_THAT(m_element(lossy, 0, transmission(), 0.1, 0.3), WithinRel(-0.3 * 0.6 / (1.0 - 0.3 * 0.4 * 0.1), 1e-14));

    Rng rng(6);
    const auto unitary = ScatteringMatrix::from_full(fixtures::random_unitary(8, rng), MediumKind::passive);
    DetectionConfig all = transmission();
    all.mode_set = ModeSet::all;
    CHECK_THAT(m_element(unitary, 2, all, 0.4, -0.35), WithinAbs(0.35, 1e-13));

    // realness across random contractions (the function itself asserts the residue)
    for (int k = 0; k < 20; ++k) {
        const auto s = random_contraction(3, 0.3, 1.0, rng);
        CHECK_NOTHROW(m_element(s, k % 3, transmission(0.9), 0.7, 0.2 - 0.02 * k));
    }
    CHECK_THROWS_AS(m_element(lossy, 1, transmission(), 0.1, 0.3), InvalidArgument);
}

TEST_CASE("singular resolvent is reported", "[photostatistics][generating]") {
    // 1 - z d (1 - |t|^2) f = 0 at z = 1 / (0.4 * 0.5)
    const auto lossy = scalar_channel(std::sqrt(0.6), 0.0, MediumKind::absorbing);
    CHECK_THROWS_AS(m_element(lossy, 0, transmission(), 0.5, 5.0), SingularResolvent);
}

TEST_CASE("generating function", "[photostatistics][generating]") {
    const auto s = random_absorbing_medium(4, 3);
    const auto in = squeezed({0.8, 0.3}, 0.4, 0.9, 1);
    CHECK(log_generating_density_direct(0.0, s, in, transmission(0.9), 0.2) == 0.0);

    SECTION("coherent input matches the direct coherent-state form") {
        const auto coh = squeezed({1.2, -0.5}, 0.0, 0.0, 2);
        const double d = 0.75, f = 0.3;
        const Matrix q = Matrix::Identity(4, 4) - s.r() * s.r().adjoint() - s.t() * s.t().adjoint();
        for (double z : {-0.4, -0.1, 0.15, 0.5}) {
            const Matrix a = Matrix::Identity(4, 4) - z * d * f * q;
            const double thermal = -std::log(a.determinant().real());
            const Vector tm = s.t().col(2);
            const double coherent = z * d * std::norm(coh.alpha) * tm.dot(a.lu().solve(tm)).real();
            CHECK_THAT(log_generating_density_direct(z, s, coh, transmission(d), f),
                       WithinAbs(thermal + coherent, 1e-12));
        }
    }

    SECTION("numeric derivatives reproduce the closed-form cumulants") {
        const auto nc = numeric_factorial_cumulants(2, s, in, transmission(0.9), 0.2);
        const auto cf = direct_cumulants_squeezed(s, in, transmission(0.9), 0.2);
        REQUIRE(nc.values.size() == 2);
        CHECK_THAT(nc.values[0], WithinRel(cf.kappa1, 1e-6));
        CHECK_THAT(nc.values[1], WithinRel(cf.kappa2, 1e-6));
        CHECK_FALSE(nc.precision_loss);
    }

    SECTION("squeezed vacuum mean count") {
        const auto vac = squeezed(0.0, 0.7, 0.2, 0);
        const auto nc = numeric_factorial_cumulants(1, s, vac, transmission(0.9), 0.0);
        const double expected = std::sinh(0.7) * std::sinh(0.7) * 0.9 * s.t().col(0).squaredNorm();
        CHECK_THAT(nc.values[0], WithinRel(expected, 1e-6));
    }

    SECTION("coherent light through a lossless medium is Poissonian") {
        Rng rng(12);
        const auto u = ScatteringMatrix::from_full(fixtures::random_unitary(6, rng), MediumKind::passive);
        const auto coh = squeezed({1.5, 0.5}, 0.0, 0.0, 1);
        const auto nc = numeric_factorial_cumulants(4, u, coh, transmission(1.0), 0.4);
        const double k1 = std::norm(coh.alpha) * u.t().col(1).squaredNorm();
        CHECK_THAT(nc.values[0], WithinRel(k1, 1e-8));
        for (int k = 1; k < 4; ++k) CHECK(std::abs(nc.values[k]) < 1e-5 * k1);
    }

    CHECK_THROWS_AS(numeric_factorial_cumulants(5, s, in, transmission(), 0.1), InvalidArgument);
}

TEST_CASE("generating function domain", "[photostatistics][generating]") {
    // strong squeezing: 1 + 2 m sinh^2 - m^2 sinh^2 turns negative for m < 1 - sqrt(1 + 1/sinh^2)
    const auto id = ScatteringMatrix::identity(1);
    const auto in = squeezed(0.0, 2.0, 0.0);
    CHECK_THROWS_AS(log_generating_density_direct(0.5, id, in, transmission(), 0.0), DomainError);
    CHECK_NOTHROW(log_generating_density_direct(0.01, id, in, transmission(), 0.0));
}

TEST_CASE("precision loss is flagged for a badly conditioned function", "[photostatistics][generating]") {
    const auto noisy = [](double z) { return z + 1e-9 * std::cos(1e7 * z); };
    CHECK(richardson_derivatives(noisy, 2).precision_loss);
    const auto smooth = [](double z) { return std::log1p(0.3 * z); };
    const auto r = richardson_derivatives(smooth, 4);
    CHECK_FALSE(r.precision_loss);
    CHECK_THAT(r.values[0], WithinRel(0.3, 1e-9));
    CHECK_THAT(r.values[1], WithinRel(-0.09, 1e-8));
    CHECK_THAT(r.values[2], WithinRel(2 * 0.027, 1e-6));
    CHECK_THAT(r.values[3], WithinRel(-6 * 0.0081, 1e-5));
}

TEST_CASE("direct-detection Fano factor", "[photostatistics][fano]") {
    Rng rng(31);
    SECTION("lossless medium") {
        const auto u = ScatteringMatrix::from_full(fixtures::random_unitary(6, rng), MediumKind::passive);
        for (double fin : {0.0, 0.5, 2.0}) {
            const auto fb = fano_direct(u, 1, fin, transmission(), 0.1);
            const double tt = u.t().col(1).squaredNorm();
            CHECK_THAT(fb.value, WithinAbs(1.0 + tt * (fin - 1.0), 1e-13));
            CHECK(std::abs(fb.beating_term) < 1e-13);
        }
    }
    SECTION("zero length") {
        for (double d : {0.3, 1.0})
            CHECK_THAT(fano_direct(ScatteringMatrix::identity(4), 2, 0.2, transmission(d), 0.1).value,
                       WithinAbs(1.0 + d * (0.2 - 1.0), 1e-15));
    }
    SECTION("beating term against a spectral oracle") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto s = random_absorbing_medium(5, seed);
            const int m0 = static_cast<int>(seed % 5);
            const double d = 0.9, f = 0.02;
            const Matrix q = Matrix::Identity(5, 5) - s.r() * s.r().adjoint() - s.t() * s.t().adjoint();
            Eigen::SelfAdjointEigenSolver<Matrix> es(q);
            const Vector proj = es.eigenvectors().adjoint() * s.t().col(m0);
            double b = 0.0;
            for (int i = 0; i < 5; ++i) b += es.eigenvalues()[i] * std::norm(proj[i]);
            const double ratio = b / proj.squaredNorm();
            const auto fb = fano_direct(s, m0, 1.0, transmission(d), f);
            CHECK_THAT(fb.value - 1.0, WithinAbs(2.0 * d * f * ratio, 1e-12));
            CHECK(fb.incident_term == 0.0);
        }
    }
    SECTION("decomposition sums to the value") {
        const auto s = random_absorbing_medium(3, 77);
        const auto fb = fano_direct(s, squeezed({2.0, 0.1}, 0.3, 0.4, 2), transmission(0.6), 0.05);
        CHECK_THAT(fb.incident_term + fb.beating_term + fb.probe_term, WithinAbs(fb.value - 1.0, 1e-12));
        CHECK(fb.probe_term == 0.0);
    }
    SECTION("agrees with the cumulant ratio when thermal terms are removed") {
        const auto s = random_absorbing_medium(3, 5);
        const auto in = squeezed({1.0, 0.2}, 0.5, 0.1, 0);
        const auto k = direct_cumulants_squeezed(s, in, transmission(0.8), 0.03);
        const auto fb = fano_direct(s, in, transmission(0.8), 0.03);
        CHECK_THAT(fb.value, WithinRel(1.0 + (k.kappa2 - k.thermal_kappa2) / (k.kappa1 - k.thermal_kappa1), 1e-12));
    }
    SECTION("zero transmission") {
        const auto mirror = scalar_channel(0.0, 1.0, MediumKind::passive);
        CHECK_THROWS_AS(fano_direct(mirror, 0, 0.5, transmission(), 0.1), ZeroTransmission);
    }
}

TEST_CASE("homodyne Fano factor", "[photostatistics][homodyne]") {
    const auto s = random_absorbing_medium(4, 9);
    const double d = 0.9, kappa = 0.5, f = 0.01;
    SECTION("coherent input") {
        const auto fb = fano_homodyne(s, squeezed({1.0, 0.0}, 0.0, 0.0, 1), homodyne(d, kappa, 2, 0.7), f);
        const Matrix q = Matrix::Identity(4, 4) - s.r() * s.r().adjoint() - s.t() * s.t().adjoint();
        CHECK_THAT(fb.value, WithinAbs(1.0 + 2 * d * kappa * f * q(2, 2).real(), 1e-14));
        CHECK(fb.incident_term == 0.0);
        CHECK(fb.probe_term == 0.0);
    }
    SECTION("optimal phase reproduces the minimum") {
        const auto in = squeezed({0.5, 0.5}, 0.8, 1.1, 3);
        const auto best = fano_homodyne_min(s, in, homodyne(d, kappa, 1), f);
        CHECK_THAT(best.optimal_probe_phase, WithinAbs(0.55 + std::arg(s.t()(1, 3)), 1e-15));
        const auto at = fano_homodyne(s, in, homodyne(d, kappa, 1, best.optimal_probe_phase), f);
        CHECK_THAT(at.value, WithinAbs(best.fano.value, 1e-13));
        CHECK_THAT(at.incident_term + at.beating_term + at.probe_term, WithinAbs(at.value - 1.0, 1e-12));
        for (int k = 0; k < 64; ++k) {
            const auto fk = fano_homodyne(s, in, homodyne(d, kappa, 1, k * std::numbers::pi / 32), f);
            CHECK(best.fano.value <= fk.value + 1e-14);
        }
    }
    SECTION("phase scan finds the analytic minimum") {
        const auto in = squeezed({0.5, 0.5}, 0.8, 1.1, 0);
        const auto scan = scan_probe_phase(s, in, homodyne(d, kappa, 0), f, 64);
        const auto best = fano_homodyne_min(s, in, homodyne(d, kappa, 0), f);
        CHECK_THAT(scan.refined_minimum, WithinAbs(best.fano.value, 1e-10));
        const double gap = std::remainder(scan.best_grid_phase - best.optimal_probe_phase, std::numbers::pi);
        CHECK(std::abs(gap) <= std::numbers::pi / 64 + 1e-12);
    }
    SECTION("zero-length limits") {
        const auto id = ScatteringMatrix::identity(3);
        const auto in = squeezed(0.0, 1.0, 0.3, 1);
        CHECK_THAT(fano_homodyne_min(id, in, homodyne(1.0, 0.5, 1), 0.1).fano.value,
                   WithinAbs(1.0 - std::exp(-1.0) * std::sinh(1.0), 1e-15));
        CHECK_THAT(fano_homodyne_min(id, in, homodyne(1.0, 0.5, 2), 0.1).fano.value, WithinAbs(1.0, 1e-15));
        CHECK(fano_homodyne_min(id, squeezed(1.0, 0.0, 0.0, 1), homodyne(1.0, 0.5, 1), 0.1).fano.incident_term == 0.0);
    }
    SECTION("configuration errors") {
        const auto in = squeezed(1.0, 0.1, 0.0);
        CHECK_THROWS_AS(fano_homodyne(s, in, transmission(), f), InvalidArgument);
        CHECK_THROWS_AS(fano_homodyne(s, in, homodyne(1.0, 1.0, 0), f), InvalidArgument);
        CHECK_THROWS_AS(fano_homodyne(s, in, homodyne(1.0, 0.5, 4), f), InvalidArgument);
    }
}
