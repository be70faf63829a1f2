#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sqt/medium.hpp"

namespace fixtures {

using namespace sqt;

inline ScatteringMatrix scalar_channel(cplx t, cplx r, MediumKind kind) {
    Matrix rp(1, 1), tp(1, 1), tt(1, 1), rr(1, 1);
    rp(0, 0) = r;
    tp(0, 0) = t;
    tt(0, 0) = t;
    rr(0, 0) = r;
    return {rp, tp, tt, rr, kind};
}

/// Haar-ish unitary from the QR of a complex Gaussian matrix.
inline Matrix random_unitary(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> g;
    Matrix a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = cplx(g(rng), g(rng));
    Eigen::HouseholderQR<Matrix> qr(a);
    return qr.householderQ() * Matrix::Identity(dim, dim);
}

/// U1 diag(sigma) U2 with singular values in [lo, hi]: absorbing if hi <= 1,
/// amplifying if lo >= 1.
inline ScatteringMatrix random_contraction(int n_modes, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    const Eigen::Index dim = 2 * n_modes;
    RealVector sigma(dim);
    for (Eigen::Index i = 0; i < dim; ++i) sigma[i] = u(rng);
    const Matrix s = random_unitary(dim, rng) * sigma.cast<cplx>().asDiagonal() * random_unitary(dim, rng);
    const MediumKind kind = hi <= 1.0 ? MediumKind::absorbing : MediumKind::amplifying;
    return ScatteringMatrix::from_full(s, kind);
}

inline ScatteringMatrix random_absorbing_medium(int n_modes, std::uint64_t seed, double length = 40.0) {
    MediumSpec spec;
    spec.n_modes = n_modes;
    spec.total_length = length;
    spec.scatter_strength = 0.3;
    spec.loss_gain_sign = +1;
    spec.ballistic_decay_length = 60.0;
    spec.occupation = 1e-3;
    spec.seed = seed;
    return build_medium(spec);
}

}  // namespace fixtures
