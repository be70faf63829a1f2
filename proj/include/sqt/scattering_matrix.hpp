#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <string_view>
#include <utility>

#include "sqt/errors.hpp"

namespace sqt {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

enum class MediumKind { passive, absorbing, amplifying };

inline std::string_view to_string(MediumKind kind) {
    switch (kind) {
        case MediumKind::passive: return "passive";
        case MediumKind::absorbing: return "absorbing";
        case MediumKind::amplifying: return "amplifying";
    }
    return "unknown";
}

/// Scattering matrix of a two-sided waveguide section,
///
///     S = | r'  t' |
///         | t   r  |
///
/// Modes 0..N-1 live on the left, N..2N-1 on the right. r' reflects light
/// arriving from the left, t carries it to the right; r and t' are the
/// corresponding blocks for light arriving from the right.
class ScatteringMatrix {
public:
    ScatteringMatrix(Matrix r_prime, Matrix t_prime, Matrix t, Matrix r, MediumKind kind)
        : r_prime_(std::move(r_prime)),
          t_prime_(std::move(t_prime)),
          t_(std::move(t)),
          r_(std::move(r)),
          kind_(kind) {
        const auto n = r_prime_.rows();
        if (n < 1) throw InvalidArgument("ScatteringMatrix: n_modes must be >= 1");
        for (const Matrix* b : {&r_prime_, &t_prime_, &t_, &r_}) {
            if (b->rows() != n || b->cols() != n)
                throw InvalidArgument("ScatteringMatrix: all four blocks must be N x N");
        }
    }

    /// Split a 2N x 2N matrix into its blocks.
    static ScatteringMatrix from_full(const Matrix& s, MediumKind kind) {
        if (s.rows() != s.cols() || s.rows() % 2 != 0 || s.rows() == 0)
            throw InvalidArgument("ScatteringMatrix::from_full: expected a non-empty 2N x 2N matrix");
        const auto n = s.rows() / 2;
        return {s.topLeftCorner(n, n), s.topRightCorner(n, n), s.bottomLeftCorner(n, n),
                s.bottomRightCorner(n, n), kind};
    }

    /// Perfect transmission, no reflection: the L = 0 medium.
    static ScatteringMatrix identity(Eigen::Index n_modes, MediumKind kind = MediumKind::passive) {
        if (n_modes < 1) throw InvalidArgument("ScatteringMatrix::identity: n_modes must be >= 1");
        const Matrix zero = Matrix::Zero(n_modes, n_modes);
        const Matrix one = Matrix::Identity(n_modes, n_modes);
        return {zero, one, one, zero, kind};
    }

    Eigen::Index n_modes() const noexcept { return r_prime_.rows(); }
    const Matrix& r_prime() const noexcept { return r_prime_; }
    const Matrix& t_prime() const noexcept { return t_prime_; }
    const Matrix& t() const noexcept { return t_; }
    const Matrix& r() const noexcept { return r_; }
    MediumKind kind() const noexcept { return kind_; }

    Matrix full() const {
        const auto n = n_modes();
        Matrix s(2 * n, 2 * n);
        s.topLeftCorner(n, n) = r_prime_;
        s.topRightCorner(n, n) = t_prime_;
        s.bottomLeftCorner(n, n) = t_;
        s.bottomRightCorner(n, n) = r_;
        return s;
    }

    ScatteringMatrix with_kind(MediumKind kind) const {
        return {r_prime_, t_prime_, t_, r_, kind};
    }

private:
    Matrix r_prime_;
    Matrix t_prime_;
    Matrix t_;
    Matrix r_;
    MediumKind kind_;
};

/// Eigenvalues of S S^dagger, ascending.
inline RealVector flux_eigenvalues(const ScatteringMatrix& s) {
    const Matrix full = s.full();
    const Matrix sst = full * full.adjoint();
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sst, Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

/// Singular values of S, descending.
inline RealVector singular_values(const ScatteringMatrix& s) {
    RealVector ev = flux_eigenvalues(s);
    RealVector out(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) out[i] = std::sqrt(std::max(0.0, ev[ev.size() - 1 - i]));
    return out;
}

/// Check the physical constraint attached to the medium kind; throws on violation.
///   passive    : all singular values equal 1
///   absorbing  : all singular values <= 1
///   amplifying : eigenvalues of SS^dagger - 1 >= 0
inline void check_invariants(const ScatteringMatrix& s, double tolerance = 1e-10) {
    const RealVector ev = flux_eigenvalues(s);
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    switch (s.kind()) {
        case MediumKind::passive:
            if (std::abs(std::sqrt(std::max(lo, 0.0)) - 1.0) > tolerance ||
                std::abs(std::sqrt(hi) - 1.0) > tolerance)
                throw DomainError("passive scattering matrix is not unitary: singular values in [" +
                                  std::to_string(std::sqrt(std::max(lo, 0.0))) + ", " +
                                  std::to_string(std::sqrt(hi)) + "]");
            break;
        case MediumKind::absorbing:
            if (std::sqrt(hi) > 1.0 + tolerance)
                throw DomainError("absorbing scattering matrix is not contractive: largest singular value " +
                                  std::to_string(std::sqrt(hi)));
            break;
        case MediumKind::amplifying:
            if (lo - 1.0 < -tolerance)
                throw GainPositivityViolation("amplifying scattering matrix has SS^dagger - 1 with eigenvalue " +
                                              std::to_string(lo - 1.0));
            break;
    }
}

}  // namespace sqt
