#pragma once

#include "pdvf/tensor.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace pdvf {

// Reshape v (length d*d) row-major into d x d and zero the strict upper
// triangle. The diagonal and lower entries are preserved.
template <typename S>
Mat<S> lower_triangular_assemble(const Vec<S>& v) {
    auto len = v.size();
    auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(double(len))));
    require(d * d == len, "lower_triangular_assemble: length ", len,
            " is not a perfect square");
    Mat<S> L = Mat<S>::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) L(i, j) = v(i * d + j);
    return L;
}

// Flip sign so the first nonzero component is non-negative.
template <typename S>
void sign_normalize(Vec<S>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) != S(0)) {
            if (v(i) < S(0)) v = -v;
            return;
        }
    }
}

template <typename S>
struct TopEig {
    S lambda;
    Vec<S> vec;  // unit norm, sign-normalized
};

// Largest eigenpair of a symmetric PSD matrix. For Hermitian PSD input the
// top singular vector coincides with the top eigenvector. Degenerate top
// eigenvalues break ties deterministically: smallest index within the sorted
// eigen-decomposition whose eigenvalue matches the maximum.
template <typename S>
TopEig<S> top_eigvec(const Mat<S>& A, S sym_tol = S(1e-8)) {
    require(A.rows() == A.cols() && A.rows() >= 1, "top_eigvec: matrix must be square");
    S asym = (A - A.transpose()).template lpNorm<Eigen::Infinity>();
    S scale = std::max(S(1), A.template lpNorm<Eigen::Infinity>());
    require(asym <= sym_tol * scale, "top_eigvec: input asymmetric by ", asym);

    Eigen::SelfAdjointEigenSolver<Mat<S>> es(A);
    require(es.info() == Eigen::Success, "top_eigvec: eigensolver failed to converge");
    const auto& evals = es.eigenvalues();
    Eigen::Index n = evals.size();
    S lmax = evals(n - 1);  // sorted ascending
    S tie = S(1e-12) * std::max(S(1), std::abs(lmax));
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lmax - evals(i) <= tie) {
            pick = i;
            break;
        }
    }
    TopEig<S> out;
    out.lambda = lmax;
    out.vec = es.eigenvectors().col(pick);
    out.vec.normalize();
    sign_normalize(out.vec);
    return out;
}

}  // namespace pdvf
