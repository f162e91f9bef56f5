#ifndef MIXLAB_LINALG_HPP
#define MIXLAB_LINALG_HPP

#include <vector>

namespace mixlab {

// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//
// `a` is the n x n symmetric matrix in row-major order (consumed as
// workspace). Returns eigenvalues in ascending order. When `vectors` is
// non-null it receives the matching eigenvectors, one per ROW, so that
// A = sum_i lambda_i v_i v_i^T.
//
// Convergence: off-diagonal Frobenius norm below tol * max(1, ||A||_F).
std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>* vectors = nullptr,
                                 double tol = 1e-12, int max_sweeps = 100);

} // namespace mixlab

#endif
