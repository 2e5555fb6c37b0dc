#pragma once

#include <Eigen/Dense>

namespace drgmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SymSpectrum {
    VectorXd values;   // ascending
    MatrixXd vectors;
};

SymSpectrum sym_eig(const MatrixXd& a);

// Inverse, square root and inverse square root of a symmetric matrix via its
// eigendecomposition. Throws NumericalError when an eigenvalue is below
// rel_tol * trace / n (or the trace is not positive).
MatrixXd sym_inverse(const MatrixXd& a, double rel_tol = 1e-12);
MatrixXd sym_sqrt(const MatrixXd& a);
MatrixXd sym_inv_sqrt(const MatrixXd& a, double rel_tol = 1e-12);

MatrixXd symmetrize(const MatrixXd& a);
MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

// Generalized symmetric-definite problem A v = tau B v with B positive definite.
// Eigenvalues ascending, eigenvectors B-orthonormal.
SymSpectrum gen_sym_eig(const MatrixXd& a, const MatrixXd& b);

double chi2_quantile(double df, double p);
double chi2_upper_tail(double df, double x);
double chi2_cdf(double df, double x);

}  // namespace drgmm
