#include "drgmm/linalg.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <string>

#include "drgmm/errors.hpp"

namespace drgmm {

MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

SymSpectrum sym_eig(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

namespace {

SymSpectrum checked_spectrum(const MatrixXd& a, double rel_tol) {
    SymSpectrum s = sym_eig(a);
    const double n = static_cast<double>(a.rows());
    const double tr = a.trace();
    if (!(tr > 0.0) || !std::isfinite(tr) || s.values(0) < rel_tol * tr / n) {
        throw SingularCovarianceError("matrix is singular: smallest eigenvalue " +
                                      std::to_string(s.values(0)) + ", trace " +
                                      std::to_string(tr));
    }
    return s;
}

}  // namespace

MatrixXd sym_inverse(const MatrixXd& a, double rel_tol) {
    SymSpectrum s = checked_spectrum(a, rel_tol);
    return s.vectors * s.values.cwiseInverse().asDiagonal() * s.vectors.transpose();
}

MatrixXd sym_sqrt(const MatrixXd& a) {
    SymSpectrum s = sym_eig(a);
    VectorXd r = s.values.cwiseMax(0.0).cwiseSqrt();
    return s.vectors * r.asDiagonal() * s.vectors.transpose();
}

MatrixXd sym_inv_sqrt(const MatrixXd& a, double rel_tol) {
    SymSpectrum s = checked_spectrum(a, rel_tol);
    VectorXd r = s.values.cwiseSqrt().cwiseInverse();
    return s.vectors * r.asDiagonal() * s.vectors.transpose();
}

SymSpectrum gen_sym_eig(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd bih = sym_inv_sqrt(b);
    SymSpectrum s = sym_eig(bih * a * bih);
    s.vectors = bih * s.vectors;
    return s;
}

double chi2_quantile(double df, double p) {
    boost::math::chi_squared dist(df);
    return boost::math::quantile(dist, p);
}

double chi2_upper_tail(double df, double x) {
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
}

double chi2_cdf(double df, double x) {
    if (x <= 0.0) return 0.0;
    boost::math::chi_squared dist(df);
    return boost::math::cdf(dist, x);
}

}  // namespace drgmm
