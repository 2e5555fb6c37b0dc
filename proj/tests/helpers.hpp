#pragma once

#include <drgmm/models.hpp>
#include <drgmm/moments.hpp>
#include <drgmm/rng.hpp>
#include <vector>

namespace testing_util {

using drgmm::MatrixXd;
using drgmm::VectorXd;

// f_t(theta) = a_t - B_t theta, q_t = -B_t, stored per observation.
class LinearTableModel : public drgmm::MomentModel {
public:
    LinearTableModel(std::vector<VectorXd> a, std::vector<MatrixXd> B) : a_(std::move(a)), B_(std::move(B)) {}
    int k_f() const override { return static_cast<int>(a_[0].size()); }
    int m() const override { return static_cast<int>(B_[0].cols()); }
    int T() const override { return static_cast<int>(a_.size()); }
    VectorXd eval_f(const VectorXd& th, int t) const override { return a_[t] - B_[t] * th; }
    MatrixXd eval_q(const VectorXd&, int t) const override { return -B_[t]; }
    bool is_linear() const override { return true; }

private:
    std::vector<VectorXd> a_;
    std::vector<MatrixXd> B_;
};

inline LinearTableModel random_linear_model(int T, int k, int m, std::uint64_t seed) {
    drgmm::RepRng rng(seed, 1, 0);
    std::vector<VectorXd> a;
    std::vector<MatrixXd> B;
    MatrixXd B0 = rng.normal_matrix(k, m);
    VectorXd a0 = rng.normal_vector(k) * 0.3;
    for (int t = 0; t < T; ++t) {
        a.push_back(a0 + rng.normal_vector(k));
        B.push_back(B0 + 0.5 * rng.normal_matrix(k, m));
    }
    return LinearTableModel(a, B);
}

// Raw returns for N+1 assets with m factors; misspecified pricing unless exact.
inline drgmm::FactorData random_factor_data(int T, int N, int m, std::uint64_t seed,
                                            double misspec = 0.3, double beta_scale = 1.0) {
    drgmm::RepRng rng(seed, 2, 0);
    MatrixXd F = rng.normal_matrix(T, m);
    F.array() += 0.2;
    MatrixXd B = beta_scale * rng.normal_matrix(N + 1, m);
    VectorXd lam = rng.normal_vector(m);
    VectorXd alpha = misspec * rng.normal_vector(N + 1);
    MatrixXd R(T, N + 1);
    for (int t = 0; t < T; ++t)
        R.row(t) = (alpha + B * lam + B * F.row(t).transpose() + 0.8 * rng.normal_vector(N + 1)).transpose();
    drgmm::FactorData d;
    d.R = R;
    d.F = F;
    return d;
}

inline drgmm::IvData random_iv_data(int T, int k, int m, std::uint64_t seed, double pi_scale = 0.5) {
    drgmm::RepRng rng(seed, 3, 0);
    drgmm::IvData d;
    d.Z = rng.normal_matrix(T, k);
    d.W = rng.normal_matrix(T, 1);
    MatrixXd Pi = pi_scale * rng.normal_matrix(k, m);
    MatrixXd V = rng.normal_matrix(T, m);
    VectorXd eps = 0.6 * V.rowwise().sum() + rng.normal_vector(T);
    d.X = d.Z * Pi + V + d.W * 0.3;
    VectorXd theta = VectorXd::Constant(m, 1.0);
    d.y = d.X * theta + eps + d.W * 0.5;
    return d;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double max_abs(const MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace testing_util
