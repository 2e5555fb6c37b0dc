#include "drgmm/models.hpp"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "drgmm/errors.hpp"
#include "drgmm/rng.hpp"

namespace drgmm {

namespace {

MatrixXd demean(const MatrixXd& a) { return a.rowwise() - a.colwise().mean(); }

MatrixXd ols(const MatrixXd& X, const MatrixXd& Y) {
    return (X.transpose() * X).ldlt().solve(X.transpose() * Y);
}

void require_finite(const MatrixXd& a, const char* what) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (!std::isfinite(a(i, j)))
                throw InputError(std::string(what) + " has a non-finite entry at row " +
                                 std::to_string(i + 1) + ", column " + std::to_string(j + 1));
}

}  // namespace

// ---------------------------------------------------------------- factor

FactorModel::FactorModel(const FactorData& d) {
    require_finite(d.R, "R");
    require_finite(d.F, "F");
    if (d.R.rows() != d.F.rows()) throw InputError("R and F have different row counts");
    if (d.excess) {
        r_ = d.R;
    } else {
        const int n1 = static_cast<int>(d.R.cols());
        if (n1 < 2) throw InputError("need at least two raw asset returns");
        const int s = d.subtract_index < 0 ? n1 - 1 : d.subtract_index;
        if (s >= n1) throw InputError("subtract_index out of range");
        r_.resize(d.R.rows(), n1 - 1);
        for (int j = 0, c = 0; j < n1; ++j)
            if (j != s) r_.col(c++) = d.R.col(j) - d.R.col(s);
    }
    const Eigen::Index T = r_.rows(), N = r_.cols(), m = d.F.cols();
    if (m < 1) throw InputError("need at least one factor");
    if (T <= N + m) throw InputError("need T > N + m observations");
    const double Td = static_cast<double>(T);
    rbar_ = r_.colwise().mean().transpose();
    fbar_ = d.F.colwise().mean().transpose();
    Fc_ = demean(d.F);
    Q_ = symmetrize(Fc_.transpose() * Fc_ / Td);
    try {
        Qinv_ = sym_inverse(Q_, 1e-12);
    } catch (const NumericalError&) {
        throw InputError("factor matrix is rank deficient");
    }
    MatrixXd rc = demean(r_);
    beta_ = (rc.transpose() * Fc_ / Td) * Qinv_;
    U_ = rc - Fc_ * beta_.transpose();
    Omega_ = symmetrize(U_.transpose() * U_ / Td);
    kf_.H.resize(N, m + 1);
    kf_.H.col(0) = rbar_;
    kf_.H.rightCols(m) = beta_;
    kf_.Vbase = Omega_;
    kf_.S = MatrixXd::Zero(m + 1, m + 1);
    kf_.S(0, 0) = 1.0;
    kf_.S.bottomRightCorner(m, m) = Qinv_;
    kf_.T = Td;
}

VectorXd FactorModel::eval_f(const VectorXd& lambda, int t) const {
    const double w = 1.0 - Fc_.row(t).dot(Qinv_ * lambda);
    return rbar_ - beta_ * lambda + U_.row(t).transpose() * w;
}

MatrixXd FactorModel::eval_q(const VectorXd&, int t) const {
    return -beta_ - U_.row(t).transpose() * (Fc_.row(t) * Qinv_);
}

// ---------------------------------------------------------------- IV

IvModel::IvModel(const IvData& d) : iid_(d.iid) {
    const Eigen::Index T = d.y.size();
    if (d.X.rows() != T || d.Z.rows() != T || (d.W.size() > 0 && d.W.rows() != T))
        throw InputError("IV inputs have inconsistent row counts");
    require_finite(d.y, "y");
    require_finite(d.X, "X");
    require_finite(d.Z, "Z");
    if (d.W.size() > 0) require_finite(d.W, "W");
    const Eigen::Index m = d.X.cols(), k = d.Z.cols();
    if (k <= m) throw InputError("need more instruments than endogenous regressors");
    MatrixXd W = d.W;
    if (d.add_constant) {
        W.conservativeResize(T, d.W.cols() + 1);
        W.col(W.cols() - 1).setOnes();
    }
    p_ = static_cast<int>(W.cols());
    auto resid = [&](const MatrixXd& a) -> MatrixXd {
        if (W.cols() == 0) return a;
        return a - W * ols(W, a);
    };
    y_ = resid(d.y);
    X_ = resid(d.X);
    Z_ = resid(d.Z);
    if (T <= k + p_) throw InputError("too few observations for the instrument count");
    const double Td = static_cast<double>(T);
    Qzz_ = symmetrize(Z_.transpose() * Z_ / Td);
    SymSpectrum sz = sym_eig(Qzz_);
    if (sz.values(0) < 1e-10 * Qzz_.trace() / static_cast<double>(k))
        throw InputError("instruments are collinear after partialling out");
    MatrixXd Y(T, 1 + m);
    Y.col(0) = y_;
    Y.rightCols(m) = X_;
    MatrixXd coef = ols(Z_, Y);
    Pi_ = coef.rightCols(m);
    MatrixXd E = Y - Z_ * coef;
    Sw_ = symmetrize(E.transpose() * E / Td);
    kf_.H = Z_.transpose() * Y / Td;
    kf_.Vbase = Qzz_;
    kf_.S = Sw_;
    kf_.T = Td;
}

VectorXd IvModel::eval_f(const VectorXd& theta, int t) const {
    return Z_.row(t).transpose() * (y_(t) - X_.row(t).dot(theta));
}

MatrixXd IvModel::eval_q(const VectorXd&, int t) const {
    return -Z_.row(t).transpose() * X_.row(t);
}

double IvModel::first_stage_F() const {
    if (m() != 1) throw UnsupportedError("first-stage F is defined for one endogenous regressor");
    const double T = static_cast<double>(this->T());
    const double k = static_cast<double>(k_f());
    const double s2 = Sw_(1, 1) * T / (T - k - p_);
    const double ss = (Pi_.transpose() * Qzz_ * Pi_)(0, 0) * T;
    return ss / k / s2;
}

// ---------------------------------------------------------------- CRRA

CrraModel::CrraModel(const VectorXd& c, const MatrixXd& R, double delta0) : delta0_(delta0) {
    if (c.size() != R.rows() + 1)
        throw InputError("consumption must have one more observation than returns");
    require_finite(c, "consumption");
    require_finite(R, "returns");
    if ((c.array() <= 0.0).any()) throw InputError("consumption must be positive");
    if ((R.array() <= -1.0).any()) throw InputError("returns must exceed -1");
    lg_ = (c.tail(c.size() - 1).array() / c.head(c.size() - 1).array()).log();
    gross_ = (R.array() + 1.0).matrix();
    const double mx = lg_.cwiseAbs().maxCoeff();
    safe_ = mx > 0.0 ? 600.0 / mx : std::numeric_limits<double>::infinity();
}

void CrraModel::check_gamma(double g) const {
    if (!(std::abs(g) <= safe_))
        throw NumericalError("gamma " + std::to_string(g) + " outside the safe range |gamma| <= " +
                             std::to_string(safe_));
}

VectorXd CrraModel::eval_f(const VectorXd& gamma, int t) const {
    check_gamma(gamma(0));
    const double w = delta0_ * std::exp(-gamma(0) * lg_(t));
    return (w * gross_.row(t).transpose()).array() - 1.0;
}

MatrixXd CrraModel::eval_q(const VectorXd& gamma, int t) const {
    check_gamma(gamma(0));
    const double w = -delta0_ * lg_(t) * std::exp(-gamma(0) * lg_(t));
    return w * gross_.row(t).transpose();
}

CrraDgpParams default_crra_params() {
    CrraDgpParams p;
    const int N = 5;
    p.delta0 = 0.95;
    p.gamma0 = 15.0;
    p.V_cc = 0.00062;
    VectorXd sd = VectorXd::LinSpaced(N, 0.12, 0.18);
    VectorXd rho = VectorXd::LinSpaced(N, 0.2, 0.3);
    const double corr = 0.3;
    p.V_rc = rho.cwiseProduct(sd) * std::sqrt(p.V_cc);
    p.V_rr = sd * sd.transpose() * corr;
    p.V_rr.diagonal() = sd.cwiseAbs2();
    p.c = 0.0;
    p.c_tilde = 1.0;
    return p;
}

VectorXd crra_effective_vrc(const CrraDgpParams& p) { return p.c_tilde * p.V_rc; }

MatrixXd crra_joint_cov(const CrraDgpParams& p) {
    const int N = p.N();
    MatrixXd V(N + 1, N + 1);
    V(0, 0) = p.V_cc;
    VectorXd vrc = crra_effective_vrc(p);
    V.block(1, 0, N, 1) = vrc;
    V.block(0, 1, 1, N) = vrc.transpose();
    V.bottomRightCorner(N, N) = p.V_rr;
    return V;
}

void validate(const CrraDgpParams& p) {
    const int N = p.N();
    if (N < 2) throw InputError("CRRA calibration needs at least two assets");
    if (p.V_rr.rows() != N || p.V_rr.cols() != N) throw InputError("V_rr dimension mismatch");
    if (p.mu2.size() != 0 && p.mu2.size() != N) throw InputError("mu2 dimension mismatch");
    if (!(p.delta0 > 0.0 && p.delta0 < 1.0)) throw InputError("delta0 must lie in (0,1)");
    if (!(p.V_cc > 0.0)) throw InputError("V_cc must be positive");
    if (!(p.c_tilde > 0.0)) throw InputError("c_tilde must be positive");
    if (!(p.c >= 0.0)) throw InputError("c must be non-negative");
    VectorXd vrc = crra_effective_vrc(p);
    for (int i = 0; i < N; ++i)
        if (std::abs(vrc(i)) > std::sqrt(p.V_cc * p.V_rr(i, i)))
            throw InputError("c_tilde violates the correlation bound for asset " +
                             std::to_string(i + 1));
    MatrixXd V = crra_joint_cov(p);
    if (sym_eig(V).values(0) <= 0.0)
        throw InputError("joint covariance of (dc, r) is not positive definite");
}

VectorXd crra_log_return_mean(const CrraDgpParams& p) {
    VectorXd base;
    if (p.mu2.size() > 0) {
        base = p.mu2;
    } else {
        VectorXd vrc = crra_effective_vrc(p);
        const double g = p.gamma0;
        base = (-std::log(p.delta0) -
                0.5 * (p.V_rr.diagonal().array() + g * g * p.V_cc - 2.0 * g * vrc.array()))
                   .matrix();
    }
    return base.array() - p.c;
}

namespace {

VectorXd crra_gross_mean(const CrraDgpParams& p, double g) {
    VectorXd vrc = crra_effective_vrc(p);
    VectorXd e = std::log(p.delta0) + crra_log_return_mean(p).array() +
                 0.5 * (p.V_rr.diagonal().array() + g * g * p.V_cc - 2.0 * g * vrc.array());
    return e.array().exp();
}

}  // namespace

CrraPopulation crra_population(const CrraDgpParams& p, double g) {
    const int N = p.N();
    VectorXd m = crra_gross_mean(p, g);
    MatrixXd A(N, N + 1);
    A.col(0).setConstant(-g);
    A.rightCols(N).setIdentity();
    MatrixXd E = (A * crra_joint_cov(p) * A.transpose()).array().exp() - 1.0;
    CrraPopulation out;
    out.mu_f = m.array() - 1.0;
    out.V_ff = symmetrize((m * m.transpose()).cwiseProduct(E));
    return out;
}

VectorXd crra_population_dmu(const CrraDgpParams& p, double g) {
    VectorXd vrc = crra_effective_vrc(p);
    return crra_gross_mean(p, g).cwiseProduct((g * p.V_cc - vrc.array()).matrix());
}

double crra_population_objective(const CrraDgpParams& p, double g) {
    CrraPopulation pop = crra_population(p, g);
    return pop.mu_f.dot(pop.V_ff.ldlt().solve(pop.mu_f));
}

CrraPseudoTrue crra_pseudo_true(const CrraDgpParams& p, double lo, double hi, int grid) {
    validate(p);
    if (!(hi > lo) || grid < 3) throw InputError("invalid pseudo-true bracket");
    const double h = (hi - lo) / (grid - 1);
    int best = 0;
    double bv = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid; ++i) {
        const double v = crra_population_objective(p, lo + i * h);
        if (v < bv) {
            bv = v;
            best = i;
        }
    }
    CrraPseudoTrue out;
    out.at_edge = best == 0 || best == grid - 1;
    const double a = lo + std::max(best - 1, 0) * h;
    const double b = lo + std::min(best + 1, grid - 1) * h;
    auto r = boost::math::tools::brent_find_minima(
        [&](double g) { return crra_population_objective(p, g); }, a, b, 40);
    if (r.second <= bv) {
        out.gamma_star = r.first;
        out.min_obj = r.second;
    } else {
        out.gamma_star = lo + best * h;
        out.min_obj = bv;
    }
    return out;
}

CrraSample crra_dgp_sample(const CrraDgpParams& p, int T, std::uint64_t seed, std::uint64_t rep) {
    validate(p);
    if (T < 2) throw InputError("T must be at least 2");
    const int N = p.N();
    MatrixXd L = crra_joint_cov(p).llt().matrixL();
    VectorXd mu(N + 1);
    mu(0) = 0.0;
    mu.tail(N) = crra_log_return_mean(p);
    RepRng rng(seed, 0xC44A, rep);
    CrraSample s;
    s.consumption.resize(T + 1);
    s.returns.resize(T, N);
    s.consumption(0) = 1.0;
    for (int t = 0; t < T; ++t) {
        VectorXd x = mu + L * rng.normal_vector(N + 1);
        s.consumption(t + 1) = s.consumption(t) * std::exp(x(0));
        s.returns.row(t) = (x.tail(N).array().exp() - 1.0).transpose();
    }
    return s;
}

// ---------------------------------------------------------------- config

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError(path + ":" + std::to_string(lineno) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

namespace {

std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw InputError("bad numeric value for " + key + ": '" + item + "'");
        }
    }
    return out;
}

double get_scalar(const std::map<std::string, std::string>& kv, const std::string& k,
                  double fallback, bool required) {
    auto it = kv.find(k);
    if (it == kv.end()) {
        if (required) throw InputError("missing key " + k);
        return fallback;
    }
    auto v = parse_list(k, it->second);
    if (v.size() != 1) throw InputError("key " + k + " expects one value");
    return v[0];
}

std::string join(const double* x, Eigen::Index n) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < n; ++i) os << (i ? ", " : "") << x[i];
    return os.str();
}

}  // namespace

CrraDgpParams crra_params_from_kv(const std::map<std::string, std::string>& kv) {
    CrraDgpParams p;
    p.delta0 = get_scalar(kv, "delta0", 0.95, false);
    p.gamma0 = get_scalar(kv, "gamma0", 15.0, false);
    p.V_cc = get_scalar(kv, "V_cc", 0.0, true);
    p.c = get_scalar(kv, "c", 0.0, false);
    p.c_tilde = get_scalar(kv, "c_tilde", 1.0, false);
    auto it = kv.find("V_rc");
    if (it == kv.end()) throw InputError("missing key V_rc");
    auto vrc = parse_list("V_rc", it->second);
    const int N = static_cast<int>(vrc.size());
    p.V_rc = Eigen::Map<VectorXd>(vrc.data(), N);
    it = kv.find("V_rr");
    if (it == kv.end()) throw InputError("missing key V_rr");
    auto vrr = parse_list("V_rr", it->second);
    if (static_cast<int>(vrr.size()) != N * N)
        throw InputError("V_rr must hold N*N = " + std::to_string(N * N) + " values");
    p.V_rr = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        vrr.data(), N, N);
    it = kv.find("mu2");
    if (it != kv.end()) {
        auto mu = parse_list("mu2", it->second);
        if (static_cast<int>(mu.size()) != N) throw InputError("mu2 must hold N values");
        p.mu2 = Eigen::Map<VectorXd>(mu.data(), N);
    }
    validate(p);
    return p;
}

std::string crra_params_to_kv(const CrraDgpParams& p) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "delta0 = " << p.delta0 << "\n";
    os << "gamma0 = " << p.gamma0 << "\n";
    os << "V_cc = " << p.V_cc << "\n";
    os << "V_rc = " << join(p.V_rc.data(), p.V_rc.size()) << "\n";
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rr = p.V_rr;
    os << "V_rr = " << join(rr.data(), rr.size()) << "\n";
    if (p.mu2.size() > 0) os << "mu2 = " << join(p.mu2.data(), p.mu2.size()) << "\n";
    os << "c = " << p.c << "\n";
    os << "c_tilde = " << p.c_tilde << "\n";
    return os.str();
}

}  // namespace drgmm
