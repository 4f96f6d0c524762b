#include "hwgp/linsys.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hwgp/errors.hpp"

namespace hwgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void LinearStateSpace::validate_dimensions() const {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n) throw std::invalid_argument("LinearStateSpace: A must be square and nonempty");
  if (B.rows() != n || B.cols() < 1) throw std::invalid_argument("LinearStateSpace: B has wrong shape");
  if (C.cols() != n || C.rows() < 1) throw std::invalid_argument("LinearStateSpace: C has wrong shape");
  if (D.rows() != C.rows() || D.cols() != B.cols())
    throw std::invalid_argument("LinearStateSpace: D has wrong shape");
}

double spectral_radius(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd solve_discrete_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
  const auto n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_discrete_lyapunov: A and Q must be square and of equal size");
  if (spectral_radius(A) >= 1.0) throw NumericalError("solve_discrete_lyapunov: A is not Schur stable");

  // vec(A P A^T) = (A kron A) vec(P), column-major vec.
  const auto n2 = n * n;
  MatrixXd system = MatrixXd::Identity(n2, n2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) system.block(i * n, j * n, n, n) -= A(i, j) * A;
  const VectorXd rhs = Q.reshaped();
  const VectorXd p = system.partialPivLu().solve(rhs);
  MatrixXd P = p.reshaped(n, n);
  return 0.5 * (P + P.transpose());
}

double h2_norm(const LinearStateSpace& lin) {
  lin.validate_dimensions();
  const MatrixXd P = solve_discrete_lyapunov(lin.A, lin.B * lin.B.transpose());
  const double tr = (lin.C * P * lin.C.transpose() + lin.D * lin.D.transpose()).trace();
  return std::sqrt(std::max(tr, 0.0));
}

namespace {

bool full_rank(const MatrixXd& M) {
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const VectorXd& s = svd.singularValues();
  return s.size() > 0 && s(s.size() - 1) > 1e-8 * std::max(1.0, s(0));
}

MatrixXd controllability(const MatrixXd& A, const MatrixXd& B) {
  const auto n = A.rows();
  MatrixXd W(n, n * B.cols());
  MatrixXd block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    W.middleCols(k * B.cols(), B.cols()) = block;
    block = A * block;
  }
  return W;
}

}  // namespace

LinearStateSpace random_stable_system(int state_dim, std::uint64_t seed, double target_h2) {
  if (state_dim < 1) throw std::invalid_argument("random_stable_system: state_dim must be >= 1");
  if (!(target_h2 > 0.0)) throw std::invalid_argument("random_stable_system: target_h2 must be > 0");
  constexpr double kRadius = 0.95;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    LinearStateSpace lin;
    lin.A = MatrixXd::Zero(state_dim, state_dim);
    int k = 0;
    while (k < state_dim) {
      if (state_dim - k >= 2 && unit(rng) < 0.5) {
        const double r = kRadius * std::sqrt(unit(rng));
        const double theta = std::numbers::pi * unit(rng);
        const double a = r * std::cos(theta);
        const double b = r * std::sin(theta);
        lin.A(k, k) = a;
        lin.A(k, k + 1) = b;
        lin.A(k + 1, k) = -b;
        lin.A(k + 1, k + 1) = a;
        k += 2;
      } else {
        lin.A(k, k) = kRadius * (2.0 * unit(rng) - 1.0);
        k += 1;
      }
    }
    lin.B = MatrixXd::NullaryExpr(state_dim, 1, [&] { return normal(rng); });
    lin.C = MatrixXd::NullaryExpr(1, state_dim, [&] { return normal(rng); });
    lin.D = MatrixXd::NullaryExpr(1, 1, [&] { return normal(rng); });

    if (!full_rank(controllability(lin.A, lin.B))) continue;
    if (!full_rank(controllability(lin.A.transpose(), lin.C.transpose()))) continue;
    const double h2 = h2_norm(lin);
    if (!(h2 > 1e-6)) continue;
    const double scale = target_h2 / h2;
    lin.C *= scale;
    lin.D *= scale;
    return lin;
  }
  throw NumericalError("random_stable_system: could not draw a nondegenerate system");
}

LinearStateSpace transfer_function(const std::vector<double>& num, const std::vector<double>& den) {
  if (den.size() < 2 || den.front() == 0.0)
    throw std::invalid_argument("transfer_function: denominator must have degree >= 1");
  if (num.empty() || num.size() > den.size())
    throw std::invalid_argument("transfer_function: transfer function must be proper");
  const auto n = static_cast<Eigen::Index>(den.size() - 1);
  std::vector<double> a(den.size()), b(den.size(), 0.0);
  for (std::size_t i = 0; i < den.size(); ++i) a[i] = den[i] / den.front();
  const std::size_t offset = den.size() - num.size();
  for (std::size_t i = 0; i < num.size(); ++i) b[offset + i] = num[i] / den.front();

  LinearStateSpace lin;
  lin.A = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) lin.A(0, j) = -a[j + 1];
  for (Eigen::Index i = 1; i < n; ++i) lin.A(i, i - 1) = 1.0;
  lin.B = MatrixXd::Zero(n, 1);
  lin.B(0, 0) = 1.0;
  lin.C.resize(1, n);
  for (Eigen::Index j = 0; j < n; ++j) lin.C(0, j) = b[j + 1] - a[j + 1] * b[0];
  lin.D = MatrixXd::Constant(1, 1, b[0]);
  return lin;
}

double invert_monotone(const ScalarMap& f, double value, double tolerance) {
  double lo = value - 1.0;
  double hi = value + 1.0;
  double width = 1.0;
  for (int k = 0; k < 200 && f(lo) > value; ++k) {
    width *= 2.0;
    lo = value - width;
  }
  width = 1.0;
  for (int k = 0; k < 200 && f(hi) < value; ++k) {
    width *= 2.0;
    hi = value + width;
  }
  if (f(lo) > value || f(hi) < value) throw NumericalError("invert_monotone: could not bracket value");
  for (int k = 0; k < 200 && hi - lo > tolerance * (1.0 + std::abs(value)); ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < value ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Nonlinearity nonlinearity_from_name(const std::string& name) {
  std::string key;
  for (char c : name)
    if (!std::isspace(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  if (key == "identity" || key == "linear") {
    auto id = [](double v) { return v; };
    return {"identity", id, id};
  }
  // <v>+sin(<v>) for a single variable letter.
  if (key.size() == 8 && std::isalpha(static_cast<unsigned char>(key[0])) && key.substr(1, 5) == "+sin(" &&
      key[6] == key[0] && key[7] == ')') {
    ScalarMap forward = [](double v) { return v + std::sin(v); };
    ScalarMap inverse = [forward](double v) { return invert_monotone(forward, v); };
    return {key, forward, inverse};
  }
  throw std::invalid_argument("unknown nonlinearity '" + name + "'");
}

void HWSystem::validate() const {
  lin.validate_dimensions();
  if (lin.input_dim() != 1 || lin.output_dim() != 1)
    throw std::invalid_argument("HWSystem: only SISO systems are supported");
  if (!psi || !phi_inv || !phi) throw std::invalid_argument("HWSystem: nonlinearities must be set");
  if (!(sigma >= 0.0)) throw std::invalid_argument("HWSystem: sigma must be >= 0");
  if (spectral_radius(lin.A) >= 1.0) throw std::invalid_argument("HWSystem: linear block is not stable");
  for (int i = -10; i <= 10; ++i) {
    const double v = 0.5 * i;
    if (std::abs(phi(phi_inv(v)) - v) > 1e-9)
      throw std::invalid_argument("HWSystem: phi is not the inverse of phi_inv");
  }
}

HWSystem make_hw_system(LinearStateSpace lin, const Nonlinearity& input, const Nonlinearity& output,
                        double sigma) {
  HWSystem sys{std::move(lin), input.forward, output.forward, output.inverse, sigma};
  sys.validate();
  return sys;
}

Trajectory Trajectory::segment(Eigen::Index start, Eigen::Index length) const {
  if (start < 0 || length < 0 || start + length > size())
    throw std::invalid_argument("Trajectory::segment: out of range");
  Trajectory t;
  t.u = u.segment(start, length);
  t.y = y.segment(start, length);
  if (y0.size() == size()) t.y0 = y0.segment(start, length);
  return t;
}

HWPlant::HWPlant(HWSystem sys, VectorXd x0, std::uint64_t seed)
    : sys_(std::move(sys)), x_(std::move(x0)), rng_(seed) {
  sys_.validate();
  if (x_.size() != sys_.lin.state_dim()) throw std::invalid_argument("HWPlant: x0 has wrong dimension");
}

HWPlant::Sample HWPlant::step(double u) {
  const double ubar = sys_.psi(u);
  const double ybar0 = (sys_.lin.C * x_)(0) + sys_.lin.D(0, 0) * ubar;
  const double e = sys_.sigma > 0.0 ? sys_.sigma * noise_(rng_) : 0.0;
  x_ = sys_.lin.A * x_ + sys_.lin.B.col(0) * ubar;
  return {sys_.phi_inv(ybar0 + e), sys_.phi_inv(ybar0)};
}

Trajectory simulate_hw(const HWSystem& sys, const VectorXd& u, const VectorXd& x0, std::uint64_t seed) {
  if (u.size() == 0) throw std::invalid_argument("simulate_hw: empty input sequence");
  HWPlant plant(sys, x0, seed);
  Trajectory t;
  t.u = u;
  t.y.resize(u.size());
  t.y0.resize(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const auto s = plant.step(u(k));
    t.y(k) = s.y;
    t.y0(k) = s.y0;
  }
  return t;
}

}  // namespace hwgp
