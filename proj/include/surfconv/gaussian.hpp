#pragma once

// Gaussian test functions a exp(-(x-m)^T S^{-1} (x-m) / 2) with closed-form
// integrals, L^p norms and Fourier transforms (unitary-frequency convention
// f^(xi) = integral f(x) exp(-2 pi i <x, xi>) dx).

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "surfconv/rng.hpp"

namespace surfconv {

class GaussianSpec {
 public:
  GaussianSpec(double amplitude, Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : amplitude_(amplitude), mean_(std::move(mean)), cov_(std::move(covariance)) {
    if (mean_.size() != cov_.rows() || cov_.rows() != cov_.cols())
      throw std::invalid_argument("GaussianSpec: inconsistent dimensions");
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("GaussianSpec: covariance not positive definite");
    chol_ = llt.matrixL();
    precision_ = llt.solve(Eigen::MatrixXd::Identity(cov_.rows(), cov_.cols()));
    det_cov_ = cov_.determinant();
  }

  /// Axis-aligned Gaussian with per-axis standard deviations.
  static GaussianSpec diagonal(double amplitude, std::vector<double> mean, const std::vector<double>& sigma) {
    if (mean.size() != sigma.size()) throw std::invalid_argument("GaussianSpec: mean/sigma size mismatch");
    Eigen::VectorXd m = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    Eigen::VectorXd s2(static_cast<Eigen::Index>(sigma.size()));
    for (std::size_t i = 0; i < sigma.size(); ++i) s2[static_cast<Eigen::Index>(i)] = sigma[i] * sigma[i];
    return {amplitude, m, s2.asDiagonal()};
  }

  /// Probability density of N(0, sigma^2 I_n).
  static GaussianSpec standard(std::size_t n, double sigma = 1.0) {
    const double a = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.5 * static_cast<double>(n));
    return diagonal(a, std::vector<double>(n, 0.0), std::vector<double>(n, sigma));
  }

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  double amplitude() const { return amplitude_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::MatrixXd& precision() const { return precision_; }

  double operator()(std::span<const double> x) const {
    const Eigen::Index n = mean_.size();
    double q = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double di = x[static_cast<std::size_t>(i)] - mean_[i];
      double row = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) row += precision_(i, j) * (x[static_cast<std::size_t>(j)] - mean_[j]);
      q += di * row;
    }
    return amplitude_ * std::exp(-0.5 * q);
  }

  double integral() const {
    return amplitude_ * std::sqrt(std::pow(2.0 * std::numbers::pi, static_cast<double>(dim())) * det_cov_);
  }

  /// ||f||_p = (a^p (2 pi / p)^{n/2} det(S)^{1/2})^{1/p}
  double lp_norm(double p) const {
    if (!(p > 0)) throw std::invalid_argument("lp_norm: p must be positive");
    const double n = static_cast<double>(dim());
    return amplitude_ * std::pow(std::pow(2.0 * std::numbers::pi / p, 0.5 * n) * std::sqrt(det_cov_), 1.0 / p);
  }

  std::complex<double> fourier(std::span<const double> xi) const {
    const Eigen::Map<const Eigen::VectorXd> v(xi.data(), static_cast<Eigen::Index>(xi.size()));
    const double quad = v.dot(cov_ * v);
    const double phase = -2.0 * std::numbers::pi * v.dot(mean_);
    return integral() * std::exp(-2.0 * std::numbers::pi * std::numbers::pi * quad) *
           std::complex<double>(std::cos(phase), std::sin(phase));
  }

  /// |f^|^2 as a centered Gaussian: I^2 exp(-4 pi^2 xi^T S xi), covariance (8 pi^2 S)^{-1}.
  GaussianSpec fourier_modulus_squared() const {
    const double I = integral();
    const Eigen::MatrixXd c = (8.0 * std::numbers::pi * std::numbers::pi * cov_).inverse();
    return {I * I, Eigen::VectorXd::Zero(mean_.size()), c};
  }

  /// x -> t^{-n/2} f(x / t), an L^2 isometry.
  GaussianSpec dilated(double t) const {
    return {amplitude_ * std::pow(t, -0.5 * static_cast<double>(dim())), t * mean_, t * t * cov_};
  }

  /// Sample from the normalized density f / ||f||_1.
  std::vector<double> sample(Rng& rng) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = mean_ + chol_ * z;
    return {x.data(), x.data() + x.size()};
  }

  /// Largest standard deviation along any axis direction.
  double max_sigma() const { return std::sqrt(cov_.diagonal().maxCoeff()); }

  /// Radius around the origin outside which the density is below exp(-tail^2/2) of its peak.
  double support_radius(double tail = 8.0) const {
    const double smax = std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov_).eigenvalues().maxCoeff());
    return mean_.norm() + tail * smax;
  }

  nlohmann::json to_json() const {
    std::vector<double> m(mean_.data(), mean_.data() + mean_.size());
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index i = 0; i < cov_.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < cov_.cols(); ++j) row.push_back(cov_(i, j));
      cov.push_back(row);
    }
    return {{"kind", "gaussian"}, {"amplitude", amplitude_}, {"mean", m}, {"covariance", cov}};
  }

  static GaussianSpec from_json(const nlohmann::json& j) {
    const auto m = j.at("mean").get<std::vector<double>>();
    if (j.contains("sigma")) return diagonal(j.value("amplitude", 1.0), m, j.at("sigma").get<std::vector<double>>());
    const auto rows = j.at("covariance").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) throw std::invalid_argument("covariance must be square");
      for (std::size_t k = 0; k < rows.size(); ++k)
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    Eigen::VectorXd mv = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    return {j.value("amplitude", 1.0), mv, c};
  }

 private:
  double amplitude_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  Eigen::MatrixXd precision_;
  double det_cov_ = 1.0;
};

/// Closed form of  integral_{R^k} f(x) h(L x) dx  for Gaussians f on R^k, h on R^l
/// and an l x k matrix L.
inline double gaussian_pairing(const GaussianSpec& f, const GaussianSpec& h, const Eigen::MatrixXd& L) {
  const Eigen::MatrixXd& A = f.precision();
  const Eigen::MatrixXd& B = h.precision();
  const Eigen::MatrixXd H = A + L.transpose() * B * L;
  const Eigen::VectorXd b = A * f.mean() + L.transpose() * (B * h.mean());
  const double c = 0.5 * f.mean().dot(A * f.mean()) + 0.5 * h.mean().dot(B * h.mean());
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  const double k = static_cast<double>(f.dim());
  return f.amplitude() * h.amplitude() * std::pow(2.0 * std::numbers::pi, 0.5 * k) /
         std::sqrt(H.determinant()) * std::exp(0.5 * b.dot(llt.solve(b)) - c);
}

}  // namespace surfconv
