#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "metacub/errors.hpp"
#include "metacub/rng.hpp"

namespace metacub {

enum class ModelKind { Ridge, Logistic, Mlp };
enum class OutputRange { Unbounded, Probability };

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "ridge" || s == "ridge-regression") return ModelKind::Ridge;
  if (s == "logistic" || s == "logistic-regression") return ModelKind::Logistic;
  if (s == "mlp") return ModelKind::Mlp;
  throw ConfigError("unknown model kind: " + std::string(s));
}

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Ridge: return "ridge";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

struct ModelOptions {
  double lambda = 1.0;          // ridge penalty and Gram prior for the confidence width
  double logistic_l2 = 1e-6;    // penalty on the mean log-loss
  double logistic_step = 1.0;
  int logistic_max_iter = 20000;
  double logistic_tol = 1e-9;
  int mlp_hidden = 32;
  double mlp_step = 1e-2;
  int mlp_epochs = 2000;
  double mlp_tol = 1e-7;
  bool mlp_adam = true;                 // false: plain full-batch gradient descent
  bool mlp_probability_output = false;  // sigmoid head + log-loss
  std::uint64_t seed = 0x5eed;
};

inline double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean log-loss with L2 penalty for a linear logit model; returns (loss, gradient).
inline std::pair<double, Eigen::VectorXd> logistic_objective(const Eigen::VectorXd& w,
                                                             const Eigen::MatrixXd& X,
                                                             const Eigen::VectorXd& y, double l2) {
  const auto n = static_cast<double>(X.rows());
  const Eigen::VectorXd z = X * w;
  double loss = 0.0;
  Eigen::VectorXd resid(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    // log(1+exp(z)) - y z, stable form
    const double zi = z(i);
    const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    loss += softplus - y(i) * zi;
    resid(i) = sigmoid(zi) - y(i);
  }
  loss = loss / n + 0.5 * l2 * w.squaredNorm();
  Eigen::VectorXd grad = X.transpose() * resid / n + l2 * w;
  return {loss, grad};
}

/// Single hidden layer of tanh units.
struct MlpParams {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;

  Eigen::Index size() const { return w1.size() + b1.size() + w2.size() + 1; }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(size());
    Eigen::Index o = 0;
    for (Eigen::Index j = 0; j < w1.cols(); ++j)
      for (Eigen::Index i = 0; i < w1.rows(); ++i) v(o++) = w1(i, j);
    for (Eigen::Index i = 0; i < b1.size(); ++i) v(o++) = b1(i);
    for (Eigen::Index i = 0; i < w2.size(); ++i) v(o++) = w2(i);
    v(o) = b2;
    return v;
  }

  void assign(const Eigen::VectorXd& v) {
    Eigen::Index o = 0;
    for (Eigen::Index j = 0; j < w1.cols(); ++j)
      for (Eigen::Index i = 0; i < w1.rows(); ++i) w1(i, j) = v(o++);
    for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = v(o++);
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2(i) = v(o++);
    b2 = v(o);
  }

  static MlpParams init(Eigen::Index inputs, Eigen::Index hidden, Rng& rng) {
    MlpParams p;
    p.w1.resize(hidden, inputs);
    p.b1 = Eigen::VectorXd::Zero(hidden);
    p.w2.resize(hidden);
    const double s1 = std::sqrt(1.0 / static_cast<double>(std::max<Eigen::Index>(inputs, 1)));
    const double s2 = std::sqrt(1.0 / static_cast<double>(hidden));
    for (Eigen::Index j = 0; j < inputs; ++j)
      for (Eigen::Index i = 0; i < hidden; ++i) p.w1(i, j) = s1 * rng.normal();
    for (Eigen::Index i = 0; i < hidden; ++i) {
      p.b1(i) = 0.1 * rng.normal();
      p.w2(i) = s2 * rng.normal();
    }
    return p;
  }

  double forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd h = (w1 * x + b1).array().tanh().matrix();
    return w2.dot(h) + b2;
  }
};

/// Mean loss over rows: squared error / 2 for regression, log-loss for a
/// probability head. Returns (loss, flattened gradient in MlpParams order).
inline std::pair<double, Eigen::VectorXd> mlp_objective(const MlpParams& p, const Eigen::MatrixXd& X,
                                                        const Eigen::VectorXd& y,
                                                        bool probability_output) {
  const auto n = static_cast<double>(X.rows());
  const Eigen::MatrixXd pre = (p.w1 * X.transpose()).colwise() + p.b1;  // hidden x n
  const Eigen::MatrixXd h = pre.array().tanh().matrix();
  const Eigen::VectorXd out = (h.transpose() * p.w2).array() + p.b2;
  Eigen::VectorXd delta(X.rows());  // dLoss/dOut per row
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (probability_output) {
      const double zi = out(i);
      const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
      loss += softplus - y(i) * zi;
      delta(i) = sigmoid(zi) - y(i);
    } else {
      const double e = out(i) - y(i);
      loss += 0.5 * e * e;
      delta(i) = e;
    }
  }
  loss /= n;
  delta /= n;

  MlpParams g;
  g.w2 = h * delta;
  g.b2 = delta.sum();
  const Eigen::MatrixXd dpre =
      ((p.w2 * delta.transpose()).array() * (1.0 - h.array().square())).matrix();  // hidden x n
  g.w1 = dpre * X;
  g.b1 = dpre.rowwise().sum();
  return {loss, g.flatten()};
}

/// Learned map from an action context vector to an expected outcome.
class OutcomeModel {
 public:
  OutcomeModel() = default;

  ModelKind kind() const noexcept { return kind_; }
  OutputRange output_range() const noexcept { return range_; }
  Eigen::Index dim() const noexcept { return dim_; }
  const Eigen::VectorXd& linear_weights() const noexcept { return weights_; }
  const Eigen::MatrixXd& gram_inverse() const noexcept { return gram_inv_; }
  const MlpParams& mlp() const noexcept { return mlp_; }

  /// Linear model with explicit state, for tests and hand-built oracles.
  static OutcomeModel linear(ModelKind kind, Eigen::VectorXd weights, Eigen::MatrixXd gram_inverse) {
    if (kind == ModelKind::Mlp) throw ParameterError("linear() requires a linear kind");
    OutcomeModel m;
    m.kind_ = kind;
    m.range_ = kind == ModelKind::Logistic ? OutputRange::Probability : OutputRange::Unbounded;
    m.dim_ = weights.size();
    m.weights_ = std::move(weights);
    m.gram_inv_ = std::move(gram_inverse);
    return m;
  }

  static OutcomeModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, ModelKind kind,
                          const ModelOptions& opt = {}) {
    if (X.rows() == 0) throw ParameterError("empty training set");
    if (X.rows() != y.size()) throw ParameterError("training rows and outcomes differ in length");
    if (!X.allFinite() || !y.allFinite()) throw FitError("non-finite training data");
    OutcomeModel m;
    m.kind_ = kind;
    m.dim_ = X.cols();
    switch (kind) {
      case ModelKind::Ridge:
        m.range_ = OutputRange::Unbounded;
        m.fit_ridge(X, y, opt);
        break;
      case ModelKind::Logistic:
        m.range_ = OutputRange::Probability;
        m.fit_logistic(X, y, opt);
        break;
      case ModelKind::Mlp:
        m.range_ = opt.mlp_probability_output ? OutputRange::Probability : OutputRange::Unbounded;
        m.fit_mlp(X, y, opt);
        break;
    }
    return m;
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != dim_) throw DomainError("context dimension does not match the model");
    switch (kind_) {
      case ModelKind::Ridge: return weights_.dot(x);
      case ModelKind::Logistic: return sigmoid(weights_.dot(x));
      case ModelKind::Mlp: {
        const double out = mlp_.forward(x);
        return range_ == OutputRange::Probability ? sigmoid(out) : out;
      }
    }
    return 0.0;
  }

  /// Confidence width u for UCB scoring. Linear kinds use the Mahalanobis
  /// norm under the regularized Gram inverse; the MLP uses a count bonus on
  /// the (group, resource) cell.
  double uncertainty(const Eigen::Ref<const Eigen::VectorXd>& x, long cell_count, int t) const {
    if (kind_ == ModelKind::Mlp) {
      const double tt = std::max(t, 1);
      return std::sqrt(2.0 * std::log(tt) / static_cast<double>(std::max(1L, cell_count)));
    }
    if (x.size() != dim_) throw DomainError("context dimension does not match the model");
    const double q = x.dot(gram_inv_ * x);
    return std::sqrt(std::max(q, 0.0));
  }

 private:
  static void check_factorization(const Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw FitError("degenerate design matrix");
    const auto d = ldlt.vectorD().cwiseAbs();
    if (!(d.minCoeff() > 1e-12 * d.maxCoeff()) || ldlt.rcond() < 1e-14) throw FitError("degenerate design matrix");
  }

  void set_gram(const Eigen::MatrixXd& X, double lambda) {
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    check_factorization(ldlt);
    gram_inv_ = ldlt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  }

  void fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ModelOptions& opt) {
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += opt.lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    check_factorization(ldlt);
    weights_ = ldlt.solve(X.transpose() * y);
    if (!weights_.allFinite()) throw FitError("ridge solution is not finite");
    gram_inv_ = ldlt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
  }

  void fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ModelOptions& opt) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) < 0.0 || y(i) > 1.0) throw ParameterError("logistic targets must lie in [0,1]");
    weights_ = Eigen::VectorXd::Zero(X.cols());
    // Step bounded by the log-loss Lipschitz constant 0.25 * ||X||^2 / n.
    const double lip = 0.25 * X.squaredNorm() / static_cast<double>(X.rows()) + opt.logistic_l2;
    const double step = opt.logistic_step / std::max(lip, 1e-12);
    for (int it = 0; it < opt.logistic_max_iter; ++it) {
      auto [loss, grad] = logistic_objective(weights_, X, y, opt.logistic_l2);
      (void)loss;
      if (grad.norm() < opt.logistic_tol) break;
      weights_ -= step * grad;
    }
    if (!weights_.allFinite()) throw FitError("logistic fit diverged");
    set_gram(X, opt.lambda);
  }

  void fit_mlp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ModelOptions& opt) {
    Rng rng(opt.seed);
    mlp_ = MlpParams::init(X.cols(), opt.mlp_hidden, rng);
    Eigen::VectorXd theta = mlp_.flatten();
    // Adam moments; fixed base step.
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double prev = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= opt.mlp_epochs; ++epoch) {
      mlp_.assign(theta);
      auto [loss, grad] = mlp_objective(mlp_, X, y, opt.mlp_probability_output);
      if (!std::isfinite(loss)) throw FitError("mlp training diverged");
      if (std::fabs(prev - loss) < opt.mlp_tol) break;
      prev = loss;
      if (!opt.mlp_adam) {
        theta -= opt.mlp_step * grad;
        continue;
      }
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(b1, epoch);
      const double c2 = 1.0 - std::pow(b2, epoch);
      theta.array() -= opt.mlp_step * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    mlp_.assign(theta);
  }

  ModelKind kind_ = ModelKind::Ridge;
  OutputRange range_ = OutputRange::Unbounded;
  Eigen::Index dim_ = 0;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd gram_inv_;
  MlpParams mlp_;
};

}  // namespace metacub
