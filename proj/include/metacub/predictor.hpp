#pragma once

#include <Eigen/Dense>

#include <vector>

#include "metacub/data_io.hpp"
#include "metacub/outcome_model.hpp"

namespace metacub {

/// One observed (context, resource, outcome) triple.
struct Observation {
  Eigen::VectorXd context;
  ResourceId resource = 0;
  double outcome = 0.0;
};

/// The outcome model f together with the action featurizer and the offline
/// training rows it was fitted on, so it can be refit with online feedback.
class RewardPredictor {
 public:
  RewardPredictor() = default;

  static RewardPredictor fit(ActionFeaturizer featurizer, const std::vector<Observation>& rows, ModelKind kind,
                             ModelOptions options = {}) {
    RewardPredictor p;
    p.featurizer_ = featurizer;
    p.kind_ = kind;
    p.options_ = options;
    p.X_.resize(static_cast<Eigen::Index>(rows.size()), featurizer.dim());
    p.y_.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      p.X_.row(static_cast<Eigen::Index>(i)) = featurizer.action(rows[i].context, rows[i].resource).transpose();
      p.y_(static_cast<Eigen::Index>(i)) = rows[i].outcome;
    }
    p.model_ = OutcomeModel::fit(p.X_, p.y_, kind, options);
    return p;
  }

  const ActionFeaturizer& featurizer() const noexcept { return featurizer_; }
  const OutcomeModel& model() const noexcept { return model_; }
  ModelKind kind() const noexcept { return kind_; }

  double predict(const Eigen::VectorXd& x, ResourceId r) const { return model_.predict(featurizer_.action(x, r)); }

  double uncertainty(const Eigen::VectorXd& x, ResourceId r, long cell_count, int t) const {
    return model_.uncertainty(featurizer_.action(x, r), cell_count, t);
  }

  /// New model from the offline rows plus `extra`; the offline rows are kept.
  void refit(const std::vector<Observation>& extra) {
    if (extra.empty()) return;
    Eigen::MatrixXd X(X_.rows() + static_cast<Eigen::Index>(extra.size()), X_.cols());
    Eigen::VectorXd y(X.rows());
    X.topRows(X_.rows()) = X_;
    y.head(y_.size()) = y_;
    for (std::size_t i = 0; i < extra.size(); ++i) {
      const auto row = X_.rows() + static_cast<Eigen::Index>(i);
      X.row(row) = featurizer_.action(extra[i].context, extra[i].resource).transpose();
      double v = extra[i].outcome;
      if (model_.output_range() == OutputRange::Probability) v = std::clamp(v, 0.0, 1.0);
      y(row) = v;
    }
    model_ = OutcomeModel::fit(X, y, kind_, options_);
  }

 private:
  ActionFeaturizer featurizer_;
  ModelKind kind_ = ModelKind::Ridge;
  ModelOptions options_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  OutcomeModel model_;
};

}  // namespace metacub
