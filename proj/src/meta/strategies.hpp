/*
 * Copyright 2026 The metastress authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <memory>

#include "meta/adapt.hpp"
#include "meta/optim.hpp"

namespace metastress::meta {

// ---- states ---------------------------------------------------------------

struct MamlState {
  learner::ParamVector theta;  // theta*, the task-agnostic initialization
  double inner_lr = 0.0;       // alpha
  int inner_steps = 1;
  double outer_lr = 0.0;       // beta
  bool first_order = false;

  void validate() const;
};

struct MetaSgdState {
  learner::ParamVector theta;  // theta*
  learner::ParamVector alpha;  // per-parameter learning rates, same layout
  double outer_lr = 0.0;

  void validate() const;
};

struct TamlConfig {
  double lambda = 0.0;
  MamlState base;

  void validate() const;
};

// ---- per-task meta-gradient contributions ----------------------------------

struct TaskGrad {
  std::uint64_t index = 0;
  double query_loss = 0.0;
  std::vector<double> grad;
};

// Contributions are sorted by task index and reduced left-to-right, so the
// outer update is independent of worker scheduling and batch order.
void sort_contributions(std::vector<TaskGrad>& grads);

// ---- operations -------------------------------------------------------------

// d/d theta* of sum_i L_test_i(theta_i); exact second order unless
// state.first_order
std::vector<double> maml_meta_gradient(const MamlState& state,
                                       const std::vector<TaskLoss>& batch,
                                       int workers,
                                       std::vector<double>* query_losses = nullptr);
void maml_meta_step(MamlState& state, const std::vector<TaskLoss>& batch,
                    MetaOptimizer& opt, int workers);

// joint gradient wrt (theta*, alpha); adaptation is exactly one step
std::vector<double> metasgd_meta_gradient(const MetaSgdState& state,
                                          const std::vector<TaskLoss>& batch,
                                          int workers,
                                          std::vector<double>* query_losses = nullptr);
void metasgd_meta_step(MetaSgdState& state, const std::vector<TaskLoss>& batch,
                       MetaOptimizer& opt, int workers);

// (1/B) sum_i (L_i / Lbar) ln(L_i / Lbar); zero iff all equal
double theil_index(const std::vector<double>& losses);

// gradient of sum_i L_i + lambda * B * theil(L); lambda == 0 reduces to the
// MAML path bitwise
std::vector<double> taml_meta_gradient(const TamlConfig& cfg,
                                       const std::vector<TaskLoss>& batch,
                                       int workers,
                                       std::vector<double>* query_losses = nullptr);
void taml_meta_step(TamlConfig& cfg, const std::vector<TaskLoss>& batch,
                    MetaOptimizer& opt, int workers);

// value-level task adaptation (no meta-gradients); steps == 0 returns theta0
learner::ParamVector adapt_sgd(const learner::ParamVector& theta0,
                               const TaskLoss& task, double lr, int steps);
learner::ParamVector adapt_sgd_vec(const learner::ParamVector& theta0,
                                   const learner::ParamVector& alpha,
                                   const TaskLoss& task, int steps);
learner::ParamVector adapt_adam(const learner::ParamVector& theta0,
                                const TaskLoss& task, double lr, int steps);

// ---- polymorphic wrapper for the harness -----------------------------------

struct LstmOptState;  // lstm_opt.hpp

class Strategy {
public:
  virtual ~Strategy() = default;
  virtual const char* name() const = 0;
  virtual void meta_step(const std::vector<TaskLoss>& batch, int workers) = 0;
  // steps < 0 selects the strategy's own default
  virtual learner::ParamVector adapt(const TaskLoss& task, int steps) const = 0;
  virtual int default_eval_steps() const = 0;
  // the learned initialization (theta* or the optimizer's initial cell)
  virtual const learner::ParamVector& initialization() const = 0;
  virtual const LstmOptState* lstm_state() const { return nullptr; }
  virtual nlohmann::json state_to_json() const = 0;
  virtual void state_from_json(const nlohmann::json& j) = 0;
  virtual std::unique_ptr<Strategy> clone() const = 0;
};

class MamlStrategy : public Strategy {
public:
  MamlStrategy(MamlState state, MetaOptKind opt_kind);
  const char* name() const override { return "maml"; }
  void meta_step(const std::vector<TaskLoss>& batch, int workers) override;
  learner::ParamVector adapt(const TaskLoss& task, int steps) const override;
  int default_eval_steps() const override { return state_.inner_steps; }
  const learner::ParamVector& initialization() const override {
    return state_.theta;
  }
  nlohmann::json state_to_json() const override;
  void state_from_json(const nlohmann::json& j) override;
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<MamlStrategy>(*this);
  }
  const MamlState& state() const { return state_; }

private:
  MamlState state_;
  MetaOptimizer opt_;
};

class MetaSgdStrategy : public Strategy {
public:
  MetaSgdStrategy(MetaSgdState state, MetaOptKind opt_kind);
  const char* name() const override { return "metasgd"; }
  void meta_step(const std::vector<TaskLoss>& batch, int workers) override;
  // a single adaptation step is sufficient: steps other than 0 use one step
  learner::ParamVector adapt(const TaskLoss& task, int steps) const override;
  int default_eval_steps() const override { return 1; }
  const learner::ParamVector& initialization() const override {
    return state_.theta;
  }
  nlohmann::json state_to_json() const override;
  void state_from_json(const nlohmann::json& j) override;
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<MetaSgdStrategy>(*this);
  }
  const MetaSgdState& state() const { return state_; }

private:
  MetaSgdState state_;
  MetaOptimizer opt_;
};

class TamlStrategy : public Strategy {
public:
  TamlStrategy(TamlConfig cfg, MetaOptKind opt_kind);
  const char* name() const override { return "taml"; }
  void meta_step(const std::vector<TaskLoss>& batch, int workers) override;
  learner::ParamVector adapt(const TaskLoss& task, int steps) const override;
  int default_eval_steps() const override { return cfg_.base.inner_steps; }
  const learner::ParamVector& initialization() const override {
    return cfg_.base.theta;
  }
  nlohmann::json state_to_json() const override;
  void state_from_json(const nlohmann::json& j) override;
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<TamlStrategy>(*this);
  }
  const TamlConfig& config() const { return cfg_; }

private:
  TamlConfig cfg_;
  MetaOptimizer opt_;
};

}  // namespace metastress::meta
