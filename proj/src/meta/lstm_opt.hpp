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

#include "meta/strategies.hpp"

namespace metastress::meta {

// Gradient/loss preprocessing for the learned optimizer's inputs:
// |v| >= e^-p  ->  (ln|v|/p, sign v)   otherwise  ->  (-1, e^p * v)
std::pair<double, double> preprocess(double v, double p = 10.0);

struct LstmOptConfig {
  std::size_t hidden = 20;      // H, per LSTM layer
  double preprocess_p = 10.0;
  bool second_order = false;    // keep grad inputs in the meta-graph
};

// Coordinate-wise parametric optimizer: one shared two-layer LSTM (phi)
// applied per base-model coordinate; the optimizer's cell state IS the base
// model's theta. phi also carries the trainable initial cell (the learned
// initialization) and initial hidden states.
struct LstmOptState {
  LstmOptConfig config;
  learner::LayoutPtr base_layout;
  learner::ParamVector phi;

  std::size_t coord_count() const { return base_layout->total(); }
  learner::ParamVector initial_theta() const;      // phi's init_theta entry
  void set_initial_theta(const learner::ParamVector& theta);
};

LstmOptState init_lstm_opt(learner::LayoutPtr base_layout,
                           const learner::ParamVector& theta0,
                           const LstmOptConfig& config, std::uint64_t seed);

// One adaptation run: per-coordinate recurrent state plus the evolving cell.
// Graph-ready; with train_phi the whole trajectory is differentiable wrt phi.
class LstmRun {
public:
  LstmRun(const LstmOptState& state, bool train_phi);

  learner::ParamNodes theta_params() const;        // for the base forward
  const diff::NodePtr& theta_flat() const { return theta_; }
  const std::vector<diff::NodePtr>& phi_leaves() const {
    return phi_nodes_.nodes;
  }

  // Advance one step: gates from [h2, theta, prev gates], then
  // c_t = f_t * c_{t-1} - i_t * grad. live_grad keeps the gradient input in
  // the graph (second-order mode); the preprocessed features always use the
  // raw values.
  void step(double loss_value, const diff::NodePtr& grad_flat, bool live_grad);

  learner::ParamVector theta_values() const { return theta_params().values(); }

private:
  const LstmOptState* state_;
  learner::ParamNodes phi_nodes_;
  diff::NodePtr theta_;                      // [P]
  diff::NodePtr h1_, c1_, h2_, c2_;          // [P,H]
  diff::NodePtr f_prev_, i_prev_;            // [P,1]
};

// phi gradient from one task's query loss after inner_steps of adaptation
std::vector<double> metalstm_task_phi_grad(const LstmOptState& state,
                                           const TaskLoss& task,
                                           int inner_steps,
                                           double* query_loss = nullptr);

// sequential variant: one task per phi update
void metalstm_meta_step(LstmOptState& state, const TaskLoss& task,
                        int inner_steps, MetaOptimizer& opt);

// batched variant: phi updated once from the average query loss of the batch
void metalstmpp_meta_step(LstmOptState& state,
                          const std::vector<TaskLoss>& batch, int inner_steps,
                          MetaOptimizer& opt, int workers);
std::vector<double> metalstmpp_meta_gradient(const LstmOptState& state,
                                             const std::vector<TaskLoss>& batch,
                                             int inner_steps, int workers);

// value-level adaptation with a (possibly overridden) starting cell
learner::ParamVector adapt_lstm(const LstmOptState& state, const TaskLoss& task,
                                int steps);
learner::ParamVector adapt_lstm_from(const LstmOptState& state,
                                     const learner::ParamVector& theta0,
                                     const TaskLoss& task, int steps);

class MetaLstmStrategy : public Strategy {
public:
  MetaLstmStrategy(LstmOptState state, int inner_steps, double meta_lr,
                   MetaOptKind opt_kind);
  const char* name() const override { return "metalstm"; }
  void meta_step(const std::vector<TaskLoss>& batch, int workers) override;
  learner::ParamVector adapt(const TaskLoss& task, int steps) const override;
  int default_eval_steps() const override { return inner_steps_; }
  const learner::ParamVector& initialization() const override;
  const LstmOptState* lstm_state() const override { return &state_; }
  nlohmann::json state_to_json() const override;
  void state_from_json(const nlohmann::json& j) override;
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<MetaLstmStrategy>(*this);
  }

private:
  LstmOptState state_;
  int inner_steps_;
  MetaOptimizer opt_;
  mutable learner::ParamVector init_cache_;
};

class MetaLstmPpStrategy : public Strategy {
public:
  MetaLstmPpStrategy(LstmOptState state, int inner_steps, double meta_lr,
                     MetaOptKind opt_kind);
  const char* name() const override { return "metalstmpp"; }
  void meta_step(const std::vector<TaskLoss>& batch, int workers) override;
  learner::ParamVector adapt(const TaskLoss& task, int steps) const override;
  int default_eval_steps() const override { return inner_steps_; }
  const learner::ParamVector& initialization() const override;
  const LstmOptState* lstm_state() const override { return &state_; }
  nlohmann::json state_to_json() const override;
  void state_from_json(const nlohmann::json& j) override;
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<MetaLstmPpStrategy>(*this);
  }

private:
  LstmOptState state_;
  int inner_steps_;
  MetaOptimizer opt_;
  mutable learner::ParamVector init_cache_;
};

}  // namespace metastress::meta
