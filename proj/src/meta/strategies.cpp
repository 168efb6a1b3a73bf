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

#include "meta/strategies.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "meta/checkpoint.hpp"

namespace metastress::meta {

void MamlState::validate() const {
  if (!(inner_lr > 0.0)) fail(ErrorKind::Config, "maml: inner_lr must be > 0");
  if (!(outer_lr > 0.0)) fail(ErrorKind::Config, "maml: outer_lr must be > 0");
  if (inner_steps < 1) fail(ErrorKind::Config, "maml: inner_steps must be >= 1");
}

void MetaSgdState::validate() const {
  if (!(outer_lr > 0.0)) fail(ErrorKind::Config, "metasgd: outer_lr must be > 0");
  if (theta.layout->total() != alpha.layout->total()) {
    fail(ErrorKind::Config, "metasgd: theta and alpha layouts differ");
  }
}

void TamlConfig::validate() const {
  if (lambda < 0.0) fail(ErrorKind::Config, "taml: lambda must be >= 0");
  base.validate();
}

void sort_contributions(std::vector<TaskGrad>& grads) {
  std::stable_sort(grads.begin(), grads.end(),
                   [](const TaskGrad& a, const TaskGrad& b) {
                     return a.index < b.index;
                   });
}

namespace {

void require_batch(const std::vector<TaskLoss>& batch, const char* who) {
  if (batch.empty()) {
    fail(ErrorKind::Value, std::string(who) + ": batch must be non-empty");
  }
}

std::vector<double> flatten_grads(const diff::GradMap& g,
                                  const std::vector<diff::NodePtr>& wrt) {
  std::vector<double> flat;
  for (const diff::NodePtr& n : wrt) {
    const diff::Tensor& t = g.at(n)->value();
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  return flat;
}

std::vector<TaskGrad> maml_task_grads(const MamlState& state,
                                      const std::vector<TaskLoss>& batch,
                                      int workers) {
  std::vector<TaskGrad> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    learner::ParamNodes theta = learner::ParamNodes::leaves(state.theta, true);
    AdaptResult ar = inner_adapt(theta, batch[i], state.inner_lr,
                                 state.inner_steps, !state.first_order);
    diff::NodePtr q = batch[i].query_loss(ar.final_params());
    diff::GradMap g = diff::grad(q, theta.nodes, false);
    grads[i] = TaskGrad{batch[i].index, q->value().scalar_value(),
                        flatten_grads(g, theta.nodes)};
  });
  sort_contributions(grads);
  return grads;
}

std::vector<double> reduce_sum(const std::vector<TaskGrad>& grads) {
  std::vector<double> total = grads.front().grad;
  for (std::size_t k = 1; k < grads.size(); ++k) {
    for (std::size_t i = 0; i < total.size(); ++i) {
      total[i] += grads[k].grad[i];
    }
  }
  return total;
}

void export_losses(const std::vector<TaskGrad>& grads,
                   std::vector<double>* query_losses) {
  if (!query_losses) return;
  query_losses->clear();
  for (const TaskGrad& g : grads) query_losses->push_back(g.query_loss);
}

}  // namespace

std::vector<double> maml_meta_gradient(const MamlState& state,
                                       const std::vector<TaskLoss>& batch,
                                       int workers,
                                       std::vector<double>* query_losses) {
  require_batch(batch, "maml_meta_step");
  std::vector<TaskGrad> grads = maml_task_grads(state, batch, workers);
  export_losses(grads, query_losses);
  return reduce_sum(grads);
}

void maml_meta_step(MamlState& state, const std::vector<TaskLoss>& batch,
                    MetaOptimizer& opt, int workers) {
  std::vector<double> g = maml_meta_gradient(state, batch, workers);
  opt.step(state.theta.data, g);
}

std::vector<double> metasgd_meta_gradient(const MetaSgdState& state,
                                          const std::vector<TaskLoss>& batch,
                                          int workers,
                                          std::vector<double>* query_losses) {
  require_batch(batch, "metasgd_meta_step");
  std::vector<TaskGrad> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    learner::ParamNodes theta = learner::ParamNodes::leaves(state.theta, true);
    learner::ParamNodes alpha = learner::ParamNodes::leaves(state.alpha, true);
    // one adaptation step with elementwise rates, by contract
    AdaptResult ar = inner_adapt(theta, batch[i], alpha, 1, true);
    diff::NodePtr q = batch[i].query_loss(ar.final_params());
    std::vector<diff::NodePtr> wrt = theta.nodes;
    wrt.insert(wrt.end(), alpha.nodes.begin(), alpha.nodes.end());
    diff::GradMap g = diff::grad(q, wrt, false);
    grads[i] = TaskGrad{batch[i].index, q->value().scalar_value(),
                        flatten_grads(g, wrt)};
  });
  sort_contributions(grads);
  export_losses(grads, query_losses);
  return reduce_sum(grads);
}

void metasgd_meta_step(MetaSgdState& state, const std::vector<TaskLoss>& batch,
                       MetaOptimizer& opt, int workers) {
  std::vector<double> g = metasgd_meta_gradient(state, batch, workers);
  std::size_t p = state.theta.size();
  std::vector<double> joint = state.theta.data;
  joint.insert(joint.end(), state.alpha.data.begin(), state.alpha.data.end());
  opt.step(joint, g);
  std::copy(joint.begin(), joint.begin() + static_cast<std::ptrdiff_t>(p),
            state.theta.data.begin());
  std::copy(joint.begin() + static_cast<std::ptrdiff_t>(p), joint.end(),
            state.alpha.data.begin());
}

double theil_index(const std::vector<double>& losses) {
  if (losses.empty()) fail(ErrorKind::Value, "theil_index: empty batch");
  double mean = 0.0;
  for (double l : losses) {
    if (!(l > 0.0)) {
      fail(ErrorKind::Value,
           "theil_index: losses must be positive, got " + std::to_string(l));
    }
    mean += l;
  }
  mean /= static_cast<double>(losses.size());
  double t = 0.0;
  for (double l : losses) {
    double r = l / mean;
    t += r * std::log(r);
  }
  return t / static_cast<double>(losses.size());
}

std::vector<double> taml_meta_gradient(const TamlConfig& cfg,
                                       const std::vector<TaskLoss>& batch,
                                       int workers,
                                       std::vector<double>* query_losses) {
  require_batch(batch, "taml_meta_step");
  if (cfg.lambda == 0.0) {
    // bitwise identical to the plain MAML path
    return maml_meta_gradient(cfg.base, batch, workers, query_losses);
  }
  std::vector<TaskGrad> grads = maml_task_grads(cfg.base, batch, workers);
  export_losses(grads, query_losses);

  std::vector<double> losses;
  losses.reserve(grads.size());
  for (const TaskGrad& g : grads) losses.push_back(g.query_loss);
  double theil = theil_index(losses);  // rejects non-positive losses
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(losses.size());

  // d/dL_k of [sum_i L_i + lambda*B*theil(L)] = 1 + lambda*(ln(L_k/Lbar) - T)/Lbar;
  // scaling each task gradient by that weight is the exact chain rule
  std::vector<double> total(grads.front().grad.size(), 0.0);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    double w = 1.0 + cfg.lambda * (std::log(losses[k] / mean) - theil) / mean;
    for (std::size_t i = 0; i < total.size(); ++i) {
      total[i] += w * grads[k].grad[i];
    }
  }
  return total;
}

void taml_meta_step(TamlConfig& cfg, const std::vector<TaskLoss>& batch,
                    MetaOptimizer& opt, int workers) {
  std::vector<double> g = taml_meta_gradient(cfg, batch, workers);
  opt.step(cfg.base.theta.data, g);
}

learner::ParamVector adapt_sgd(const learner::ParamVector& theta0,
                               const TaskLoss& task, double lr, int steps) {
  if (steps == 0) return theta0;
  learner::ParamNodes theta = learner::ParamNodes::leaves(theta0, true);
  return inner_adapt(theta, task, lr, steps, false).final_params().values();
}

learner::ParamVector adapt_sgd_vec(const learner::ParamVector& theta0,
                                   const learner::ParamVector& alpha,
                                   const TaskLoss& task, int steps) {
  if (steps == 0) return theta0;
  learner::ParamNodes theta = learner::ParamNodes::leaves(theta0, true);
  learner::ParamNodes rates = learner::ParamNodes::leaves(alpha, false);
  return inner_adapt(theta, task, rates, 1, false).final_params().values();
}

learner::ParamVector adapt_adam(const learner::ParamVector& theta0,
                                const TaskLoss& task, double lr, int steps) {
  learner::ParamVector theta = theta0;
  AdamRule adam(lr, theta.size());
  for (int t = 0; t < steps; ++t) {
    learner::ParamNodes nodes = learner::ParamNodes::leaves(theta, true);
    diff::NodePtr loss = task.support_loss(nodes);
    diff::GradMap g = diff::grad(loss, nodes.nodes, false);
    std::vector<double> flat = flatten_grads(g, nodes.nodes);
    adam.step(theta.data, flat);
  }
  return theta;
}

// ---- Strategy wrappers -----------------------------------------------------

MamlStrategy::MamlStrategy(MamlState state, MetaOptKind opt_kind)
    : state_(std::move(state)),
      opt_(opt_kind, state_.outer_lr, state_.theta.size()) {
  state_.validate();
}

void MamlStrategy::meta_step(const std::vector<TaskLoss>& batch, int workers) {
  maml_meta_step(state_, batch, opt_, workers);
}

learner::ParamVector MamlStrategy::adapt(const TaskLoss& task,
                                         int steps) const {
  return adapt_sgd(state_.theta, task, state_.inner_lr,
                   steps < 0 ? state_.inner_steps : steps);
}

nlohmann::json MamlStrategy::state_to_json() const {
  nlohmann::json j;
  j["strategy"] = name();
  j["theta"] = param_vector_to_json(state_.theta);
  j["inner_lr"] = state_.inner_lr;
  j["inner_steps"] = state_.inner_steps;
  j["outer_lr"] = state_.outer_lr;
  j["first_order"] = state_.first_order;
  j["opt"] = opt_.to_json();
  return j;
}

void MamlStrategy::state_from_json(const nlohmann::json& j) {
  state_.theta = param_vector_from_json(j.at("theta"));
  state_.inner_lr = j.at("inner_lr").get<double>();
  state_.inner_steps = j.at("inner_steps").get<int>();
  state_.outer_lr = j.at("outer_lr").get<double>();
  state_.first_order = j.at("first_order").get<bool>();
  opt_ = MetaOptimizer::from_json(j.at("opt"));
}

MetaSgdStrategy::MetaSgdStrategy(MetaSgdState state, MetaOptKind opt_kind)
    : state_(std::move(state)),
      opt_(opt_kind, state_.outer_lr,
           state_.theta.size() + state_.alpha.size()) {
  state_.validate();
}

void MetaSgdStrategy::meta_step(const std::vector<TaskLoss>& batch,
                                int workers) {
  metasgd_meta_step(state_, batch, opt_, workers);
}

learner::ParamVector MetaSgdStrategy::adapt(const TaskLoss& task,
                                            int steps) const {
  if (steps == 0) return state_.theta;
  return adapt_sgd_vec(state_.theta, state_.alpha, task, 1);
}

nlohmann::json MetaSgdStrategy::state_to_json() const {
  nlohmann::json j;
  j["strategy"] = name();
  j["theta"] = param_vector_to_json(state_.theta);
  j["alpha"] = param_vector_to_json(state_.alpha);
  j["outer_lr"] = state_.outer_lr;
  j["opt"] = opt_.to_json();
  return j;
}

void MetaSgdStrategy::state_from_json(const nlohmann::json& j) {
  state_.theta = param_vector_from_json(j.at("theta"));
  state_.alpha = param_vector_from_json(j.at("alpha"));
  state_.outer_lr = j.at("outer_lr").get<double>();
  opt_ = MetaOptimizer::from_json(j.at("opt"));
}

TamlStrategy::TamlStrategy(TamlConfig cfg, MetaOptKind opt_kind)
    : cfg_(std::move(cfg)),
      opt_(opt_kind, cfg_.base.outer_lr, cfg_.base.theta.size()) {
  cfg_.validate();
}

void TamlStrategy::meta_step(const std::vector<TaskLoss>& batch, int workers) {
  taml_meta_step(cfg_, batch, opt_, workers);
}

learner::ParamVector TamlStrategy::adapt(const TaskLoss& task,
                                         int steps) const {
  return adapt_sgd(cfg_.base.theta, task, cfg_.base.inner_lr,
                   steps < 0 ? cfg_.base.inner_steps : steps);
}

nlohmann::json TamlStrategy::state_to_json() const {
  nlohmann::json j;
  j["strategy"] = name();
  j["lambda"] = cfg_.lambda;
  j["theta"] = param_vector_to_json(cfg_.base.theta);
  j["inner_lr"] = cfg_.base.inner_lr;
  j["inner_steps"] = cfg_.base.inner_steps;
  j["outer_lr"] = cfg_.base.outer_lr;
  j["first_order"] = cfg_.base.first_order;
  j["opt"] = opt_.to_json();
  return j;
}

void TamlStrategy::state_from_json(const nlohmann::json& j) {
  cfg_.lambda = j.at("lambda").get<double>();
  cfg_.base.theta = param_vector_from_json(j.at("theta"));
  cfg_.base.inner_lr = j.at("inner_lr").get<double>();
  cfg_.base.inner_steps = j.at("inner_steps").get<int>();
  cfg_.base.outer_lr = j.at("outer_lr").get<double>();
  cfg_.base.first_order = j.at("first_order").get<bool>();
  opt_ = MetaOptimizer::from_json(j.at("opt"));
}

}  // namespace metastress::meta
