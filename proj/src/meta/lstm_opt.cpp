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

#include "meta/lstm_opt.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "meta/checkpoint.hpp"

namespace metastress::meta {

namespace d = metastress::diff;

std::pair<double, double> preprocess(double v, double p) {
  if (!(p > 0.0)) fail(ErrorKind::Value, "preprocess: p must be > 0");
  double cutoff = std::exp(-p);
  if (std::abs(v) >= cutoff) {
    double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return {std::log(std::abs(v)) / p, sign};
  }
  return {-1.0, std::exp(p) * v};
}

namespace {

const char* kGates[] = {"i", "f", "g", "o"};

std::vector<std::pair<std::string, d::Shape>> phi_entries(std::size_t hidden,
                                                          std::size_t coords) {
  std::vector<std::pair<std::string, d::Shape>> e;
  std::size_t in = 4;  // [preprocess(grad), preprocess(loss)]
  for (const char* layer : {"l1", "l2"}) {
    for (const char* g : kGates) {
      e.push_back({std::string(layer) + "_wx" + g, {in, hidden}});
      e.push_back({std::string(layer) + "_wh" + g, {hidden, hidden}});
      e.push_back({std::string(layer) + "_b" + g, {hidden}});
    }
    in = hidden;
  }
  e.push_back({"head_wf", {hidden + 3, 1}});
  e.push_back({"head_wi", {hidden + 3, 1}});
  e.push_back({"head_bf", {1}});
  e.push_back({"head_bi", {1}});
  e.push_back({"init_h1", {hidden}});
  e.push_back({"init_c1", {hidden}});
  e.push_back({"init_h2", {hidden}});
  e.push_back({"init_c2", {hidden}});
  e.push_back({"init_theta", {coords}});
  return e;
}

}  // namespace

learner::ParamVector LstmOptState::initial_theta() const {
  const learner::ParamEntry* e = phi.layout->find("init_theta");
  std::vector<double> data(phi.data.begin() + static_cast<std::ptrdiff_t>(e->offset),
                           phi.data.begin() +
                               static_cast<std::ptrdiff_t>(e->offset + e->size));
  return learner::ParamVector(base_layout, std::move(data));
}

void LstmOptState::set_initial_theta(const learner::ParamVector& theta) {
  const learner::ParamEntry* e = phi.layout->find("init_theta");
  if (theta.size() != e->size) {
    fail(ErrorKind::Shape, "initial theta size does not match the optimizer");
  }
  std::copy(theta.data.begin(), theta.data.end(),
            phi.data.begin() + static_cast<std::ptrdiff_t>(e->offset));
}

LstmOptState init_lstm_opt(learner::LayoutPtr base_layout,
                           const learner::ParamVector& theta0,
                           const LstmOptConfig& config, std::uint64_t seed) {
  if (config.hidden < 1) fail(ErrorKind::Config, "lstm hidden must be >= 1");
  LstmOptState state;
  state.config = config;
  state.base_layout = base_layout;
  learner::LayoutPtr layout = learner::ParamLayout::build(
      phi_entries(config.hidden, base_layout->total()));
  state.phi = learner::ParamVector::zeros(layout);

  Rng rng(mix64(seed ^ 0x6c73746dULL));
  for (const learner::ParamEntry& e : layout->entries()) {
    if (e.name.rfind("l1_w", 0) == 0 || e.name.rfind("l2_w", 0) == 0) {
      double bound = std::sqrt(6.0 / (static_cast<double>(e.shape[0]) +
                                      static_cast<double>(e.shape[1])));
      for (std::size_t i = 0; i < e.size; ++i) {
        state.phi.data[e.offset + i] = rng.uniform(-bound, bound);
      }
    } else if (e.name == "head_wf" || e.name == "head_wi") {
      for (std::size_t i = 0; i < e.size; ++i) {
        state.phi.data[e.offset + i] = rng.uniform(-0.01, 0.01);
      }
    }
  }
  // gate biases pin the untrained optimizer near small-step SGD:
  // f = sigmoid(5) ~ 0.993, i = sigmoid(-5) ~ 0.0067
  state.phi.data[layout->find("head_bf")->offset] = 5.0;
  state.phi.data[layout->find("head_bi")->offset] = -5.0;
  state.set_initial_theta(theta0);
  return state;
}

LstmRun::LstmRun(const LstmOptState& state, bool train_phi) : state_(&state) {
  phi_nodes_ = learner::ParamNodes::leaves(state.phi, train_phi);
  std::size_t coords = state.coord_count();
  std::size_t hidden = state.config.hidden;
  theta_ = phi_nodes_.at("init_theta");
  h1_ = d::broadcast(phi_nodes_.at("init_h1"), {coords, hidden});
  c1_ = d::broadcast(phi_nodes_.at("init_c1"), {coords, hidden});
  h2_ = d::broadcast(phi_nodes_.at("init_h2"), {coords, hidden});
  c2_ = d::broadcast(phi_nodes_.at("init_c2"), {coords, hidden});
  f_prev_ = d::make_const(d::Tensor::zeros({coords, 1}));
  i_prev_ = d::make_const(d::Tensor::zeros({coords, 1}));
}

learner::ParamNodes LstmRun::theta_params() const {
  return learner::ParamNodes::from_flat(theta_, state_->base_layout);
}

void LstmRun::step(double loss_value, const diff::NodePtr& grad_flat,
                   bool live_grad) {
  std::size_t coords = state_->coord_count();
  std::size_t hidden = state_->config.hidden;
  double p = state_->config.preprocess_p;

  if (grad_flat->value().numel() != coords) {
    fail(ErrorKind::Shape, "lstm_opt_step: gradient layout mismatch");
  }

  // per-coordinate inputs [pre(grad).1, pre(grad).2, pre(loss).1, pre(loss).2]
  auto [lp1, lp2] = preprocess(loss_value, p);
  d::Tensor x = d::Tensor::zeros({coords, 4});
  const std::vector<double>& gv = grad_flat->value().data;
  for (std::size_t j = 0; j < coords; ++j) {
    auto [gp1, gp2] = preprocess(gv[j], p);
    x.at(j, 0) = gp1;
    x.at(j, 1) = gp2;
    x.at(j, 2) = lp1;
    x.at(j, 3) = lp2;
  }
  d::NodePtr input = d::make_const(std::move(x));

  auto cell = [&](const char* layer, const d::NodePtr& xin, d::NodePtr& h,
                  d::NodePtr& c) {
    auto gate = [&](const char* g, const d::NodePtr& xi) {
      std::string l(layer);
      return d::add(
          d::add(d::matmul(xi, phi_nodes_.at(l + "_wx" + g)),
                 d::matmul(h, phi_nodes_.at(l + "_wh" + g))),
          d::broadcast(phi_nodes_.at(l + "_b" + g), {coords, hidden}));
    };
    d::NodePtr i = d::sigmoid(gate("i", xin));
    d::NodePtr f = d::sigmoid(gate("f", xin));
    d::NodePtr g = d::tanh(gate("g", xin));
    d::NodePtr o = d::sigmoid(gate("o", xin));
    c = d::add(d::mul(f, c), d::mul(i, g));
    h = d::mul(o, d::tanh(c));
  };
  cell("l1", input, h1_, c1_);
  cell("l2", h1_, h2_, c2_);

  // meta gates look at the trajectory summary, the previous parameters and
  // their own previous values
  d::NodePtr theta_col = d::reshape(theta_, {coords, 1});
  d::NodePtr feat = d::concat({h2_, theta_col, f_prev_, i_prev_}, 1);
  d::NodePtr f_gate = d::sigmoid(
      d::add(d::matmul(feat, phi_nodes_.at("head_wf")),
             d::broadcast(phi_nodes_.at("head_bf"), {coords, 1})));
  d::NodePtr i_gate = d::sigmoid(
      d::add(d::matmul(feat, phi_nodes_.at("head_wi")),
             d::broadcast(phi_nodes_.at("head_bi"), {coords, 1})));

  d::NodePtr grad_col = d::reshape(
      live_grad ? grad_flat : d::detach(grad_flat), {coords, 1});
  // cell-state update: a learned, gated gradient step
  d::NodePtr next = d::sub(d::mul(f_gate, theta_col), d::mul(i_gate, grad_col));
  theta_ = d::reshape(next, {coords});
  f_prev_ = f_gate;
  i_prev_ = i_gate;
}

namespace {

// shared adaptation loop; returns the run so callers can reach theta/phi
void run_adaptation(LstmRun& run, const LstmOptState& state,
                    const TaskLoss& task, int steps) {
  // the base model's gradient is the optimizer's input. Detached by default:
  // it is recomputed on fresh leaves so the support graph does not hang onto
  // the recurrence. The live path is only meaningful when theta itself is in
  // the meta-graph.
  bool live = state.config.second_order && run.theta_flat()->requires_grad();
  for (int t = 0; t < steps; ++t) {
    try {
      if (live) {
        d::NodePtr loss = task.support_loss(run.theta_params());
        d::GradMap g = d::grad(loss, {run.theta_flat()}, true);
        run.step(loss->value().scalar_value(), g.at(run.theta_flat()), true);
      } else {
        learner::ParamNodes nodes =
            learner::ParamNodes::leaves(run.theta_values(), true);
        d::NodePtr loss = task.support_loss(nodes);
        d::GradMap g = d::grad(loss, nodes.nodes, false);
        std::vector<double> flat;
        flat.reserve(nodes.layout->total());
        for (const d::NodePtr& n : nodes.nodes) {
          const d::Tensor& gt = g.at(n)->value();
          flat.insert(flat.end(), gt.data.begin(), gt.data.end());
        }
        std::size_t coords = flat.size();
        run.step(loss->value().scalar_value(),
                 d::make_const(d::Tensor({coords}, std::move(flat))), false);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NonFinite) {
        fail(ErrorKind::NonFinite,
             "lstm adaptation: non-finite loss at step " + std::to_string(t) +
                 ": " + e.what());
      }
      throw;
    }
  }
}

std::vector<double> flatten_phi_grads(const d::GradMap& g,
                                      const std::vector<d::NodePtr>& leaves) {
  std::vector<double> flat;
  for (const d::NodePtr& n : leaves) {
    const d::Tensor& t = g.at(n)->value();
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  return flat;
}

}  // namespace

std::vector<double> metalstm_task_phi_grad(const LstmOptState& state,
                                           const TaskLoss& task,
                                           int inner_steps,
                                           double* query_loss) {
  if (inner_steps < 1) {
    fail(ErrorKind::Value, "metalstm: inner_steps must be >= 1");
  }
  LstmRun run(state, true);
  run_adaptation(run, state, task, inner_steps);
  d::NodePtr q = task.query_loss(run.theta_params());
  if (query_loss) *query_loss = q->value().scalar_value();
  d::GradMap g = d::grad(q, run.phi_leaves(), false);
  return flatten_phi_grads(g, run.phi_leaves());
}

void metalstm_meta_step(LstmOptState& state, const TaskLoss& task,
                        int inner_steps, MetaOptimizer& opt) {
  std::vector<double> g = metalstm_task_phi_grad(state, task, inner_steps);
  opt.step(state.phi.data, g);
}

std::vector<double> metalstmpp_meta_gradient(const LstmOptState& state,
                                             const std::vector<TaskLoss>& batch,
                                             int inner_steps, int workers) {
  if (batch.empty()) {
    fail(ErrorKind::Value, "metalstmpp_meta_step: batch must be non-empty");
  }
  std::vector<TaskGrad> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    double qloss = 0.0;
    std::vector<double> g =
        metalstm_task_phi_grad(state, batch[i], inner_steps, &qloss);
    grads[i] = TaskGrad{batch[i].index, qloss, std::move(g)};
  });
  sort_contributions(grads);
  // average query loss over the batch -> average of the per-task gradients
  std::vector<double> total = grads.front().grad;
  for (std::size_t k = 1; k < grads.size(); ++k) {
    for (std::size_t i = 0; i < total.size(); ++i) {
      total[i] += grads[k].grad[i];
    }
  }
  double inv = 1.0 / static_cast<double>(grads.size());
  for (double& v : total) v *= inv;
  return total;
}

void metalstmpp_meta_step(LstmOptState& state,
                          const std::vector<TaskLoss>& batch, int inner_steps,
                          MetaOptimizer& opt, int workers) {
  std::vector<double> g =
      metalstmpp_meta_gradient(state, batch, inner_steps, workers);
  opt.step(state.phi.data, g);
}

learner::ParamVector adapt_lstm(const LstmOptState& state, const TaskLoss& task,
                                int steps) {
  LstmRun run(state, false);
  run_adaptation(run, state, task, steps);
  return run.theta_values();
}

learner::ParamVector adapt_lstm_from(const LstmOptState& state,
                                     const learner::ParamVector& theta0,
                                     const TaskLoss& task, int steps) {
  LstmOptState patched = state;
  patched.set_initial_theta(theta0);
  return adapt_lstm(patched, task, steps);
}

// ---- Strategy wrappers -----------------------------------------------------

MetaLstmStrategy::MetaLstmStrategy(LstmOptState state, int inner_steps,
                                   double meta_lr, MetaOptKind opt_kind)
    : state_(std::move(state)),
      inner_steps_(inner_steps),
      opt_(opt_kind, meta_lr, state_.phi.size()) {}

void MetaLstmStrategy::meta_step(const std::vector<TaskLoss>& batch,
                                 int workers) {
  (void)workers;  // strictly sequential: one task per phi update
  for (const TaskLoss& task : batch) {
    metalstm_meta_step(state_, task, inner_steps_, opt_);
  }
}

learner::ParamVector MetaLstmStrategy::adapt(const TaskLoss& task,
                                             int steps) const {
  int s = steps < 0 ? inner_steps_ : steps;
  if (s == 0) return state_.initial_theta();
  return adapt_lstm(state_, task, s);
}

const learner::ParamVector& MetaLstmStrategy::initialization() const {
  init_cache_ = state_.initial_theta();
  return init_cache_;
}

nlohmann::json MetaLstmStrategy::state_to_json() const {
  nlohmann::json j;
  j["strategy"] = name();
  j["phi"] = param_vector_to_json(state_.phi);
  j["base_layout"] =
      param_vector_to_json(learner::ParamVector::zeros(state_.base_layout))["layout"];
  j["hidden"] = state_.config.hidden;
  j["preprocess_p"] = state_.config.preprocess_p;
  j["second_order"] = state_.config.second_order;
  j["inner_steps"] = inner_steps_;
  j["opt"] = opt_.to_json();
  return j;
}

namespace {
learner::LayoutPtr layout_from_json(const nlohmann::json& layout_json) {
  std::vector<std::pair<std::string, d::Shape>> entries;
  for (const nlohmann::json& e : layout_json) {
    entries.push_back({e.at("name").get<std::string>(),
                       e.at("shape").get<d::Shape>()});
  }
  return learner::ParamLayout::build(std::move(entries));
}
}  // namespace

void MetaLstmStrategy::state_from_json(const nlohmann::json& j) {
  state_.phi = param_vector_from_json(j.at("phi"));
  state_.base_layout = layout_from_json(j.at("base_layout"));
  state_.config.hidden = j.at("hidden").get<std::size_t>();
  state_.config.preprocess_p = j.at("preprocess_p").get<double>();
  state_.config.second_order = j.at("second_order").get<bool>();
  inner_steps_ = j.at("inner_steps").get<int>();
  opt_ = MetaOptimizer::from_json(j.at("opt"));
}

MetaLstmPpStrategy::MetaLstmPpStrategy(LstmOptState state, int inner_steps,
                                       double meta_lr, MetaOptKind opt_kind)
    : state_(std::move(state)),
      inner_steps_(inner_steps),
      opt_(opt_kind, meta_lr, state_.phi.size()) {}

void MetaLstmPpStrategy::meta_step(const std::vector<TaskLoss>& batch,
                                   int workers) {
  metalstmpp_meta_step(state_, batch, inner_steps_, opt_, workers);
}

learner::ParamVector MetaLstmPpStrategy::adapt(const TaskLoss& task,
                                               int steps) const {
  int s = steps < 0 ? inner_steps_ : steps;
  if (s == 0) return state_.initial_theta();
  return adapt_lstm(state_, task, s);
}

const learner::ParamVector& MetaLstmPpStrategy::initialization() const {
  init_cache_ = state_.initial_theta();
  return init_cache_;
}

nlohmann::json MetaLstmPpStrategy::state_to_json() const {
  nlohmann::json j;
  j["strategy"] = name();
  j["phi"] = param_vector_to_json(state_.phi);
  j["base_layout"] =
      param_vector_to_json(learner::ParamVector::zeros(state_.base_layout))["layout"];
  j["hidden"] = state_.config.hidden;
  j["preprocess_p"] = state_.config.preprocess_p;
  j["second_order"] = state_.config.second_order;
  j["inner_steps"] = inner_steps_;
  j["opt"] = opt_.to_json();
  return j;
}

void MetaLstmPpStrategy::state_from_json(const nlohmann::json& j) {
  state_.phi = param_vector_from_json(j.at("phi"));
  state_.base_layout = layout_from_json(j.at("base_layout"));
  state_.config.hidden = j.at("hidden").get<std::size_t>();
  state_.config.preprocess_p = j.at("preprocess_p").get<double>();
  state_.config.second_order = j.at("second_order").get<bool>();
  inner_steps_ = j.at("inner_steps").get<int>();
  opt_ = MetaOptimizer::from_json(j.at("opt"));
}

}  // namespace metastress::meta
