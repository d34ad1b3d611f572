#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "bcrf/core_types.hpp"
#include "bcrf/energy.hpp"
#include "bcrf/inference.hpp"

namespace bcrf {

/// Gradients of a scalar loss with respect to every trainable input.
struct GradientBundle {
  Field d_phi;
  Field d_psi;
  std::array<double, kNumTerms> d_weights{};
  Matrix d_mu;
  Matrix d_eta;
};

// ---------------------------------------------------------------- losses

/// -(1/N) sum_i log max(Q_i(gt_i), 1e-8).
inline double loss_semantic(const Field& q, const Labeling& gt) {
  if (static_cast<int>(gt.size()) != q.pixels()) throw input_error("ground truth size does not match marginals");
  double s = 0.0;
  for (int i = 0; i < q.pixels(); ++i) {
    const int g = gt[static_cast<std::size_t>(i)];
    if (g < 0 || g >= q.channels) throw input_error("ground-truth label out of range");
    s -= std::log(std::max(q.at(i, g), kLogFloor));
  }
  return s / q.pixels();
}

// Cross entropy against a per-pixel target channel and its gradient.
inline double cross_entropy(const Field& p, const Labeling& target, Field* grad) {
  const double n = p.pixels();
  double s = 0.0;
  if (grad) *grad = Field(p.height, p.width, p.channels);
  for (int i = 0; i < p.pixels(); ++i) {
    const int t = target[static_cast<std::size_t>(i)];
    const double v = p.at(i, t);
    s -= std::log(std::max(v, kLogFloor));
    if (grad && v > kLogFloor) grad->at(i, t) = -1.0 / (n * v);
  }
  return s / n;
}

inline double intersection_over_union(const Labeling& a, int a_id, const Labeling& b, int b_id) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] == a_id, in_b = b[i] == b_id;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Greedy descending-IoU matching of decoded instance channels to
/// ground-truth instance ids. Returns the target channel for every pixel:
/// the matched channel inside matched ground-truth instances, inst0 elsewhere.
inline Labeling matched_instance_targets(const Field& r, const Labeling& gt_instances) {
  if (static_cast<int>(gt_instances.size()) != r.pixels())
    throw input_error("ground-truth instance map size does not match marginals");
  Labeling decoded(static_cast<std::size_t>(r.pixels()));
  for (int i = 0; i < r.pixels(); ++i) decoded[static_cast<std::size_t>(i)] = argmax_row(r.row(i));

  int max_gt = 0;
  for (int g : gt_instances) {
    if (g < 0) throw input_error("ground-truth instance ids must be >= 0");
    max_gt = std::max(max_gt, g);
  }
  struct Candidate {
    double iou;
    int pred;
    int gt;
  };
  std::vector<Candidate> cands;
  for (int t = 1; t < r.channels; ++t)
    for (int g = 1; g <= max_gt; ++g) {
      const double iou = intersection_over_union(decoded, t, gt_instances, g);
      if (iou > 0.0) cands.push_back({iou, t, g});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.iou > b.iou;
  });
  std::vector<int> gt_to_pred(static_cast<std::size_t>(max_gt) + 1, 0);
  std::vector<bool> pred_used(static_cast<std::size_t>(r.channels), false);
  for (const auto& c : cands) {
    if (gt_to_pred[static_cast<std::size_t>(c.gt)] != 0 || pred_used[static_cast<std::size_t>(c.pred)]) continue;
    gt_to_pred[static_cast<std::size_t>(c.gt)] = c.pred;
    pred_used[static_cast<std::size_t>(c.pred)] = true;
  }
  Labeling target(gt_instances.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = gt_to_pred[static_cast<std::size_t>(gt_instances[i])];
  return target;
}

inline double loss_instance_matched(const Field& r, const Labeling& gt_instances) {
  return cross_entropy(r, matched_instance_targets(r, gt_instances), nullptr);
}

// ------------------------------------------------------------------ tape

/// Forward pass of the unrolled iterations with everything the reverse pass
/// needs.
struct Tape {
  std::vector<MarginalPair> states;  // states[0] = init, states[k] after step k
  std::vector<MarginalPair> softmax_out;  // undamped softmax outputs of step k (index k-1)
  std::vector<StepTerms> terms;
  bool early_stopped = false;
};

inline Tape record_forward(const Field& phi, const Field& psi, const Model& m) {
  check_unaries(m, phi, psi);
  Tape tape;
  tape.states.push_back(init_marginals(phi, psi, m.params));
  for (int it = 0; it < m.params.iterations; ++it) {
    const MarginalPair& prev = tape.states.back();
    StepTerms st = compute_step_terms(prev, phi, psi, m);
    MarginalPair sm{softmax_rows(st.q_scores), softmax_rows(st.r_scores)};
    MarginalPair next{damp(sm.q, prev.q, m.params.damping), damp(sm.r, prev.r, m.params.damping)};
    tape.terms.push_back(std::move(st));
    tape.softmax_out.push_back(std::move(sm));
    tape.states.push_back(std::move(next));
  }
  return tape;
}

namespace detail {

// Adjoint of a row softmax: g_z = s * (g_s - <g_s, s>).
inline Field softmax_backward(const Field& s, const Field& gs) {
  Field gz(s.height, s.width, s.channels);
  for (int i = 0; i < s.pixels(); ++i) {
    double inner = 0.0;
    for (int c = 0; c < s.channels; ++c) inner += s.at(i, c) * gs.at(i, c);
    for (int c = 0; c < s.channels; ++c) gz.at(i, c) = s.at(i, c) * (gs.at(i, c) - inner);
  }
  return gz;
}

inline void axpy(Field& y, double a, const Field& x) {
  for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += a * x.data[k];
}

// d_f(l, t) += sum_i sem_i(l) inst_i(t)
inline void accumulate_outer(Matrix& d_f, const Field& sem, const Field& inst, double scale) {
  for (int i = 0; i < sem.pixels(); ++i)
    for (int l = 0; l < d_f.rows; ++l) {
      const double a = scale * sem.at(i, l);
      if (a == 0.0) continue;
      for (int t = 0; t < d_f.cols; ++t) d_f(l, t) += a * inst.at(i, t);
    }
}

}  // namespace detail

/// Reverse pass through a recorded forward given adjoints of the final
/// marginals. Message passing with a symmetric kernel is self-adjoint.
inline GradientBundle backward(const Tape& tape, const Field& phi, const Field& psi, const Model& m,
                               const Field& grad_q_final, const Field& grad_r_final) {
  if (tape.early_stopped)
    throw input_error("backward: forward pass stopped early; gradients need a fixed iteration count");
  if (tape.states.empty()) throw input_error("backward: empty tape");
  const auto& w = m.params.weights;
  const Matrix& f = m.cross_cost;
  const double alpha = m.params.damping;

  GradientBundle g;
  g.d_phi = Field(phi.height, phi.width, phi.channels);
  g.d_psi = Field(psi.height, psi.width, psi.channels);
  g.d_mu = Matrix(m.params.mu.rows, m.params.mu.cols);
  g.d_eta = Matrix(m.params.eta.rows, m.params.eta.cols);
  Matrix d_f(f.rows, f.cols);

  Field gq = grad_q_final, gr = grad_r_final;
  for (std::size_t k = tape.terms.size(); k-- > 0;) {
    const MarginalPair& prev = tape.states[k];
    const StepTerms& st = tape.terms[k];
    const MarginalPair& sm = tape.softmax_out[k];

    Field gsq = gq, gsr = gr;
    Field gq_prev(gq.height, gq.width, gq.channels), gr_prev(gr.height, gr.width, gr.channels);
    if (alpha != 1.0) {
      for (double& v : gsq.data) v *= alpha;
      for (double& v : gsr.data) v *= alpha;
      detail::axpy(gq_prev, 1.0 - alpha, gq);
      detail::axpy(gr_prev, 1.0 - alpha, gr);
    }
    const Field a = detail::softmax_backward(sm.q, gsq);  // adjoint of Q'
    const Field b = detail::softmax_backward(sm.r, gsr);  // adjoint of R'

    // unaries
    detail::axpy(g.d_phi, -w[kSemanticUnary], a);
    detail::axpy(g.d_psi, -w[kInstanceUnary], b);
    g.d_weights[kSemanticUnary] -= dot(a, phi);
    g.d_weights[kInstanceUnary] -= dot(b, psi);

    // semantic smoothness: -w mu * M[Q]
    {
      const Field smooth = compat_transform_semantic(st.msg_q_semantic, m.params.mu);
      g.d_weights[kSemanticPairwise] -= dot(a, smooth);
      const double s = -w[kSemanticPairwise];
      if (s != 0.0) {
        for (int i = 0; i < a.pixels(); ++i)
          for (int l = 0; l < g.d_mu.rows; ++l)
            for (int l2 = 0; l2 < g.d_mu.cols; ++l2) g.d_mu(l, l2) += s * a.at(i, l) * st.msg_q_semantic.at(i, l2);
        Field g_msg(a.height, a.width, a.channels);
        for (int i = 0; i < a.pixels(); ++i)
          for (int l2 = 0; l2 < g_msg.channels; ++l2) {
            double v = 0.0;
            for (int l = 0; l < a.channels; ++l) v += m.params.mu(l, l2) * a.at(i, l);
            g_msg.at(i, l2) = s * v;
          }
        detail::axpy(gq_prev, 1.0, m.semantic_kernel.message_pass(g_msg));
      }
    }

    // instance smoothness: -w Iverson(M[R]); the Iverson transform is symmetric
    {
      const Field smooth = iverson_transform(st.msg_r_instance);
      g.d_weights[kInstancePairwise] -= dot(b, smooth);
      const double s = -w[kInstancePairwise];
      if (s != 0.0) {
        Field g_msg = iverson_transform(b);
        for (double& v : g_msg.data) v *= s;
        detail::axpy(gr_prev, 1.0, m.instance_kernel.message_pass(g_msg));
      }
    }

    // pointwise cross terms: -w F R into Q', -w F^T Q into R'
    {
      g.d_weights[kCrossUnary] -= dot(a, apply_cost(f, prev.r)) + dot(b, apply_cost_transposed(f, prev.q));
      const double s = -w[kCrossUnary];
      if (s != 0.0) {
        detail::accumulate_outer(d_f, a, prev.r, s);
        detail::accumulate_outer(d_f, prev.q, b, s);
        detail::axpy(gr_prev, s, apply_cost_transposed(f, a));
        detail::axpy(gq_prev, s, apply_cost(f, b));
      }
    }

    // pairwise cross terms: -w F M[R] into Q', -w F^T M[Q] into R'
    {
      g.d_weights[kCrossPairwise] -=
          dot(a, apply_cost(f, st.msg_r_cross)) + dot(b, apply_cost_transposed(f, st.msg_q_cross));
      const double s = -w[kCrossPairwise];
      if (s != 0.0) {
        detail::accumulate_outer(d_f, a, st.msg_r_cross, s);
        detail::accumulate_outer(d_f, st.msg_q_cross, b, s);
        Field g_mr = apply_cost_transposed(f, a);
        for (double& v : g_mr.data) v *= s;
        Field g_mq = apply_cost(f, b);
        for (double& v : g_mq.data) v *= s;
        detail::axpy(gr_prev, 1.0, m.cross_kernel.message_pass(g_mr));
        detail::axpy(gq_prev, 1.0, m.cross_kernel.message_pass(g_mq));
      }
    }

    gq = std::move(gq_prev);
    gr = std::move(gr_prev);
  }

  // initialization: Q0 = softmax(-w phi), R0 = softmax(-w psi)
  const Field zq = detail::softmax_backward(tape.states[0].q, gq);
  const Field zr = detail::softmax_backward(tape.states[0].r, gr);
  detail::axpy(g.d_phi, -w[kSemanticUnary], zq);
  detail::axpy(g.d_psi, -w[kInstanceUnary], zr);
  g.d_weights[kSemanticUnary] -= dot(zq, phi);
  g.d_weights[kInstanceUnary] -= dot(zr, psi);

  for (int l = 0; l < f.rows; ++l)
    for (int t = 0; t < f.cols; ++t) {
      const int src = cross_cost_source(m.schema, l, t);
      if (src >= 0) g.d_eta.data[static_cast<std::size_t>(src)] += d_f(l, t);
    }
  return g;
}

// ------------------------------------------------------- training helpers

/// One supervised example.
struct TrainingSample {
  Field image;
  Field phi;
  Field psi;
  LabelSchema schema;  // shared labels, per-sample instance classes
  Labeling gt_semantic;
  Labeling gt_instance;
};

struct LossAndGradient {
  double loss = 0.0;
  GradientBundle grad;
};

// Fixed-target form of the matched loss: the instance matching is held at
// `targets`, which makes the loss smooth in every parameter.
inline LossAndGradient loss_and_gradient(const Field& phi, const Field& psi, const Model& m,
                                         const Labeling& gt_semantic, const Labeling& instance_targets) {
  const Tape tape = record_forward(phi, psi, m);
  const MarginalPair& out = tape.states.back();
  Field gq, gr;
  LossAndGradient res;
  res.loss = cross_entropy(out.q, gt_semantic, &gq) + cross_entropy(out.r, instance_targets, &gr);
  res.grad = backward(tape, phi, psi, m, gq, gr);
  return res;
}

// Full loss: semantic cross entropy plus matched instance cross entropy.
inline LossAndGradient loss_and_gradient(const Field& phi, const Field& psi, const Model& m,
                                         const Labeling& gt_semantic, const Labeling& gt_instance,
                                         Labeling* targets_out) {
  const Tape tape = record_forward(phi, psi, m);
  const MarginalPair& out = tape.states.back();
  Labeling targets = matched_instance_targets(out.r, gt_instance);
  Field gq, gr;
  LossAndGradient res;
  res.loss = cross_entropy(out.q, gt_semantic, &gq) + cross_entropy(out.r, targets, &gr);
  res.grad = backward(tape, phi, psi, m, gq, gr);
  if (targets_out) *targets_out = std::move(targets);
  return res;
}

inline double forward_loss(const Field& phi, const Field& psi, const Model& m, const Labeling& gt_semantic,
                           const Labeling& instance_targets) {
  RunOptions opts;
  opts.allow_early_stop = false;
  opts.record_free_energy = false;
  const auto res = run_inference(phi, psi, m, opts);
  return cross_entropy(res.marginals.q, gt_semantic, nullptr) +
         cross_entropy(res.marginals.r, instance_targets, nullptr);
}

// ------------------------------------------------------------ grad check

struct GroupError {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double loss = 0.0;

  double worst() const {
    double w = 0.0;
    for (const auto& g : groups) w = std::max(w, g.max_rel_error);
    return w;
  }
};

// Relative error with a denominator floor of 1e-3, so that the 1e-4 relative
// tolerance never asks for better than 1e-7 absolute agreement.
inline double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Reverse-mode gradients against central differences with step `h` for
/// every entry of every parameter group.
inline GradCheckReport grad_check(const Field& phi, const Field& psi, const Model& base,
                                  const Labeling& gt_semantic, const Labeling& gt_instance, double h = 1e-4) {
  Labeling targets;
  const LossAndGradient lg = loss_and_gradient(phi, psi, base, gt_semantic, gt_instance, &targets);
  GradCheckReport report;
  report.loss = lg.loss;

  auto check = [&](const std::string& name, std::size_t count, const std::function<double(std::size_t)>& analytic,
                   const std::function<double(std::size_t, double)>& eval) {
    GroupError ge{name, count, 0.0, 0.0};
    for (std::size_t k = 0; k < count; ++k) {
      const double numeric = (eval(k, h) - eval(k, -h)) / (2.0 * h);
      const double a = analytic(k);
      ge.max_abs_error = std::max(ge.max_abs_error, std::abs(a - numeric));
      ge.max_rel_error = std::max(ge.max_rel_error, gradient_rel_error(a, numeric));
    }
    report.groups.push_back(ge);
  };

  check("phi", phi.data.size(), [&](std::size_t k) { return lg.grad.d_phi.data[k]; },
        [&](std::size_t k, double d) {
          Field p = phi;
          p.data[k] += d;
          return forward_loss(p, psi, base, gt_semantic, targets);
        });
  check("psi", psi.data.size(), [&](std::size_t k) { return lg.grad.d_psi.data[k]; },
        [&](std::size_t k, double d) {
          Field p = psi;
          p.data[k] += d;
          return forward_loss(phi, p, base, gt_semantic, targets);
        });
  check("term_weights", kNumTerms, [&](std::size_t k) { return lg.grad.d_weights[k]; },
        [&](std::size_t k, double d) {
          Model m = base;
          m.params.weights[k] += d;
          return forward_loss(phi, psi, m, gt_semantic, targets);
        });
  check("mu", base.params.mu.data.size(), [&](std::size_t k) { return lg.grad.d_mu.data[k]; },
        [&](std::size_t k, double d) {
          Model m = base;
          m.params.mu.data[k] += d;
          return forward_loss(phi, psi, m, gt_semantic, targets);
        });
  check("eta", base.params.eta.data.size(), [&](std::size_t k) { return lg.grad.d_eta.data[k]; },
        [&](std::size_t k, double d) {
          Model m = base;
          m.params.eta.data[k] += d;
          m.refresh_compat();
          return forward_loss(phi, psi, m, gt_semantic, targets);
        });
  return report;
}

// ---------------------------------------------------------------- fitting

struct FitResult {
  BcrfParams params;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
  bool aborted = false;
};

inline void project_params(BcrfParams& p) {
  for (double& v : p.weights) v = std::max(v, 0.0);
  for (int l = 0; l < p.mu.rows; ++l) p.mu(l, l) = 0.0;
  for (int a = 0; a < p.eta.rows; ++a)
    for (int b = 0; b < p.eta.cols; ++b) p.eta(a, b) = a == b ? 0.0 : std::max(p.eta(a, b), 0.0);
}

/// Projected gradient descent on term weights, mu and eta. Kernels stay fixed.
inline FitResult fit_parameters(const std::vector<TrainingSample>& dataset, const BcrfParams& params0, int steps,
                                double lr) {
  if (dataset.empty()) throw input_error("fit_parameters: empty dataset");
  if (steps < 0) throw input_error("fit_parameters: steps must be >= 0");
  std::vector<Model> models;
  models.reserve(dataset.size());
  for (const auto& s : dataset) {
    validate_schema(s.schema);
    Model m = Model::from_image(s.schema, params0, s.image);
    check_unaries(m, s.phi, s.psi);
    models.push_back(std::move(m));
  }

  FitResult res;
  res.params = params0;
  const double inv = 1.0 / static_cast<double>(dataset.size());
  for (int step = 0; step <= steps; ++step) {
    double loss = 0.0;
    std::array<double, kNumTerms> dw{};
    Matrix dmu(params0.mu.rows, params0.mu.cols), deta(params0.eta.rows, params0.eta.cols);
    const bool last = step == steps;
    for (std::size_t k = 0; k < dataset.size(); ++k) {
      Model& m = models[k];
      m.params.weights = res.params.weights;
      m.params.mu = res.params.mu;
      m.params.eta = res.params.eta;
      m.refresh_compat();
      const auto& s = dataset[k];
      if (last) {
        RunOptions opts;
        opts.allow_early_stop = false;
        opts.record_free_energy = false;
        const auto out = run_inference(s.phi, s.psi, m, opts);
        loss += inv * (loss_semantic(out.marginals.q, s.gt_semantic) +
                       loss_instance_matched(out.marginals.r, s.gt_instance));
        continue;
      }
      const LossAndGradient lg = loss_and_gradient(s.phi, s.psi, m, s.gt_semantic, s.gt_instance, nullptr);
      loss += inv * lg.loss;
      for (int t = 0; t < kNumTerms; ++t) dw[static_cast<std::size_t>(t)] += inv * lg.grad.d_weights[static_cast<std::size_t>(t)];
      for (std::size_t e = 0; e < dmu.data.size(); ++e) dmu.data[e] += inv * lg.grad.d_mu.data[e];
      for (std::size_t e = 0; e < deta.data.size(); ++e) deta.data[e] += inv * lg.grad.d_eta.data[e];
    }
    res.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) {
      res.aborted = true;
      return res;
    }
    if (last) break;
    for (int t = 0; t < kNumTerms; ++t) res.params.weights[static_cast<std::size_t>(t)] -= lr * dw[static_cast<std::size_t>(t)];
    for (std::size_t e = 0; e < dmu.data.size(); ++e) res.params.mu.data[e] -= lr * dmu.data[e];
    for (std::size_t e = 0; e < deta.data.size(); ++e) res.params.eta.data[e] -= lr * deta.data[e];
    project_params(res.params);
  }
  return res;
}

}  // namespace bcrf
