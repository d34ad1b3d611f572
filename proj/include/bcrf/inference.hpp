#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "bcrf/core_types.hpp"
#include "bcrf/energy.hpp"
#include "bcrf/kernels.hpp"

namespace bcrf {

// Row-wise softmax of `scale * scores`.
inline Field softmax_rows(const Field& scores, double scale = 1.0) {
  Field out(scores.height, scores.width, scores.channels);
  for (int i = 0; i < scores.pixels(); ++i) {
    auto in = scores.row(i);
    auto o = out.row(i);
    double mx = -INFINITY;
    for (double v : in) mx = std::max(mx, scale * v);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(scale * in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

/// Q = softmax(-phi), R = softmax(-psi).
inline MarginalPair init_marginals(const Field& phi, const Field& psi) {
  return {softmax_rows(phi, -1.0), softmax_rows(psi, -1.0)};
}

// Unaries with the unary term weights applied; inference starts from these so
// that an uncoupled model is already at its fixed point.
inline MarginalPair init_marginals(const Field& phi, const Field& psi, const BcrfParams& params) {
  return {softmax_rows(phi, -params.weight(kSemanticUnary)), softmax_rows(psi, -params.weight(kInstanceUnary))};
}

// Per-pixel products with an L x T cost table.
inline Field apply_cost(const Matrix& f, const Field& inst) {  // out(l) = sum_t f(l,t) inst(t)
  Field out(inst.height, inst.width, f.rows);
  for (int i = 0; i < inst.pixels(); ++i)
    for (int l = 0; l < f.rows; ++l) {
      double s = 0.0;
      for (int t = 0; t < f.cols; ++t) s += f(l, t) * inst.at(i, t);
      out.at(i, l) = s;
    }
  return out;
}

inline Field apply_cost_transposed(const Matrix& f, const Field& sem) {  // out(t) = sum_l f(l,t) sem(l)
  Field out(sem.height, sem.width, f.cols);
  for (int i = 0; i < sem.pixels(); ++i)
    for (int t = 0; t < f.cols; ++t) {
      double s = 0.0;
      for (int l = 0; l < f.rows; ++l) s += f(l, t) * sem.at(i, l);
      out.at(i, t) = s;
    }
  return out;
}

/// Intermediate quantities of one update; the backward pass reuses them.
struct StepTerms {
  Field msg_q_semantic;  // Sim_Phi message of Q
  Field msg_r_instance;  // Sim_Psi message of R
  Field msg_q_cross;     // Sim_Omega message of Q
  Field msg_r_cross;     // Sim_Omega message of R
  Field q_scores;        // Q'
  Field r_scores;        // R'
};

inline StepTerms compute_step_terms(const MarginalPair& state, const Field& phi, const Field& psi,
                                    const Model& m) {
  const auto& w = m.params.weights;
  StepTerms st;
  st.msg_q_semantic = m.semantic_kernel.message_pass(state.q);
  st.msg_r_instance = m.instance_kernel.message_pass(state.r);
  st.msg_q_cross = m.cross_kernel.message_pass(state.q);
  st.msg_r_cross = m.cross_kernel.message_pass(state.r);

  const Field smooth_q = compat_transform_semantic(st.msg_q_semantic, m.params.mu);
  const Field smooth_r = iverson_transform(st.msg_r_instance);
  const Field cross_q = apply_cost(m.cross_cost, state.r);
  const Field cross_r = apply_cost_transposed(m.cross_cost, state.q);
  const Field cross_pair_q = apply_cost(m.cross_cost, st.msg_r_cross);
  const Field cross_pair_r = apply_cost_transposed(m.cross_cost, st.msg_q_cross);

  st.q_scores = Field(phi.height, phi.width, phi.channels);
  for (std::size_t k = 0; k < st.q_scores.data.size(); ++k) {
    double v = -w[kSemanticUnary] * phi.data[k];
    v -= w[kSemanticPairwise] * smooth_q.data[k];
    v -= w[kCrossUnary] * cross_q.data[k];
    v -= w[kCrossPairwise] * cross_pair_q.data[k];
    st.q_scores.data[k] = v;
  }
  st.r_scores = Field(psi.height, psi.width, psi.channels);
  for (std::size_t k = 0; k < st.r_scores.data.size(); ++k) {
    double v = -w[kInstanceUnary] * psi.data[k];
    v -= w[kInstancePairwise] * smooth_r.data[k];
    v -= w[kCrossUnary] * cross_r.data[k];
    v -= w[kCrossPairwise] * cross_pair_r.data[k];
    st.r_scores.data[k] = v;
  }
  return st;
}

inline Field damp(const Field& fresh, const Field& old, double alpha) {
  if (alpha == 1.0) return fresh;
  Field out = fresh;
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = alpha * fresh.data[k] + (1.0 - alpha) * old.data[k];
  return out;
}

/// One parallel update: every term reads only the previous marginals.
inline MarginalPair meanfield_step(const MarginalPair& state, const Field& phi, const Field& psi, const Model& m) {
  const StepTerms st = compute_step_terms(state, phi, psi, m);
  const double alpha = m.params.damping;
  return {damp(softmax_rows(st.q_scores), state.q, alpha), damp(softmax_rows(st.r_scores), state.r, alpha)};
}

inline double max_abs_change(const MarginalPair& a, const MarginalPair& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.q.data.size(); ++k) d = std::max(d, std::abs(a.q.data[k] - b.q.data[k]));
  for (std::size_t k = 0; k < a.r.data.size(); ++k) d = std::max(d, std::abs(a.r.data[k] - b.r.data[k]));
  return d;
}

inline double neg_entropy(const Field& p) {
  double s = 0.0;
  for (double v : p.data)
    if (v > 0.0) s += v * std::log(v);
  return s;
}

inline double dot(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) s += a.data[k] * b.data[k];
  return s;
}

/// Expected energy under Q x R minus the entropies of Q and R. Differs from
/// KL(Q x R || P) by log Z only.
inline double free_energy(const MarginalPair& s, const Field& phi, const Field& psi, const Model& m) {
  const auto& w = m.params.weights;
  double e = 0.0;
  e += w[kSemanticUnary] * dot(s.q, phi);
  e += w[kInstanceUnary] * dot(s.r, psi);
  if (w[kSemanticPairwise] != 0.0) {
    // mu may be asymmetric, so keep the i < j orientation
    const Field upper = m.semantic_kernel.message_pass_upper(s.q);
    e += w[kSemanticPairwise] * dot(s.q, compat_transform_semantic(upper, m.params.mu));
  }
  if (w[kInstancePairwise] != 0.0) {
    const Field msg = m.instance_kernel.message_pass(s.r);
    e += w[kInstancePairwise] * 0.5 * dot(s.r, iverson_transform(msg));
  }
  if (w[kCrossUnary] != 0.0) e += w[kCrossUnary] * dot(s.q, apply_cost(m.cross_cost, s.r));
  if (w[kCrossPairwise] != 0.0) {
    const Field msg = m.cross_kernel.message_pass(s.r);
    e += w[kCrossPairwise] * dot(s.q, apply_cost(m.cross_cost, msg));
  }
  return e + neg_entropy(s.q) + neg_entropy(s.r);
}

struct TraceRecord {
  int iteration = 0;
  double free_energy = 0.0;
  double max_delta = 0.0;
};

struct InferenceTrace {
  std::vector<TraceRecord> records;
  bool early_stopped = false;
};

struct InferenceResult {
  MarginalPair marginals;
  InferenceTrace trace;
};

struct RunOptions {
  bool allow_early_stop = true;
  bool record_free_energy = true;
};

inline InferenceResult run_inference(const Field& phi, const Field& psi, const Model& m, RunOptions opts = {}) {
  check_unaries(m, phi, psi);
  InferenceResult res;
  res.marginals = init_marginals(phi, psi, m.params);
  auto record = [&](int it, double delta) {
    res.trace.records.push_back(
        {it, opts.record_free_energy ? free_energy(res.marginals, phi, psi, m) : 0.0, delta});
  };
  record(0, 0.0);
  for (int it = 1; it <= m.params.iterations; ++it) {
    MarginalPair next = meanfield_step(res.marginals, phi, psi, m);
    const double delta = max_abs_change(next, res.marginals);
    res.marginals = std::move(next);
    record(it, delta);
    if (opts.allow_early_stop && delta < m.params.convergence_tol) {
      res.trace.early_stopped = it < m.params.iterations;
      break;
    }
  }
  if (!satisfies_simplex(res.marginals)) throw invariant_error("marginals left the simplex");
  return res;
}

inline InferenceResult run_inference(const Field& phi, const Field& psi, const Field& image,
                                     const LabelSchema& schema, const BcrfParams& params, RunOptions opts = {}) {
  if (image.height != phi.height || image.width != phi.width)
    throw input_error("image shape does not match unaries");
  validate_schema(schema);
  const Model m = Model::from_image(schema, params, image);
  return run_inference(phi, psi, m, opts);
}

inline int argmax_row(std::span<const double> row) {
  int best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

/// Independent per-pixel argmax; ties go to the lowest index.
inline std::pair<Labeling, Labeling> decode_map(const MarginalPair& s) {
  Labeling x(static_cast<std::size_t>(s.q.pixels())), z(static_cast<std::size_t>(s.r.pixels()));
  for (int i = 0; i < s.q.pixels(); ++i) x[static_cast<std::size_t>(i)] = argmax_row(s.q.row(i));
  for (int i = 0; i < s.r.pixels(); ++i) z[static_cast<std::size_t>(i)] = argmax_row(s.r.row(i));
  return {std::move(x), std::move(z)};
}

}  // namespace bcrf
