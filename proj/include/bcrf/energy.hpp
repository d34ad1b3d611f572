#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bcrf/core_types.hpp"
#include "bcrf/kernels.hpp"

namespace bcrf {

inline constexpr double kLogFloor = 1e-8;

/// phi_i(l) = -log(max(p_i(l), 1e-8)).
inline Field semantic_unary_from_probs(const Field& probs) {
  Field out(probs.height, probs.width, probs.channels);
  for (int i = 0; i < probs.pixels(); ++i) {
    double sum = 0.0;
    for (double v : probs.row(i)) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw input_error("semantic probabilities at pixel " + std::to_string(i) + " are not non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw input_error("semantic probabilities at pixel " + std::to_string(i) + " sum to " +
                        std::to_string(sum));
    for (int c = 0; c < probs.channels; ++c)
      out.at(i, c) = -std::log(std::max(probs.at(i, c), kLogFloor));
  }
  return out;
}

/// Pointwise incompatibility between semantic label `l` and instance class
/// `cls` (a thing label or kNullClass).
inline double cross_compat(int l, int cls, const Matrix& eta, const LabelSchema& schema) {
  if (l == cls) return 0.0;
  const bool stuff = !schema.is_thing(l);
  if (stuff && cls == kNullClass) return 0.0;
  const int row = stuff ? schema.eta_index(kNullClass) : schema.eta_index(l);
  return eta(row, schema.eta_index(cls));
}

/// The L x T table F(l, t) = cross_compat(l, class(t)).
inline Matrix cross_cost_matrix(const LabelSchema& schema, const Matrix& eta) {
  Matrix f(schema.num_labels(), schema.instance_channels());
  for (int l = 0; l < f.rows; ++l)
    for (int t = 0; t < f.cols; ++t) f(l, t) = cross_compat(l, schema.class_of_instance(t), eta, schema);
  return f;
}

// Which eta entry feeds F(l, t), or -1 when F(l, t) is structurally zero.
inline int cross_cost_source(const LabelSchema& schema, int l, int t) {
  const int cls = schema.class_of_instance(t);
  if (l == cls) return -1;
  const bool stuff = !schema.is_thing(l);
  if (stuff && cls == kNullClass) return -1;
  const int row = stuff ? 0 : schema.eta_index(l);
  return row * schema.eta_size() + schema.eta_index(cls);
}

/// out_i(l) = sum_{l'} mu(l, l') dist_i(l').
inline Field compat_transform_semantic(const Field& dist, const Matrix& mu) {
  if (mu.cols != dist.channels) throw input_error("compatibility matrix does not match channels");
  Field out(dist.height, dist.width, mu.rows);
  for (int i = 0; i < dist.pixels(); ++i) {
    auto in = dist.row(i);
    auto o = out.row(i);
    for (int l = 0; l < mu.rows; ++l) {
      double s = 0.0;
      for (int k = 0; k < mu.cols; ++k) s += mu(l, k) * in[static_cast<std::size_t>(k)];
      o[static_cast<std::size_t>(l)] = s;
    }
  }
  return out;
}

/// out_i(t) = sum_{t' != t} dist_i(t').
inline Field iverson_transform(const Field& dist) {
  Field out(dist.height, dist.width, dist.channels);
  for (int i = 0; i < dist.pixels(); ++i) {
    double total = 0.0;
    for (double v : dist.row(i)) total += v;
    for (int c = 0; c < dist.channels; ++c) out.at(i, c) = total - dist.at(i, c);
  }
  return out;
}

/// Everything inference needs about one image: schema, parameters, and the
/// three kernels bound to the image features.
struct Model {
  LabelSchema schema;
  BcrfParams params;
  FeatureSet features;
  DenseKernel semantic_kernel;
  DenseKernel instance_kernel;
  DenseKernel cross_kernel;
  Matrix cross_cost;  // F(l, t)

  Model() = default;
  Model(LabelSchema s, BcrfParams p, FeatureSet f)
      : schema(std::move(s)), params(std::move(p)), features(std::move(f)) {
    rebind();
  }

  static Model from_image(LabelSchema s, BcrfParams p, const Field& image) {
    return Model(std::move(s), std::move(p), build_feature_set(image));
  }

  // Recompute derived state after editing `params`.
  void rebind() {
    semantic_kernel = DenseKernel(features, params.kernel_semantic);
    instance_kernel = DenseKernel(features, params.kernel_instance);
    cross_kernel = DenseKernel(features, params.kernel_cross);
    refresh_compat();
  }
  // Cheaper variant when only mu/eta/weights changed.
  void refresh_compat() { cross_cost = cross_cost_matrix(schema, params.eta); }

  int pixels() const { return features.pixels(); }
  int height() const { return features.spatial.values.height; }
  int width() const { return features.spatial.values.width; }
};

inline void check_unaries(const Model& m, const Field& phi, const Field& psi) {
  if (phi.pixels() != m.pixels() || phi.height != m.height())
    throw input_error("semantic unary shape does not match image");
  if (psi.pixels() != m.pixels() || psi.height != m.height())
    throw input_error("instance unary shape does not match image");
  if (phi.channels != m.schema.num_labels())
    throw input_error("semantic unary has " + std::to_string(phi.channels) + " channels, schema has " +
                      std::to_string(m.schema.num_labels()) + " labels");
  if (psi.channels != m.schema.instance_channels())
    throw input_error("instance unary has " + std::to_string(psi.channels) + " channels, expected " +
                      std::to_string(m.schema.instance_channels()));
}

/// Energy of a discrete labeling. Pairwise sums run over unordered pairs
/// i < j in row-major order; the cross pairwise term counts both orientations.
inline double total_energy(const Labeling& x, const Labeling& z, const Field& phi, const Field& psi,
                           const Model& m) {
  check_unaries(m, phi, psi);
  const int n = m.pixels();
  if (static_cast<int>(x.size()) != n || static_cast<int>(z.size()) != n)
    throw input_error("labeling size does not match image");
  const int L = m.schema.num_labels();
  const int T = m.schema.instance_channels();
  for (int i = 0; i < n; ++i) {
    if (x[static_cast<std::size_t>(i)] < 0 || x[static_cast<std::size_t>(i)] >= L)
      throw input_error("semantic label out of range at pixel " + std::to_string(i));
    if (z[static_cast<std::size_t>(i)] < 0 || z[static_cast<std::size_t>(i)] >= T)
      throw input_error("instance label out of range at pixel " + std::to_string(i));
  }
  const auto& w = m.params.weights;
  const Matrix& mu = m.params.mu;
  const Matrix& f = m.cross_cost;

  double unary_sem = 0.0, unary_inst = 0.0, cross_unary = 0.0;
  for (int i = 0; i < n; ++i) {
    const int xi = x[static_cast<std::size_t>(i)], zi = z[static_cast<std::size_t>(i)];
    unary_sem += phi.at(i, xi);
    unary_inst += psi.at(i, zi);
    cross_unary += f(xi, zi);
  }
  double pair_sem = 0.0, pair_inst = 0.0, cross_pair = 0.0;
  for (int i = 0; i < n; ++i) {
    const int xi = x[static_cast<std::size_t>(i)], zi = z[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j) {
      const int xj = x[static_cast<std::size_t>(j)], zj = z[static_cast<std::size_t>(j)];
      if (mu(xi, xj) != 0.0) pair_sem += mu(xi, xj) * m.semantic_kernel(i, j);
      if (zi != zj) pair_inst += m.instance_kernel(i, j);
      const double c = f(xi, zj) + f(xj, zi);
      if (c != 0.0) cross_pair += c * m.cross_kernel(i, j);
    }
  }
  return w[kSemanticUnary] * unary_sem + w[kSemanticPairwise] * pair_sem + w[kInstanceUnary] * unary_inst +
         w[kInstancePairwise] * pair_inst + w[kCrossUnary] * cross_unary + w[kCrossPairwise] * cross_pair;
}

}  // namespace bcrf
