#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bcrf/core_types.hpp"

namespace bcrf {

/// Per-pixel feature vectors of one kind: (x, y) or (x, y, r, g, b).
struct FeatureField {
  FeatureKind kind = FeatureKind::spatial;
  Field values;  // channels == feature_dims(kind)
};

struct FeatureSet {
  FeatureField spatial;
  FeatureField bilateral;

  const FeatureField& get(FeatureKind kind) const {
    return kind == FeatureKind::spatial ? spatial : bilateral;
  }
  int pixels() const { return spatial.values.pixels(); }
};

// `image` is an H x W x 3 field with raw 0..255 colors.
inline FeatureField build_features(const Field& image, FeatureKind kind) {
  if (image.height <= 0 || image.width <= 0) throw input_error("image dimensions must be positive");
  if (image.channels != 3) throw input_error("image must have 3 color channels");
  FeatureField out{kind, Field(image.height, image.width, feature_dims(kind))};
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int i = y * image.width + x;
      out.values.at(i, 0) = x;
      out.values.at(i, 1) = y;
      if (kind == FeatureKind::bilateral)
        for (int c = 0; c < 3; ++c) out.values.at(i, 2 + c) = image.at(i, c);
    }
  return out;
}

inline FeatureSet build_feature_set(const Field& image) {
  return {build_features(image, FeatureKind::spatial), build_features(image, FeatureKind::bilateral)};
}

/// Sum of Gaussian components: sum_m w_m exp(-|f_i - f_j|^2_{sigma_m} / 2).
inline double similarity(int i, int j, const FeatureSet& feats, const KernelSpec& spec) {
  double s = 0.0;
  for (const auto& comp : spec.components) {
    const Field& f = feats.get(comp.kind).values;
    double d2 = 0.0;
    for (int d = 0; d < f.channels; ++d) {
      const double diff = (f.at(i, d) - f.at(j, d)) / comp.bandwidths[static_cast<std::size_t>(d)];
      d2 += diff * diff;
    }
    s += comp.weight * std::exp(-0.5 * d2);
  }
  return s;
}

/// A kernel bound to one image. Features are pre-divided by their bandwidths,
/// and for small images the strict upper triangle of pair weights is cached.
class DenseKernel {
 public:
  static constexpr std::size_t kMaxCachedPairs = std::size_t{1} << 22;

  DenseKernel() = default;
  DenseKernel(const FeatureSet& feats, const KernelSpec& spec) : n_(feats.pixels()) {
    for (const auto& comp : spec.components) {
      if (comp.weight == 0.0) continue;
      const Field& f = feats.get(comp.kind).values;
      Scaled sc{comp.weight, f.channels, std::vector<double>(f.data.size())};
      for (int i = 0; i < n_; ++i)
        for (int d = 0; d < f.channels; ++d)
          sc.coords[static_cast<std::size_t>(i) * f.channels + d] =
              f.at(i, d) / comp.bandwidths[static_cast<std::size_t>(d)];
      comps_.push_back(std::move(sc));
    }
    const std::size_t pairs = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_ > 0 ? n_ - 1 : 0) / 2;
    if (pairs <= kMaxCachedPairs) {
      cache_.reserve(pairs);
      for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) cache_.push_back(compute(i, j));
      cached_ = true;
    }
  }

  int pixels() const { return n_; }
  bool empty() const { return comps_.empty(); }

  double operator()(int i, int j) const {
    if (i == j) {
      double s = 0.0;
      for (const auto& c : comps_) s += c.weight;
      return s;
    }
    if (cached_) {
      if (i > j) std::swap(i, j);
      return cache_[pair_index(i, j)];
    }
    return compute(i, j);
  }

  /// out_i(c) = sum_{j != i} Sim(i, j) values_j(c).
  Field message_pass(const Field& values) const {
    if (values.pixels() != n_) throw input_error("message_pass: field size does not match kernel");
    Field out(values.height, values.width, values.channels);
    if (comps_.empty() || n_ < 2) return out;
    const int C = values.channels;
    std::size_t k = 0;
    for (int i = 0; i < n_; ++i) {
      double* oi = out.data.data() + static_cast<std::size_t>(i) * C;
      const double* vi = values.data.data() + static_cast<std::size_t>(i) * C;
      for (int j = i + 1; j < n_; ++j) {
        const double s = cached_ ? cache_[k++] : compute(i, j);
        double* oj = out.data.data() + static_cast<std::size_t>(j) * C;
        const double* vj = values.data.data() + static_cast<std::size_t>(j) * C;
        for (int c = 0; c < C; ++c) {
          oi[c] += s * vj[c];
          oj[c] += s * vi[c];
        }
      }
    }
    return out;
  }

  /// out_i(c) = sum_{j > i} Sim(i, j) values_j(c); pixel order is row-major.
  Field message_pass_upper(const Field& values) const {
    if (values.pixels() != n_) throw input_error("message_pass: field size does not match kernel");
    Field out(values.height, values.width, values.channels);
    if (comps_.empty() || n_ < 2) return out;
    const int C = values.channels;
    std::size_t k = 0;
    for (int i = 0; i < n_; ++i) {
      double* oi = out.data.data() + static_cast<std::size_t>(i) * C;
      for (int j = i + 1; j < n_; ++j) {
        const double s = cached_ ? cache_[k++] : compute(i, j);
        const double* vj = values.data.data() + static_cast<std::size_t>(j) * C;
        for (int c = 0; c < C; ++c) oi[c] += s * vj[c];
      }
    }
    return out;
  }

 private:
  struct Scaled {
    double weight;
    int dims;
    std::vector<double> coords;
  };

  std::size_t pair_index(int i, int j) const {
    // row i of the strict upper triangle starts after sum_{r<i} (n-1-r) entries
    const std::size_t ii = static_cast<std::size_t>(i);
    const std::size_t n = static_cast<std::size_t>(n_);
    return ii * (2 * n - ii - 1) / 2 + static_cast<std::size_t>(j - i - 1);
  }

  double compute(int i, int j) const {
    double s = 0.0;
    for (const auto& c : comps_) {
      const double* a = c.coords.data() + static_cast<std::size_t>(i) * c.dims;
      const double* b = c.coords.data() + static_cast<std::size_t>(j) * c.dims;
      double d2 = 0.0;
      for (int d = 0; d < c.dims; ++d) {
        const double diff = a[d] - b[d];
        d2 += diff * diff;
      }
      s += c.weight * std::exp(-0.5 * d2);
    }
    return s;
  }

  int n_ = 0;
  std::vector<Scaled> comps_;
  std::vector<double> cache_;
  bool cached_ = false;
};

inline Field message_pass(const Field& values, const FeatureSet& feats, const KernelSpec& spec) {
  return DenseKernel(feats, spec).message_pass(values);
}

}  // namespace bcrf
