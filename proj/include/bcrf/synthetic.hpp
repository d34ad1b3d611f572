#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bcrf/core_types.hpp"
#include "bcrf/energy.hpp"
#include "bcrf/panoptic.hpp"

namespace bcrf::synthetic {

// Seeded generator with distribution code that does not depend on the
// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

/// A complete inference instance plus ground truth where it exists.
struct Problem {
  Field image;
  Field phi;
  Field psi;
  LabelSchema schema;
  BcrfParams params;
  std::vector<Detection> detections;
  Labeling gt_semantic;
  Labeling gt_instance;
};

inline LabelSchema make_schema(int n_stuff, int n_things, std::vector<int> instance_class = {}) {
  LabelSchema s;
  for (int k = 0; k < n_stuff; ++k) {
    s.label_names.push_back("stuff" + std::to_string(k));
    s.stuff.push_back(k);
  }
  for (int k = 0; k < n_things; ++k) {
    s.label_names.push_back("thing" + std::to_string(k));
    s.things.push_back(n_stuff + k);
  }
  s.instance_class = std::move(instance_class);
  return s;
}

// Row-wise softmax of scaled gaussian noise, then -log.
inline Field random_unary(Rng& rng, int h, int w, int c, double scale) {
  Field f(h, w, c);
  for (int i = 0; i < f.pixels(); ++i) {
    double mx = -INFINITY;
    std::vector<double> z(static_cast<std::size_t>(c));
    for (auto& v : z) {
      v = scale * rng.normal();
      mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (auto& v : z) sum += std::exp(v - mx);
    for (int k = 0; k < c; ++k) f.at(i, k) = -(z[static_cast<std::size_t>(k)] - mx - std::log(sum));
  }
  return f;
}

inline Field random_image(Rng& rng, int h, int w) {
  Field img(h, w, 3);
  for (double& v : img.data) v = std::floor(rng.uniform(0.0, 256.0));
  return img;
}

inline KernelSpec random_kernel(Rng& rng) {
  KernelSpec k;
  k.components.push_back({FeatureKind::spatial, rng.uniform(0.2, 1.5),
                          {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)}});
  if (rng.uniform() < 0.7) {
    std::vector<double> bw{rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0)};
    for (int c = 0; c < 3; ++c) bw.push_back(rng.uniform(20.0, 120.0));
    k.components.push_back({FeatureKind::bilateral, rng.uniform(0.2, 1.5), bw});
  }
  return k;
}

inline Matrix random_compat(Rng& rng, int n, double lo, double hi) {
  Matrix m(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) m(a, b) = a == b ? 0.0 : rng.uniform(lo, hi);
  return m;
}

inline BcrfParams random_params(Rng& rng, const LabelSchema& schema) {
  BcrfParams p;
  for (double& w : p.weights) w = rng.uniform(0.3, 1.5);
  p.kernel_semantic = random_kernel(rng);
  p.kernel_instance = random_kernel(rng);
  p.kernel_cross = random_kernel(rng);
  p.mu = random_compat(rng, schema.num_labels(), 0.2, 2.0);
  p.eta = random_compat(rng, schema.eta_size(), 0.2, 2.0);
  return p;
}

/// Unstructured instance: random image, unaries, schema and parameters.
/// `labels` and `instance_channels` include inst0 in the latter.
inline Problem random_problem(std::uint64_t seed, int h, int w, int labels, int instance_channels,
                              double unary_scale = 1.5) {
  Rng rng(seed);
  Problem p;
  const int n_things = std::max(1, labels / 2);
  const int n_stuff = labels - n_things;
  std::vector<int> cls;
  for (int t = 1; t < instance_channels; ++t) cls.push_back(n_stuff + rng.integer(0, n_things - 1));
  p.schema = make_schema(n_stuff, n_things, cls);
  p.image = random_image(rng, h, w);
  p.phi = random_unary(rng, h, w, labels, unary_scale);
  p.psi = random_unary(rng, h, w, instance_channels, unary_scale);
  p.params = random_params(rng, p.schema);
  p.gt_semantic.resize(static_cast<std::size_t>(h * w));
  p.gt_instance.resize(static_cast<std::size_t>(h * w));
  for (auto& g : p.gt_semantic) g = rng.integer(0, labels - 1);
  for (auto& g : p.gt_instance) g = rng.integer(0, instance_channels - 1);
  return p;
}

struct SceneOptions {
  int height = 16;
  int width = 16;
  int objects = 2;
  int min_size = 4;
  int max_size = 7;
  double semantic_confidence = 0.7;  // mean probability on the true label
  double semantic_noise = 0.6;       // logit noise
  double color_noise = 10.0;
  double detection_score = 0.9;
  bool corrupt_first_object = false;  // first object's semantics lean to the background
  double corruption_mass = 0.55;      // background probability inside a corrupted object
};

/// Structured scene: two stuff bands (top/bottom) with rectangular thing
/// objects, noisy semantic probabilities and clean detections of every
/// object. Labels: 0 = sky, 1 = road (stuff), 2 = person, 3 = car (things).
inline Problem scene_problem(std::uint64_t seed, const SceneOptions& opt = {}) {
  Rng rng(seed);
  const int h = opt.height, w = opt.width, n = h * w;
  Problem p;
  p.schema.label_names = {"sky", "road", "person", "car"};
  p.schema.stuff = {0, 1};
  p.schema.things = {2, 3};
  const double base_colors[4][3] = {{90, 150, 230}, {110, 110, 110}, {220, 60, 50}, {40, 200, 80}};

  p.gt_semantic.assign(static_cast<std::size_t>(n), 0);
  p.gt_instance.assign(static_cast<std::size_t>(n), 0);
  const int horizon = rng.integer(h / 3, 2 * h / 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) p.gt_semantic[static_cast<std::size_t>(y * w + x)] = y < horizon ? 0 : 1;

  for (int k = 0; k < opt.objects; ++k) {
    const int cls = 2 + (k % 2);
    const int oh = rng.integer(opt.min_size, opt.max_size), ow = rng.integer(opt.min_size, opt.max_size);
    const int y0 = rng.integer(0, h - oh), x0 = rng.integer(0, w - ow);
    Detection det;
    det.class_id = cls;
    det.score = std::min(1.0, opt.detection_score + rng.uniform(-0.05, 0.05));
    det.mask.assign(static_cast<std::size_t>(n), 0);
    for (int y = y0; y < y0 + oh; ++y)
      for (int x = x0; x < x0 + ow; ++x) {
        const auto i = static_cast<std::size_t>(y * w + x);
        p.gt_semantic[i] = cls;
        p.gt_instance[i] = k + 1;
      }
    p.detections.push_back(std::move(det));
  }
  // masks from the final layout so occluded parts belong to the front object
  for (int k = 0; k < opt.objects; ++k)
    for (int i = 0; i < n; ++i) p.detections[static_cast<std::size_t>(k)].mask[static_cast<std::size_t>(i)] =
        p.gt_instance[static_cast<std::size_t>(i)] == k + 1;
  // drop objects that ended up fully occluded
  {
    std::vector<Detection> kept;
    Labeling remap(static_cast<std::size_t>(opt.objects) + 1, 0);
    for (int k = 0; k < opt.objects; ++k) {
      const auto& d = p.detections[static_cast<std::size_t>(k)];
      if (std::count(d.mask.begin(), d.mask.end(), 1) == 0) continue;
      kept.push_back(d);
      remap[static_cast<std::size_t>(k) + 1] = static_cast<int>(kept.size());
    }
    for (auto& g : p.gt_instance) g = remap[static_cast<std::size_t>(g)];
    p.detections = std::move(kept);
  }

  p.image = Field(h, w, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      p.image.at(i, c) = std::clamp(
          std::round(base_colors[p.gt_semantic[static_cast<std::size_t>(i)]][c] + opt.color_noise * rng.normal()), 0.0,
          255.0);

  Field probs(h, w, 4);
  for (int i = 0; i < n; ++i) {
    const int g = p.gt_semantic[static_cast<std::size_t>(i)];
    const bool corrupted = opt.corrupt_first_object && p.gt_instance[static_cast<std::size_t>(i)] == 1;
    double z[4];
    double mx = -INFINITY;
    for (int l = 0; l < 4; ++l) {
      z[l] = opt.semantic_noise * rng.normal();
      mx = std::max(mx, z[l]);
    }
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - mx);
      sum += v;
    }
    const double conf = opt.semantic_confidence;
    if (!corrupted) {
      for (int l = 0; l < 4; ++l) probs.at(i, l) = (l == g ? conf : 0.0) + (1.0 - conf) * z[l] / sum;
    } else {
      // most mass on the stuff label around the object, the true class second
      const int bg = (i / w) < horizon ? 0 : 1;
      const double rest = 1.0 - opt.corruption_mass;
      for (int l = 0; l < 4; ++l)
        probs.at(i, l) = (l == bg ? opt.corruption_mass : 0.0) + (l == g ? 0.7 * rest : 0.0) + 0.3 * rest * z[l] / sum;
    }
  }
  p.phi = semantic_unary_from_probs(probs);
  const auto iu = instance_unary_from_detections(p.detections, h, w);
  p.psi = iu.psi;
  p.schema.instance_class = iu.instance_class;
  p.params = default_params(p.schema);
  return p;
}

}  // namespace bcrf::synthetic
