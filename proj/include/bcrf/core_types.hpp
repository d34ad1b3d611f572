#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcrf {

// Bad user-supplied data (CLI exit code 1).
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant broke (CLI exit code 2).
class invariant_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Pseudo-class of inst0.
inline constexpr int kNullClass = -1;

/// Semantic label set partitioned into stuff and things, plus the instance
/// label set. Instance 0 is inst0 (class null); instances 1..N map to things.
struct LabelSchema {
  std::vector<std::string> label_names;  // dense ids 0..L-1
  std::vector<int> stuff;
  std::vector<int> things;
  std::vector<int> instance_class;  // instance_class[t-1] is class of inst_t

  int num_labels() const { return static_cast<int>(label_names.size()); }
  int num_instances() const { return static_cast<int>(instance_class.size()); }
  // Size of the instance label axis, including inst0.
  int instance_channels() const { return num_instances() + 1; }

  bool is_thing(int label) const {
    return std::find(things.begin(), things.end(), label) != things.end();
  }
  bool is_stuff(int label) const {
    return std::find(stuff.begin(), stuff.end(), label) != stuff.end();
  }

  int class_of_instance(int t) const {
    return t == 0 ? kNullClass : instance_class.at(static_cast<std::size_t>(t - 1));
  }

  // Row/column of a class (thing label or null) in the eta matrix: null is 0,
  // things follow in the order of `things`.
  int eta_index(int cls) const {
    if (cls == kNullClass) return 0;
    auto it = std::find(things.begin(), things.end(), cls);
    if (it == things.end()) throw input_error("label " + std::to_string(cls) + " is not a thing class");
    return 1 + static_cast<int>(it - things.begin());
  }
  int eta_size() const { return static_cast<int>(things.size()) + 1; }
};

inline void validate_schema(const LabelSchema& schema) {
  const int L = schema.num_labels();
  if (L == 0) throw input_error("schema has no semantic labels");
  std::vector<int> seen(static_cast<std::size_t>(L), 0);
  auto mark = [&](const std::vector<int>& set, const char* which) {
    for (int l : set) {
      if (l < 0 || l >= L)
        throw input_error(std::string(which) + " label id " + std::to_string(l) + " out of range");
      if (seen[static_cast<std::size_t>(l)]++)
        throw input_error("label '" + schema.label_names[static_cast<std::size_t>(l)] +
                          "' appears more than once across stuff/things");
    }
  };
  mark(schema.stuff, "stuff");
  mark(schema.things, "things");
  for (int l = 0; l < L; ++l)
    if (!seen[static_cast<std::size_t>(l)])
      throw input_error("label '" + schema.label_names[static_cast<std::size_t>(l)] +
                        "' is neither stuff nor thing");
  for (std::size_t t = 0; t < schema.instance_class.size(); ++t) {
    int c = schema.instance_class[t];
    if (!schema.is_thing(c))
      throw input_error("instance " + std::to_string(t + 1) + " has class " + std::to_string(c) +
                        " which is not a thing class");
  }
}

/// H x W x C real field, pixel-major and channel-minor.
struct Field {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Field() = default;
  Field(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c),
             fill) {
    if (h < 0 || w < 0 || c < 0) throw input_error("negative field dimension");
  }

  int pixels() const { return height * width; }
  bool same_shape(const Field& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  double& at(int pixel, int c) { return data[static_cast<std::size_t>(pixel) * channels + c]; }
  double at(int pixel, int c) const { return data[static_cast<std::size_t>(pixel) * channels + c]; }

  std::span<double> row(int pixel) {
    return {data.data() + static_cast<std::size_t>(pixel) * channels, static_cast<std::size_t>(channels)};
  }
  std::span<const double> row(int pixel) const {
    return {data.data() + static_cast<std::size_t>(pixel) * channels, static_cast<std::size_t>(channels)};
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Dense row-major matrix, used for the label compatibilities.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  // Zero diagonal, `cost` everywhere else.
  static Matrix potts(int n, double cost) {
    Matrix m(n, n, cost);
    for (int i = 0; i < n; ++i) m(i, i) = 0.0;
    return m;
  }
};

/// Factorized semantic (q) and instance (r) marginals.
struct MarginalPair {
  Field q;
  Field r;
};

// Largest deviation from the simplex over all pixel rows of a field.
inline double simplex_violation(const Field& f) {
  double worst = 0.0;
  for (int i = 0; i < f.pixels(); ++i) {
    double sum = 0.0;
    for (double v : f.row(i)) {
      if (!(v >= 0.0)) return INFINITY;
      sum += v;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

inline bool satisfies_simplex(const MarginalPair& m, double tol = 1e-6) {
  return simplex_violation(m.q) <= tol && simplex_violation(m.r) <= tol;
}

enum class FeatureKind { spatial, bilateral };

inline int feature_dims(FeatureKind kind) { return kind == FeatureKind::spatial ? 2 : 5; }

/// One Gaussian component of a similarity kernel with diagonal bandwidths.
struct KernelComponent {
  FeatureKind kind = FeatureKind::spatial;
  double weight = 1.0;
  std::vector<double> bandwidths;  // one per feature dimension
};

struct KernelSpec {
  std::vector<KernelComponent> components;

  double total_weight() const {
    double s = 0.0;
    for (const auto& c : components) s += c.weight;
    return s;
  }
};

inline void validate_kernel(const KernelSpec& spec, const std::string& name) {
  for (const auto& c : spec.components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
      throw input_error("kernel " + name + ": component weight must be >= 0");
    if (static_cast<int>(c.bandwidths.size()) != feature_dims(c.kind))
      throw input_error("kernel " + name + ": expected " + std::to_string(feature_dims(c.kind)) +
                        " bandwidths");
    for (double s : c.bandwidths)
      if (!(s > 0.0) || !std::isfinite(s))
        throw input_error("kernel " + name + ": bandwidths must be > 0");
  }
}

// Order of the six energy terms.
enum Term : int {
  kSemanticUnary = 0,
  kSemanticPairwise,
  kInstanceUnary,
  kInstancePairwise,
  kCrossUnary,
  kCrossPairwise,
  kNumTerms
};

inline constexpr std::array<const char*, kNumTerms> kTermNames = {
    "semantic_unary", "semantic_pairwise", "instance_unary",
    "instance_pairwise", "cross_unary", "cross_pairwise"};

struct BcrfParams {
  std::array<double, kNumTerms> weights{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  KernelSpec kernel_semantic;  // Sim_Phi
  KernelSpec kernel_instance;  // Sim_Psi
  KernelSpec kernel_cross;     // Sim_Omega
  Matrix mu;                   // L x L
  Matrix eta;                  // (|things|+1) x (|things|+1), null first
  int iterations = 5;
  double damping = 1.0;
  double convergence_tol = 1e-4;

  double weight(Term t) const { return weights[static_cast<std::size_t>(t)]; }
};

inline KernelSpec default_kernel() {
  KernelSpec k;
  k.components.push_back({FeatureKind::spatial, 1.0, {1.0, 1.0}});
  k.components.push_back({FeatureKind::bilateral, 1.0, {3.0, 3.0, 20.0, 20.0, 20.0}});
  return k;
}

/// Defaults for a schema: unit term weights, Potts compatibilities with cost 1.
inline BcrfParams default_params(const LabelSchema& schema) {
  BcrfParams p;
  p.kernel_semantic = default_kernel();
  p.kernel_instance = default_kernel();
  p.kernel_cross = default_kernel();
  p.mu = Matrix::potts(schema.num_labels(), 1.0);
  p.eta = Matrix::potts(schema.eta_size(), 1.0);
  return p;
}

inline void validate_params(const BcrfParams& p, const LabelSchema& schema) {
  for (std::size_t k = 0; k < p.weights.size(); ++k)
    if (!(p.weights[k] >= 0.0) || !std::isfinite(p.weights[k]))
      throw input_error(std::string("term weight ") + kTermNames[k] + " must be >= 0");
  validate_kernel(p.kernel_semantic, "semantic");
  validate_kernel(p.kernel_instance, "instance");
  validate_kernel(p.kernel_cross, "cross");
  const int L = schema.num_labels();
  if (p.mu.rows != L || p.mu.cols != L)
    throw input_error("mu must be " + std::to_string(L) + "x" + std::to_string(L));
  for (int l = 0; l < L; ++l)
    if (p.mu(l, l) != 0.0) throw input_error("mu diagonal must be zero");
  const int E = schema.eta_size();
  if (p.eta.rows != E || p.eta.cols != E)
    throw input_error("eta must be " + std::to_string(E) + "x" + std::to_string(E));
  for (int a = 0; a < E; ++a)
    for (int b = 0; b < E; ++b) {
      if (a == b && p.eta(a, b) != 0.0) throw input_error("eta diagonal must be zero");
      if (a != b && !(p.eta(a, b) >= 0.0 && std::isfinite(p.eta(a, b))))
        throw input_error("eta off-diagonal entries must be >= 0");
    }
  for (double v : p.mu.data)
    if (!std::isfinite(v)) throw input_error("mu entries must be finite");
  if (p.iterations < 0) throw input_error("iterations must be >= 0");
  if (!(p.damping > 0.0 && p.damping <= 1.0)) throw input_error("damping must be in (0, 1]");
  if (!(p.convergence_tol > 0.0)) throw input_error("convergence_tol must be > 0");
}

/// Discrete per-pixel labelings.
using Labeling = std::vector<int>;

struct PanopticMap {
  int height = 0;
  int width = 0;
  Labeling semantic;  // -1 marks void (ground truth only)
  Labeling instance;
};

}  // namespace bcrf
