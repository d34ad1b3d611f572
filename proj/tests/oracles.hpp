#pragma once

// Reference implementations used by the tests. They work from raw pixels and
// parameters with plain nested loops and share no code with the library
// beyond the data containers.

#include <cmath>
#include <cstdint>
#include <vector>

#include "bcrf/bcrf.hpp"

namespace oracle {

using bcrf::Field;
using bcrf::KernelSpec;
using bcrf::LabelSchema;
using bcrf::Labeling;
using bcrf::Matrix;

// Feature d of pixel `i` for a kernel component: x, y, then raw colors.
inline double feature(const Field& img, int i, int d) {
  const int y = i / img.width, x = i % img.width;
  if (d == 0) return x;
  if (d == 1) return y;
  return img.data[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(d - 2)];
}

inline double sim(const Field& img, int i, int j, const KernelSpec& spec) {
  double total = 0.0;
  for (const auto& c : spec.components) {
    const int dims = c.kind == bcrf::FeatureKind::spatial ? 2 : 5;
    double e = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double u = (feature(img, i, d) - feature(img, j, d)) / c.bandwidths[static_cast<std::size_t>(d)];
      e += u * u;
    }
    total += c.weight * std::exp(-e / 2.0);
  }
  return total;
}

// out_i = sum over ordered pairs (i, j), j != i.
inline Field message(const Field& img, const Field& v, const KernelSpec& spec) {
  Field out(v.height, v.width, v.channels);
  const int n = v.height * v.width;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double s = sim(img, i, j, spec);
      for (int c = 0; c < v.channels; ++c)
        out.data[static_cast<std::size_t>(i * v.channels + c)] += s * v.data[static_cast<std::size_t>(j * v.channels + c)];
    }
  return out;
}

inline bool in(const std::vector<int>& s, int v) {
  for (int e : s)
    if (e == v) return true;
  return false;
}

// Class of instance channel t; -1 for inst0.
inline int cls(const LabelSchema& s, int t) { return t == 0 ? -1 : s.instance_class[static_cast<std::size_t>(t - 1)]; }

// eta row/column: null first, then things in listed order.
inline int eta_pos(const LabelSchema& s, int c) {
  if (c < 0) return 0;
  for (std::size_t k = 0; k < s.things.size(); ++k)
    if (s.things[k] == c) return static_cast<int>(k) + 1;
  return -100;
}

inline double f(const LabelSchema& s, const Matrix& eta, int l, int t) {
  const int c = cls(s, t);
  if (l == c) return 0.0;
  if (in(s.stuff, l) && c < 0) return 0.0;
  const int row = in(s.stuff, l) ? 0 : eta_pos(s, l);
  return eta.data[static_cast<std::size_t>(row * eta.cols + eta_pos(s, c))];
}

struct Terms {
  double sem_unary = 0, sem_pair = 0, inst_unary = 0, inst_pair = 0, cross_unary = 0, cross_pair = 0;
  double total(const std::array<double, 6>& w) const {
    return w[0] * sem_unary + w[1] * sem_pair + w[2] * inst_unary + w[3] * inst_pair + w[4] * cross_unary +
           w[5] * cross_pair;
  }
};

// Energy summands of a labeling. Semantic and instance smoothness sum over
// i < j; the cross pairwise term sums over all ordered pairs.
inline Terms energy_terms(const Labeling& x, const Labeling& z, const Field& phi, const Field& psi, const Field& img,
                          const LabelSchema& s, const bcrf::BcrfParams& p) {
  Terms e;
  const int n = phi.height * phi.width;
  const int L = phi.channels, T = psi.channels;
  for (int i = 0; i < n; ++i) {
    const int xi = x[static_cast<std::size_t>(i)], zi = z[static_cast<std::size_t>(i)];
    e.sem_unary += phi.data[static_cast<std::size_t>(i * L + xi)];
    e.inst_unary += psi.data[static_cast<std::size_t>(i * T + zi)];
    e.cross_unary += f(s, p.eta, xi, zi);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const int xj = x[static_cast<std::size_t>(j)], zj = z[static_cast<std::size_t>(j)];
      if (j > i) {
        e.sem_pair += p.mu.data[static_cast<std::size_t>(xi * L + xj)] * sim(img, i, j, p.kernel_semantic);
        e.inst_pair += (zi != zj ? 1.0 : 0.0) * sim(img, i, j, p.kernel_instance);
      }
      e.cross_pair += f(s, p.eta, xi, zj) * sim(img, i, j, p.kernel_cross);
    }
  }
  return e;
}

inline double energy(const Labeling& x, const Labeling& z, const Field& phi, const Field& psi, const Field& img,
                     const LabelSchema& s, const bcrf::BcrfParams& p) {
  return energy_terms(x, z, phi, psi, img, s, p).total(p.weights);
}

// Calls visit(x, z) for every joint assignment.
template <typename V>
void enumerate(int n, int L, int T, V&& visit) {
  std::int64_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::int64_t>(L) * T;
  Labeling x(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n));
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t c = code;
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = static_cast<int>(c % L);
      c /= L;
      z[static_cast<std::size_t>(i)] = static_cast<int>(c % T);
      c /= T;
    }
    visit(x, z);
  }
}

// sum_{x,z} q(x,z) E(x,z) - H(Q) - H(R) by enumeration.
inline double free_energy(const bcrf::MarginalPair& m, const Field& phi, const Field& psi, const Field& img,
                          const LabelSchema& s, const bcrf::BcrfParams& p) {
  const int n = phi.height * phi.width, L = phi.channels, T = psi.channels;
  double expected = 0.0;
  enumerate(n, L, T, [&](const Labeling& x, const Labeling& z) {
    double q = 1.0;
    for (int i = 0; i < n; ++i)
      q *= m.q.data[static_cast<std::size_t>(i * L + x[static_cast<std::size_t>(i)])] *
           m.r.data[static_cast<std::size_t>(i * T + z[static_cast<std::size_t>(i)])];
    if (q > 0.0) expected += q * energy(x, z, phi, psi, img, s, p);
  });
  double neg_h = 0.0;
  for (double v : m.q.data)
    if (v > 0) neg_h += v * std::log(v);
  for (double v : m.r.data)
    if (v > 0) neg_h += v * std::log(v);
  return expected + neg_h;
}

// Literal reading of one parallel update, one line at a time, with the
// accumulators starting at zero.
inline bcrf::MarginalPair algorithm_step(const bcrf::MarginalPair& st, const Field& phi, const Field& psi,
                                         const Field& img, const LabelSchema& s, const bcrf::BcrfParams& p) {
  const int n = phi.height * phi.width, L = phi.channels, T = psi.channels;
  const auto& w = p.weights;
  auto Q = [&](int j, int l) { return st.q.data[static_cast<std::size_t>(j * L + l)]; };
  auto R = [&](int j, int t) { return st.r.data[static_cast<std::size_t>(j * T + t)]; };
  std::vector<double> qp(static_cast<std::size_t>(n * L), 0.0), rp(static_cast<std::size_t>(n * T), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      double& a = qp[static_cast<std::size_t>(i * L + l)];
      a -= w[0] * phi.data[static_cast<std::size_t>(i * L + l)];
      for (int j = 0; j < n; ++j)
        if (j != i)
          for (int l2 = 0; l2 < L; ++l2)
            a -= w[1] * p.mu.data[static_cast<std::size_t>(l * L + l2)] * sim(img, i, j, p.kernel_semantic) * Q(j, l2);
      for (int t = 0; t < T; ++t) a -= w[4] * f(s, p.eta, l, t) * R(i, t);
      for (int j = 0; j < n; ++j)
        if (j != i)
          for (int t = 0; t < T; ++t) a -= w[5] * f(s, p.eta, l, t) * sim(img, i, j, p.kernel_cross) * R(j, t);
    }
    for (int t = 0; t < T; ++t) {
      double& b = rp[static_cast<std::size_t>(i * T + t)];
      b -= w[2] * psi.data[static_cast<std::size_t>(i * T + t)];
      for (int j = 0; j < n; ++j)
        if (j != i)
          for (int t2 = 0; t2 < T; ++t2)
            b -= w[3] * (t != t2 ? 1.0 : 0.0) * sim(img, i, j, p.kernel_instance) * R(j, t2);
      for (int l = 0; l < L; ++l) b -= w[4] * f(s, p.eta, l, t) * Q(i, l);
      for (int j = 0; j < n; ++j)
        if (j != i)
          for (int l = 0; l < L; ++l) b -= w[5] * f(s, p.eta, l, t) * sim(img, i, j, p.kernel_cross) * Q(j, l);
    }
  }
  bcrf::MarginalPair out{Field(phi.height, phi.width, L), Field(psi.height, psi.width, T)};
  for (int i = 0; i < n; ++i) {
    double zq = 0.0, zr = 0.0;
    for (int l = 0; l < L; ++l) zq += std::exp(qp[static_cast<std::size_t>(i * L + l)]);
    for (int t = 0; t < T; ++t) zr += std::exp(rp[static_cast<std::size_t>(i * T + t)]);
    for (int l = 0; l < L; ++l) out.q.data[static_cast<std::size_t>(i * L + l)] = std::exp(qp[static_cast<std::size_t>(i * L + l)]) / zq;
    for (int t = 0; t < T; ++t) out.r.data[static_cast<std::size_t>(i * T + t)] = std::exp(rp[static_cast<std::size_t>(i * T + t)]) / zr;
  }
  return out;
}

// Dense-CRF mean field on the semantic half alone.
inline std::vector<Field> semantic_only(const Field& phi, const bcrf::DenseKernel& k, const bcrf::BcrfParams& p) {
  const double wu = p.weights[0], wp = p.weights[1];
  std::vector<Field> seq{bcrf::softmax_rows(phi, -wu)};
  for (int it = 0; it < p.iterations; ++it) {
    const Field smooth = bcrf::compat_transform_semantic(k.message_pass(seq.back()), p.mu);
    Field score(phi.height, phi.width, phi.channels);
    for (std::size_t e = 0; e < score.data.size(); ++e) score.data[e] = -wu * phi.data[e] - wp * smooth.data[e];
    seq.push_back(bcrf::damp(bcrf::softmax_rows(score), seq.back(), p.damping));
  }
  return seq;
}

// Instance half alone: unary plus Iverson smoothness.
inline std::vector<Field> instance_only(const Field& psi, const bcrf::DenseKernel& k, const bcrf::BcrfParams& p) {
  const double wu = p.weights[2], wp = p.weights[3];
  std::vector<Field> seq{bcrf::softmax_rows(psi, -wu)};
  for (int it = 0; it < p.iterations; ++it) {
    const Field smooth = bcrf::iverson_transform(k.message_pass(seq.back()));
    Field score(psi.height, psi.width, psi.channels);
    for (std::size_t e = 0; e < score.data.size(); ++e) score.data[e] = -wu * psi.data[e] - wp * smooth.data[e];
    seq.push_back(bcrf::damp(bcrf::softmax_rows(score), seq.back(), p.damping));
  }
  return seq;
}

inline double max_diff(const Field& a, const Field& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) d = std::max(d, std::abs(a.data[k] - b.data[k]));
  return d;
}

}  // namespace oracle
