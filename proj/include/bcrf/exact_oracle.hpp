#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bcrf/core_types.hpp"
#include "bcrf/energy.hpp"

namespace bcrf {

// Exhaustive enumeration over L^N x T^N assignments. For tiny instances only.
inline constexpr double kMaxAssignments = 1e7;

inline double assignment_count(const Model& m) {
  const double n = m.pixels();
  return std::pow(static_cast<double>(m.schema.num_labels()), n) *
         std::pow(static_cast<double>(m.schema.instance_channels()), n);
}

inline void check_oracle_size(const Model& m) {
  const double count = assignment_count(m);
  if (count > kMaxAssignments)
    throw input_error("instance too large for exhaustive enumeration: " + std::to_string(m.pixels()) +
                      " pixels, L=" + std::to_string(m.schema.num_labels()) +
                      ", T=" + std::to_string(m.schema.instance_channels()) + " gives " +
                      std::to_string(count) + " assignments (limit 1e7)");
}

namespace detail {

// Visits every (x, z) in lexicographic order of the digit string
// x_0..x_{N-1} z_0..z_{N-1}, with x_0 most significant.
template <typename Visit>
void for_each_assignment(int n, int L, int T, Visit&& visit) {
  Labeling x(static_cast<std::size_t>(n), 0), z(static_cast<std::size_t>(n), 0);
  while (true) {
    visit(x, z);
    int k = 2 * n - 1;
    for (; k >= 0; --k) {
      int& digit = k < n ? x[static_cast<std::size_t>(k)] : z[static_cast<std::size_t>(k - n)];
      const int radix = k < n ? L : T;
      if (++digit < radix) break;
      digit = 0;
    }
    if (k < 0) return;
  }
}

}  // namespace detail

struct MapResult {
  Labeling x;
  Labeling z;
  double energy = 0.0;
};

inline MapResult enumerate_map(const Field& phi, const Field& psi, const Model& m) {
  check_unaries(m, phi, psi);
  check_oracle_size(m);
  MapResult best;
  best.energy = std::numeric_limits<double>::infinity();
  detail::for_each_assignment(m.pixels(), m.schema.num_labels(), m.schema.instance_channels(),
                              [&](const Labeling& x, const Labeling& z) {
                                const double e = total_energy(x, z, phi, psi, m);
                                // strict < keeps the lexicographically first minimizer
                                if (e < best.energy) best = {x, z, e};
                              });
  return best;
}

struct ExactMarginals {
  MarginalPair marginals;
  double log_z = 0.0;
};

inline ExactMarginals exact_marginals(const Field& phi, const Field& psi, const Model& m) {
  check_unaries(m, phi, psi);
  check_oracle_size(m);
  const int n = m.pixels(), L = m.schema.num_labels(), T = m.schema.instance_channels();
  // Shift by the minimum energy so that every weight exp(-(E - E_min)) <= 1.
  double e_min = std::numeric_limits<double>::infinity();
  std::vector<double> energies;
  energies.reserve(static_cast<std::size_t>(assignment_count(m)));
  detail::for_each_assignment(n, L, T, [&](const Labeling& x, const Labeling& z) {
    energies.push_back(total_energy(x, z, phi, psi, m));
    e_min = std::min(e_min, energies.back());
  });
  ExactMarginals out{{Field(phi.height, phi.width, L), Field(psi.height, psi.width, T)}, 0.0};
  double total = 0.0;
  std::size_t k = 0;
  detail::for_each_assignment(n, L, T, [&](const Labeling& x, const Labeling& z) {
    const double wgt = std::exp(-(energies[k++] - e_min));
    total += wgt;
    for (int i = 0; i < n; ++i) {
      out.marginals.q.at(i, x[static_cast<std::size_t>(i)]) += wgt;
      out.marginals.r.at(i, z[static_cast<std::size_t>(i)]) += wgt;
    }
  });
  for (double& v : out.marginals.q.data) v /= total;
  for (double& v : out.marginals.r.data) v /= total;
  out.log_z = -e_min + std::log(total);
  return out;
}

/// KL(Q x R || P) by enumeration, using log P = -E - log Z.
inline double exact_kl(const MarginalPair& s, const Field& phi, const Field& psi, const Model& m, double log_z) {
  check_unaries(m, phi, psi);
  check_oracle_size(m);
  const int n = m.pixels();
  double kl = 0.0;
  detail::for_each_assignment(n, m.schema.num_labels(), m.schema.instance_channels(),
                              [&](const Labeling& x, const Labeling& z) {
                                double log_q = 0.0;
                                for (int i = 0; i < n; ++i) {
                                  const double a = s.q.at(i, x[static_cast<std::size_t>(i)]);
                                  const double b = s.r.at(i, z[static_cast<std::size_t>(i)]);
                                  if (a == 0.0 || b == 0.0) return;  // 0 log 0 = 0
                                  log_q += std::log(a) + std::log(b);
                                }
                                const double q = std::exp(log_q);
                                kl += q * (log_q + total_energy(x, z, phi, psi, m) + log_z);
                              });
  return kl;
}

}  // namespace bcrf
