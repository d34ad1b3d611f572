#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bcrf/core_types.hpp"
#include "bcrf/energy.hpp"
#include "bcrf/inference.hpp"

namespace bcrf {

/// One instance detection with a full-image binary mask.
struct Detection {
  int class_id = 0;
  double score = 1.0;
  std::vector<std::uint8_t> mask;  // H x W, row-major, 0/1
};

inline constexpr double kDefaultNoInstanceFloor = 0.05;
inline constexpr double kUncoveredFactor = 1e-3;

struct InstanceUnary {
  Field psi;
  std::vector<int> instance_class;
};

/// Instance unaries with channel 0 = inst0 and channel t = detection t.
/// Covered pixels score each covering detection by its confidence and inst0
/// by `no_instance_floor`; uncovered pixels put (almost) all mass on inst0.
inline InstanceUnary instance_unary_from_detections(const std::vector<Detection>& dets, int height, int width,
                                                    double no_instance_floor = kDefaultNoInstanceFloor) {
  if (height <= 0 || width <= 0) throw input_error("image dimensions must be positive");
  if (!(no_instance_floor > 0.0 && no_instance_floor < 1.0))
    throw input_error("no-instance floor must be in (0, 1)");
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (dets[d].mask.size() != n)
      throw input_error("detection " + std::to_string(d) + " mask does not match image size");
    if (!(dets[d].score > 0.0 && dets[d].score <= 1.0))
      throw input_error("detection " + std::to_string(d) + " score must be in (0, 1]");
  }
  const int T = static_cast<int>(dets.size()) + 1;
  InstanceUnary out{Field(height, width, T), {}};
  for (const auto& d : dets) out.instance_class.push_back(d.class_id);
  std::vector<double> p(static_cast<std::size_t>(T));
  for (std::size_t i = 0; i < n; ++i) {
    bool covered = false;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].mask[i]) {
        p[d + 1] = dets[d].score;
        covered = true;
      } else {
        p[d + 1] = no_instance_floor * kUncoveredFactor;
      }
    }
    p[0] = covered ? no_instance_floor : 1.0;
    double sum = 0.0;
    for (double v : p) sum += v;
    for (int t = 0; t < T; ++t) out.psi.at(static_cast<int>(i), t) = -std::log(p[static_cast<std::size_t>(t)] / sum);
  }
  return out;
}

enum class FuseMode { joint, paste };

struct FuseOptions {
  FuseMode mode = FuseMode::joint;
  double overlap_threshold = 0.5;
  int min_area = 16;
};

namespace detail {

inline PanopticMap fuse_joint(const MarginalPair& s, const LabelSchema& schema) {
  const int n = s.q.pixels(), L = s.q.channels, T = s.r.channels;
  PanopticMap out{s.q.height, s.q.width, Labeling(static_cast<std::size_t>(n)), Labeling(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    double best = -1.0;
    int bl = -1, bt = -1;
    for (int l = 0; l < L; ++l) {
      const bool stuff = !schema.is_thing(l);
      for (int t = 0; t < T; ++t) {
        const int cls = schema.class_of_instance(t);
        const bool compatible = cls == l || (stuff && cls == kNullClass);
        if (!compatible) continue;
        const double v = s.q.at(i, l) * s.r.at(i, t);
        if (v > best) {
          best = v;
          bl = l;
          bt = t;
        }
      }
    }
    if (bl < 0) {  // schema admits no compatible pair for this pixel
      bl = argmax_row(s.q.row(i));
      bt = argmax_row(s.r.row(i));
    }
    out.semantic[static_cast<std::size_t>(i)] = bl;
    out.instance[static_cast<std::size_t>(i)] = bt;
  }
  return out;
}

inline PanopticMap fuse_paste(const MarginalPair& s, const LabelSchema& schema, const FuseOptions& opt) {
  const int n = s.q.pixels(), T = s.r.channels;
  PanopticMap out{s.q.height, s.q.width, Labeling(static_cast<std::size_t>(n), -1),
                  Labeling(static_cast<std::size_t>(n), 0)};
  Labeling decoded(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) decoded[static_cast<std::size_t>(i)] = argmax_row(s.r.row(i));

  struct Candidate {
    int t;
    double confidence;
    int area;
  };
  std::vector<Candidate> cands;
  for (int t = 1; t < T; ++t) {
    double conf = 0.0;
    int area = 0;
    for (int i = 0; i < n; ++i)
      if (decoded[static_cast<std::size_t>(i)] == t) {
        conf += s.r.at(i, t);
        ++area;
      }
    if (area > 0) cands.push_back({t, conf / area, area});
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.confidence > b.confidence; });
  for (const auto& c : cands) {
    if (c.area < opt.min_area) continue;
    int unclaimed = 0;
    for (int i = 0; i < n; ++i)
      if (decoded[static_cast<std::size_t>(i)] == c.t && out.semantic[static_cast<std::size_t>(i)] < 0) ++unclaimed;
    if (static_cast<double>(unclaimed) / c.area < opt.overlap_threshold) continue;
    const int cls = schema.class_of_instance(c.t);
    for (int i = 0; i < n; ++i)
      if (decoded[static_cast<std::size_t>(i)] == c.t && out.semantic[static_cast<std::size_t>(i)] < 0) {
        out.semantic[static_cast<std::size_t>(i)] = cls;
        out.instance[static_cast<std::size_t>(i)] = c.t;
      }
  }
  for (int i = 0; i < n; ++i) {
    if (out.semantic[static_cast<std::size_t>(i)] >= 0) continue;
    int best = -1;
    for (int l : schema.stuff)
      if (best < 0 || s.q.at(i, l) > s.q.at(i, best) || (s.q.at(i, l) == s.q.at(i, best) && l < best)) best = l;
    if (best < 0) best = argmax_row(s.q.row(i));
    out.semantic[static_cast<std::size_t>(i)] = best;
    out.instance[static_cast<std::size_t>(i)] = 0;
  }
  return out;
}

}  // namespace detail

inline PanopticMap fuse_panoptic(const MarginalPair& s, const LabelSchema& schema, const FuseOptions& opt = {}) {
  if (s.q.channels != schema.num_labels() || s.r.channels != schema.instance_channels())
    throw input_error("marginals do not match schema");
  return opt.mode == FuseMode::joint ? detail::fuse_joint(s, schema) : detail::fuse_paste(s, schema, opt);
}

// ---------------------------------------------------------------- metrics

struct ClassQuality {
  int label = 0;
  int tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
  double pq = 0.0, sq = 0.0, rq = 0.0;
};

struct QualitySummary {
  double pq = 0.0, sq = 0.0, rq = 0.0;
  int classes = 0;
};

struct PqReport {
  std::vector<ClassQuality> per_class;  // classes with at least one segment
  QualitySummary all, things, stuff;
  int max_matches_per_gt = 0;  // sanity: must be <= 1
};

/// Panoptic, segmentation and recognition quality. Segments are the distinct
/// (semantic, instance) pairs; pixels whose ground-truth label is -1 are void
/// and ignored on both sides.
inline PqReport pq_metrics(const PanopticMap& pred, const PanopticMap& gt, const LabelSchema& schema) {
  if (pred.height != gt.height || pred.width != gt.width || pred.semantic.size() != gt.semantic.size() ||
      pred.instance.size() != pred.semantic.size() || gt.instance.size() != gt.semantic.size())
    throw input_error("prediction and ground-truth maps differ in shape");
  const int L = schema.num_labels();
  using Key = std::pair<int, int>;
  std::map<Key, int> pred_area, gt_area;
  std::map<std::pair<Key, Key>, int> inter;
  for (std::size_t i = 0; i < gt.semantic.size(); ++i) {
    if (gt.semantic[i] < 0) continue;
    if (gt.semantic[i] >= L || pred.semantic[i] < 0 || pred.semantic[i] >= L)
      throw input_error("semantic id out of range at pixel " + std::to_string(i));
    const Key p{pred.semantic[i], pred.instance[i]}, g{gt.semantic[i], gt.instance[i]};
    ++pred_area[p];
    ++gt_area[g];
    if (p.first == g.first) ++inter[{p, g}];
  }

  std::vector<ClassQuality> cls(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) cls[static_cast<std::size_t>(l)].label = l;
  std::map<Key, int> gt_matches;
  std::map<Key, bool> pred_matched;
  for (const auto& [pair, area] : inter) {
    const auto& [p, g] = pair;
    const int uni = pred_area[p] + gt_area[g] - area;
    const double iou = static_cast<double>(area) / uni;
    if (iou > 0.5) {
      auto& c = cls[static_cast<std::size_t>(p.first)];
      ++c.tp;
      c.iou_sum += iou;
      ++gt_matches[g];
      pred_matched[p] = true;
    }
  }
  for (const auto& [g, a] : gt_area)
    if (!gt_matches.count(g)) ++cls[static_cast<std::size_t>(g.first)].fn;
  for (const auto& [p, a] : pred_area)
    if (!pred_matched.count(p)) ++cls[static_cast<std::size_t>(p.first)].fp;

  PqReport rep;
  for (const auto& [g, k] : gt_matches) rep.max_matches_per_gt = std::max(rep.max_matches_per_gt, k);
  auto add = [](QualitySummary& s, const ClassQuality& c) {
    s.pq += c.pq;
    s.sq += c.sq;
    s.rq += c.rq;
    ++s.classes;
  };
  for (auto& c : cls) {
    const double denom = c.tp + 0.5 * c.fp + 0.5 * c.fn;
    if (denom == 0.0) continue;
    c.sq = c.tp > 0 ? c.iou_sum / c.tp : 0.0;
    c.rq = c.tp / denom;
    c.pq = c.sq * c.rq;
    rep.per_class.push_back(c);
    add(rep.all, c);
    add(schema.is_thing(c.label) ? rep.things : rep.stuff, c);
  }
  for (QualitySummary* s : {&rep.all, &rep.things, &rep.stuff})
    if (s->classes > 0) {
      s->pq /= s->classes;
      s->sq /= s->classes;
      s->rq /= s->classes;
    }
  return rep;
}

}  // namespace bcrf
