#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bcrf/bcrf.hpp"
#include "oracles.hpp"

using namespace bcrf;

namespace {

LabelSchema street(std::vector<int> instances = {}) {
  LabelSchema s;
  s.label_names = {"road", "sky", "person", "car"};
  s.stuff = {0, 1};
  s.things = {2, 3};
  s.instance_class = std::move(instances);
  return s;
}

Detection det(int cls, double score, int n, std::initializer_list<int> on) {
  Detection d{cls, score, std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)};
  for (int i : on) d.mask[static_cast<std::size_t>(i)] = 1;
  return d;
}

std::vector<double> probs(const Field& psi, int i) {
  std::vector<double> p;
  for (double v : psi.row(i)) p.push_back(std::exp(-v));
  return p;
}

// Per-class PQ computed from scratch with pixel loops.
struct Pq {
  double pq = 0, sq = 0, rq = 0;
  int tp = 0, fp = 0, fn = 0;
};

std::map<int, Pq> pq_oracle(const PanopticMap& pred, const PanopticMap& gt, int labels) {
  const std::size_t n = gt.semantic.size();
  std::set<std::pair<int, int>> ps, gs;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.semantic[i] < 0) continue;
    ps.insert({pred.semantic[i], pred.instance[i]});
    gs.insert({gt.semantic[i], gt.instance[i]});
  }
  std::map<int, Pq> out;
  std::map<int, double> iou_sum;
  std::set<std::pair<int, int>> matched_p, matched_g;
  for (const auto& p : ps)
    for (const auto& g : gs) {
      if (p.first != g.first) continue;
      int inter = 0, uni = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (gt.semantic[i] < 0) continue;
        const bool a = pred.semantic[i] == p.first && pred.instance[i] == p.second;
        const bool b = gt.semantic[i] == g.first && gt.instance[i] == g.second;
        inter += a && b;
        uni += a || b;
      }
      const double iou = static_cast<double>(inter) / uni;
      if (iou > 0.5) {
        out[p.first].tp++;
        iou_sum[p.first] += iou;
        matched_p.insert(p);
        matched_g.insert(g);
      }
    }
  for (const auto& p : ps)
    if (!matched_p.count(p)) out[p.first].fp++;
  for (const auto& g : gs)
    if (!matched_g.count(g)) out[g.first].fn++;
  for (auto& [l, c] : out) {
    const double d = c.tp + 0.5 * c.fp + 0.5 * c.fn;
    c.pq = iou_sum[l] / d;
    c.sq = c.tp ? iou_sum[l] / c.tp : 0.0;
    c.rq = c.tp / d;
  }
  (void)labels;
  return out;
}

PanopticMap map_of(int h, int w, Labeling sem, Labeling inst) { return {h, w, std::move(sem), std::move(inst)}; }

}  // namespace

TEST(InstanceUnary, NoDetections) {
  const auto iu = instance_unary_from_detections({}, 2, 3);
  EXPECT_EQ(iu.psi.channels, 1);
  for (double v : iu.psi.data) EXPECT_NEAR(v, 0.0, 1e-15);
  EXPECT_TRUE(iu.instance_class.empty());
}

TEST(InstanceUnary, OneDetectionInsideMask) {
  const auto iu = instance_unary_from_detections({det(2, 0.9, 4, {1, 2})}, 2, 2, 0.05);
  const auto p = probs(iu.psi, 1);
  EXPECT_NEAR(p[0], 0.05 / 0.95, 1e-12);
  EXPECT_NEAR(p[1], 0.9 / 0.95, 1e-12);
  EXPECT_NEAR(p[0], 0.0526, 1e-4);
  EXPECT_NEAR(p[1], 0.9474, 1e-4);
  EXPECT_EQ(iu.instance_class, std::vector<int>({2}));
  // outside the mask the no-instance channel dominates
  const auto q = probs(iu.psi, 0);
  EXPECT_NEAR(q[1] / q[0], 0.05 * 1e-3, 1e-15);
}

TEST(InstanceUnary, OverlapSplitsByScore) {
  const auto iu = instance_unary_from_detections({det(2, 0.8, 4, {0, 1}), det(3, 0.6, 4, {1, 3})}, 2, 2);
  const auto p = probs(iu.psi, 1);
  EXPECT_NEAR(p[1] / p[2], 4.0 / 3.0, 1e-12);
  double s = 0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(InstanceUnary, InvalidInputs) {
  EXPECT_THROW(instance_unary_from_detections({det(2, 0.8, 3, {0})}, 2, 2), input_error);
  EXPECT_THROW(instance_unary_from_detections({det(2, 0.0, 4, {0})}, 2, 2), input_error);
  EXPECT_THROW(instance_unary_from_detections({det(2, 1.5, 4, {0})}, 2, 2), input_error);
  EXPECT_THROW(instance_unary_from_detections({}, 2, 2, 0.0), input_error);
}

namespace {

MarginalPair constant_marginals(int h, int w, std::vector<double> q, std::vector<double> r) {
  MarginalPair s{Field(h, w, static_cast<int>(q.size())), Field(h, w, static_cast<int>(r.size()))};
  for (int i = 0; i < h * w; ++i) {
    for (std::size_t k = 0; k < q.size(); ++k) s.q.at(i, static_cast<int>(k)) = q[k];
    for (std::size_t k = 0; k < r.size(); ++k) s.r.at(i, static_cast<int>(k)) = r[k];
  }
  return s;
}

}  // namespace

TEST(Fuse, CompatibleArgmaxIsKept) {
  const LabelSchema s = street({2, 3});
  const auto st = constant_marginals(4, 4, {0.1, 0.1, 0.1, 0.7}, {0.1, 0.2, 0.7});
  for (FuseMode mode : {FuseMode::joint, FuseMode::paste}) {
    const auto map = fuse_panoptic(st, s, {mode, 0.5, 16});
    for (int i = 0; i < 16; ++i) {
      EXPECT_EQ(map.semantic[static_cast<std::size_t>(i)], 3);
      EXPECT_EQ(map.instance[static_cast<std::size_t>(i)], 2);
    }
  }
}

TEST(Fuse, StuffWithNoInstance) {
  const LabelSchema s = street({2});
  const auto st = constant_marginals(2, 2, {0.6, 0.2, 0.1, 0.1}, {0.8, 0.2});
  for (FuseMode mode : {FuseMode::joint, FuseMode::paste}) {
    const auto map = fuse_panoptic(st, s, {mode, 0.5, 16});
    EXPECT_EQ(map.semantic, Labeling(4, 0));
    EXPECT_EQ(map.instance, Labeling(4, 0));
  }
}

TEST(Fuse, JointPrefersBestCompatiblePair) {
  const LabelSchema s = street({2});
  // sky x inst0 = 0.5 * 0.3 = 0.15 < person x inst1 = 0.4 * 0.7 = 0.28
  const auto st = constant_marginals(1, 1, {0.05, 0.5, 0.4, 0.05}, {0.3, 0.7});
  const auto map = fuse_panoptic(st, s);
  EXPECT_EQ(map.semantic[0], 2);
  EXPECT_EQ(map.instance[0], 1);
}

TEST(Fuse, JointOutputIsAlwaysCompatible) {
  const LabelSchema s = street({2, 3, 3});
  synthetic::Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const MarginalPair st = init_marginals(synthetic::random_unary(rng, 5, 5, 4, 2.0),
                                           synthetic::random_unary(rng, 5, 5, 4, 2.0));
    const auto map = fuse_panoptic(st, s);
    for (int i = 0; i < 25; ++i)
      EXPECT_EQ(cross_compat(map.semantic[static_cast<std::size_t>(i)],
                             s.class_of_instance(map.instance[static_cast<std::size_t>(i)]), Matrix::potts(3, 1.0), s),
                0.0);
  }
}

TEST(Fuse, PasteSkipsSmallInstances) {
  const LabelSchema s = street({2, 3, 2});
  // 6x6: inst1 decodes on the left 4 columns, inst2 on the rest except one
  // pixel where the tiny inst3 wins
  MarginalPair st{Field(6, 6, 4), Field(6, 6, 4)};
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const int i = y * 6 + x;
      st.q.at(i, 1) = 0.7;
      st.q.at(i, 2) = 0.3;
      if (x < 4) {
        st.r.at(i, 1) = 0.9;
        st.r.at(i, 0) = 0.1;
      } else if (y == 0 && x == 5) {
        st.r.at(i, 3) = 0.6;
        st.r.at(i, 0) = 0.4;
      } else {
        st.r.at(i, 2) = 0.55;
        st.r.at(i, 0) = 0.45;
      }
    }
  const auto map = fuse_panoptic(st, s, {FuseMode::paste, 0.5, 4});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const auto i = static_cast<std::size_t>(y * 6 + x);
      if (x < 4) {
        EXPECT_EQ(map.semantic[i], 2);
        EXPECT_EQ(map.instance[i], 1);
      } else if (y == 0 && x == 5) {
        EXPECT_EQ(map.semantic[i], 1);  // below min area: stuff fill
        EXPECT_EQ(map.instance[i], 0);
      } else {
        EXPECT_EQ(map.semantic[i], 3);
        EXPECT_EQ(map.instance[i], 2);
      }
    }
  // raising the min area drops inst2 as well
  const auto strict = fuse_panoptic(st, s, {FuseMode::paste, 0.5, 20});
  EXPECT_EQ(strict.semantic[4], 1);
  EXPECT_EQ(strict.instance[4], 0);
  EXPECT_EQ(strict.instance[0], 1);
}

TEST(Fuse, PasteFillsThingPixelsWithBestStuff) {
  const LabelSchema s = street({});
  const auto st = constant_marginals(2, 2, {0.1, 0.2, 0.6, 0.1}, {1.0});
  const auto map = fuse_panoptic(st, s, {FuseMode::paste, 0.5, 16});
  EXPECT_EQ(map.semantic, Labeling(4, 1));
}

TEST(Pq, PerfectPrediction) {
  const LabelSchema s = street();
  const auto gt = map_of(2, 4, {0, 0, 2, 2, 1, 3, 3, 2}, {0, 0, 1, 1, 0, 2, 2, 3});
  const auto rep = pq_metrics(gt, gt, s);
  for (const auto& c : rep.per_class) {
    EXPECT_EQ(c.pq, 1.0);
    EXPECT_EQ(c.sq, 1.0);
    EXPECT_EQ(c.rq, 1.0);
  }
  EXPECT_EQ(rep.all.pq, 1.0);
  EXPECT_EQ(rep.things.classes, 2);
  EXPECT_EQ(rep.stuff.classes, 2);
}

TEST(Pq, IouSixTenths) {
  const LabelSchema s = street();
  // person: gt covers pixels 0..5, the prediction all ten
  Labeling gs(10, 0), gi(10, 0), ps(10, 2), pi(10, 1);
  for (int i = 0; i < 6; ++i) {
    gs[static_cast<std::size_t>(i)] = 2;
    gi[static_cast<std::size_t>(i)] = 1;
  }
  const auto rep = pq_metrics(map_of(1, 10, ps, pi), map_of(1, 10, gs, gi), s);
  const ClassQuality* person = nullptr;
  for (const auto& c : rep.per_class)
    if (c.label == 2) person = &c;
  ASSERT_NE(person, nullptr);
  EXPECT_NEAR(person->pq, 0.6, 1e-12);
  EXPECT_NEAR(person->sq, 0.6, 1e-12);
  EXPECT_EQ(person->rq, 1.0);
  EXPECT_EQ(person->tp, 1);
  EXPECT_EQ(person->fp, 0);
  EXPECT_EQ(person->fn, 0);
}

TEST(Pq, IouFourTenthsDoesNotMatch) {
  const LabelSchema s = street();
  Labeling gs(10, 0), gi(10, 0), ps(10, 0), pi(10, 0);
  for (int i = 0; i < 10; ++i) {
    gs[static_cast<std::size_t>(i)] = i < 7 ? 2 : 0;
    gi[static_cast<std::size_t>(i)] = i < 7 ? 1 : 0;
    ps[static_cast<std::size_t>(i)] = i >= 3 ? 2 : 1;
    pi[static_cast<std::size_t>(i)] = i >= 3 ? 1 : 0;
  }
  // person IoU = 4 / 10
  const auto rep = pq_metrics(map_of(1, 10, ps, pi), map_of(1, 10, gs, gi), s);
  for (const auto& c : rep.per_class)
    if (c.label == 2) {
      EXPECT_EQ(c.tp, 0);
      EXPECT_EQ(c.fp, 1);
      EXPECT_EQ(c.fn, 1);
      EXPECT_EQ(c.pq, 0.0);
      EXPECT_EQ(c.sq, 0.0);
      EXPECT_EQ(c.rq, 0.0);
    }
}

TEST(Pq, VoidPixelsAreIgnored) {
  const LabelSchema s = street();
  const auto gt = map_of(1, 4, {-1, -1, 2, 2}, {0, 0, 1, 1});
  const auto pred = map_of(1, 4, {3, 3, 2, 2}, {5, 5, 1, 1});
  const auto rep = pq_metrics(pred, gt, s);
  ASSERT_EQ(rep.per_class.size(), 1u);
  EXPECT_EQ(rep.per_class[0].pq, 1.0);
}

TEST(Pq, ShapeMismatchIsRejected) {
  const LabelSchema s = street();
  EXPECT_THROW(pq_metrics(map_of(1, 2, {0, 0}, {0, 0}), map_of(1, 3, {0, 0, 0}, {0, 0, 0}), s), input_error);
}

TEST(Pq, RandomPairsMatchOracleAndIdentities) {
  const LabelSchema s = street();
  synthetic::Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 64;
    Labeling gs(n), gi(n), ps(n), pi(n);
    for (int i = 0; i < n; ++i) {
      gs[static_cast<std::size_t>(i)] = rng.integer(-1, 3);
      gi[static_cast<std::size_t>(i)] = rng.integer(0, 2);
    }
    for (int i = 0; i < n; ++i) {  // mostly copy the ground truth
      const bool keep = rng.uniform() < 0.8 && gs[static_cast<std::size_t>(i)] >= 0;
      ps[static_cast<std::size_t>(i)] = keep ? gs[static_cast<std::size_t>(i)] : rng.integer(0, 3);
      pi[static_cast<std::size_t>(i)] = keep ? gi[static_cast<std::size_t>(i)] : rng.integer(0, 2);
    }
    const auto pred = map_of(8, 8, ps, pi), gt = map_of(8, 8, gs, gi);
    const auto got = pq_metrics(pred, gt, s);
    const auto want = pq_oracle(pred, gt, 4);
    EXPECT_LE(got.max_matches_per_gt, 1);
    ASSERT_EQ(got.per_class.size(), want.size());
    for (const auto& c : got.per_class) {
      EXPECT_EQ(c.pq, c.sq * c.rq);
      const auto& w = want.at(c.label);
      EXPECT_EQ(c.tp, w.tp);
      EXPECT_EQ(c.fp, w.fp);
      EXPECT_EQ(c.fn, w.fn);
      EXPECT_NEAR(c.pq, w.pq, 1e-12);
      EXPECT_NEAR(c.sq, w.sq, 1e-12);
      EXPECT_NEAR(c.rq, w.rq, 1e-12);
    }
  }
}

TEST(Pq, SwappingRolesKeepsPq) {
  const LabelSchema s = street();
  synthetic::Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    Labeling a(36), ai(36), b(36), bi(36);
    for (std::size_t i = 0; i < 36; ++i) {
      a[i] = rng.integer(0, 3);
      ai[i] = rng.integer(0, 1);
      const bool keep = rng.uniform() < 0.85;
      b[i] = keep ? a[i] : rng.integer(0, 3);
      bi[i] = keep ? ai[i] : rng.integer(0, 1);
    }
    const auto x = map_of(6, 6, a, ai), y = map_of(6, 6, b, bi);
    EXPECT_NEAR(pq_metrics(x, y, s).all.pq, pq_metrics(y, x, s).all.pq, 1e-12);
  }
}
