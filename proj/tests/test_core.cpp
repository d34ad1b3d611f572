#include <gtest/gtest.h>

#include "bcrf/bcrf.hpp"

using namespace bcrf;

namespace {

LabelSchema road_person() {
  LabelSchema s;
  s.label_names = {"road", "person"};
  s.stuff = {0};
  s.things = {1};
  s.instance_class = {1};
  return s;
}

}  // namespace

TEST(Schema, WellFormedIsAccepted) {
  const LabelSchema s = road_person();
  EXPECT_NO_THROW(validate_schema(s));
  EXPECT_EQ(s.instance_channels(), 2);
  EXPECT_EQ(s.class_of_instance(0), kNullClass);
  EXPECT_EQ(s.class_of_instance(1), 1);
}

TEST(Schema, LabelInBothPartitionsIsRejected) {
  LabelSchema s = road_person();
  s.stuff = {0, 1};
  EXPECT_THROW(validate_schema(s), input_error);
}

TEST(Schema, InstanceOfStuffClassIsRejected) {
  LabelSchema s = road_person();
  s.instance_class = {0};
  EXPECT_THROW(validate_schema(s), input_error);
}

TEST(Schema, UnassignedOrOutOfRangeLabelsAreRejected) {
  LabelSchema s = road_person();
  s.things = {};
  s.instance_class = {};
  EXPECT_THROW(validate_schema(s), input_error);
  s = road_person();
  s.things = {5};
  EXPECT_THROW(validate_schema(s), input_error);
}

TEST(Schema, EtaIndexPutsNullFirst) {
  LabelSchema s = synthetic::make_schema(2, 3);
  EXPECT_EQ(s.eta_size(), 4);
  EXPECT_EQ(s.eta_index(kNullClass), 0);
  EXPECT_EQ(s.eta_index(2), 1);
  EXPECT_EQ(s.eta_index(4), 3);
  EXPECT_THROW(s.eta_index(0), input_error);
}

TEST(Simplex, ViolationIsMeasured) {
  Field f(1, 2, 2);
  f.data = {0.5, 0.5, 0.2, 0.7};
  EXPECT_NEAR(simplex_violation(f), 0.1, 1e-12);
  f.data = {1.5, -0.5, 0.5, 0.5};
  EXPECT_TRUE(std::isinf(simplex_violation(f)));
}

TEST(Params, DefaultsValidate) {
  const LabelSchema s = synthetic::make_schema(2, 2, {2, 3});
  const BcrfParams p = default_params(s);
  EXPECT_NO_THROW(validate_params(p, s));
  EXPECT_EQ(p.iterations, 5);
  EXPECT_EQ(p.damping, 1.0);
  EXPECT_EQ(p.mu(0, 1), 1.0);
  EXPECT_EQ(p.eta(0, 0), 0.0);
  EXPECT_EQ(p.eta(1, 2), 1.0);
}

TEST(Params, InvalidValuesAreRejected) {
  const LabelSchema s = synthetic::make_schema(1, 1, {1});
  BcrfParams p = default_params(s);
  p.weights[kCrossUnary] = -0.1;
  EXPECT_THROW(validate_params(p, s), input_error);
  p = default_params(s);
  p.mu(0, 0) = 0.5;
  EXPECT_THROW(validate_params(p, s), input_error);
  p = default_params(s);
  p.eta(0, 1) = -1.0;
  EXPECT_THROW(validate_params(p, s), input_error);
  p = default_params(s);
  p.kernel_semantic.components[0].bandwidths[0] = 0.0;
  EXPECT_THROW(validate_params(p, s), input_error);
  p = default_params(s);
  p.damping = 0.0;
  EXPECT_THROW(validate_params(p, s), input_error);
}
