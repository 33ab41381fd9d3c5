// Analytic gradients against central finite differences in double precision.
#include <gtest/gtest.h>

#include "gradient_check.hpp"

namespace scalseg {
namespace {

using namespace testing;

TEST(GradientTest, ScaleOneMatchesFiniteDifferences) {
  for (int stages : {1, 2}) {
    ScaleModel model = ScaleModel::initialize(1, tiny_backbone(stages), std::nullopt);
    jitter_biases(model, 7);
    const ScaleInput input{random_cloud(10, 21, 1.0, 3), 0.25, 1};
    const GradientCheck c = finite_difference_check(model, input, nullptr);
    EXPECT_LT(c.max_rel, kTolerance) << "stages " << stages << ": " << c.worst;
    EXPECT_LE(model.params().parameter_count(), 1000u);
  }
}

TEST(GradientTest, FusedScaleMatchesFiniteDifferences) {
  const FusedInstance fx = fused_instance(40, 5);
  ASSERT_GT(fx.inputs[1].cloud.size(), 0u);
  const GradientCheck c = finite_difference_check(fx.models[1], fx.inputs[1], &fx.store);
  EXPECT_LT(c.max_rel, kTolerance) << c.worst;
  EXPECT_GT(c.checked, 300u);
}

}  // namespace
}  // namespace scalseg
