#include <doctest.h>

#include "noisyseg/core.hpp"

using namespace noisyseg;

TEST_CASE("ProbMap accepts exact per-pixel distributions") {
  // 2 classes, 2x2, all pixels {0.25, 0.75}
  std::vector<double> data = {0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75};
  CHECK(ProbMap::check(2, 2, 2, data).ok);
  const ProbMap pm(2, 2, 2, data);
  CHECK(validate(pm).ok);
}

TEST_CASE("ProbMap reports the first pixel whose sum is off") {
  std::vector<double> data = {0.25, 0.25, 0.15, 0.25, 0.75, 0.75, 0.75, 0.75};
  const auto report = ProbMap::check(2, 2, 2, data);
  CHECK_FALSE(report.ok);
  CHECK(report.message.find("y=1") != std::string::npos);
  CHECK(report.message.find("x=0") != std::string::npos);
  CHECK_THROWS_AS(ProbMap(2, 2, 2, data), ValidationError);
}

TEST_CASE("LabelMap rejects a class id equal to K") {
  std::vector<int> data = {0, 1, 2, 3};
  const auto report = LabelMap::check(2, 2, 3, data);
  CHECK_FALSE(report.ok);
  CHECK(report.message.find("class id out of range") != std::string::npos);
  CHECK(LabelMap::check(2, 2, 4, data).ok);
}

TEST_CASE("validate is pure") {
  std::vector<int> data = {0, 1, 5, 0};
  const auto a = LabelMap::check(2, 2, 3, data);
  const auto b = LabelMap::check(2, 2, 3, data);
  CHECK(a.ok == b.ok);
  CHECK(a.message == b.message);
}

TEST_CASE("ImageTensor enforces the [0,1] range and channel count") {
  CHECK_THROWS_AS(ImageTensor(1, 1, 2, {0.5, 1.5}), ValidationError);
  CHECK_THROWS_AS(ImageTensor(2, 1, 1, {0.5, 0.5}), ValidationError);
  CHECK_NOTHROW(ImageTensor(1, 1, 2, {0.0, 1.0}));
}

TEST_CASE("WeightHeatmap requires per-pixel sums of one") {
  CHECK(WeightHeatmap::check(2, 1, 1, {0.4, 0.6}).ok);
  CHECK_FALSE(WeightHeatmap::check(2, 1, 1, {0.4, 0.7}).ok);
}

TEST_CASE("LossMap and AttentionMap reject negative values") {
  CHECK_FALSE(LossMap::check(1, 2, {0.0, -0.1}).ok);
  CHECK_FALSE(AttentionMap::check(1, 2, {1.0, -1.0}).ok);
  CHECK(AttentionMap::check(1, 2, {1.0, 2.5}).ok);
}

TEST_CASE("ExpertSet needs at least one annotator and consistent shapes") {
  const auto empty = ExpertSet::check({}, {});
  CHECK_FALSE(empty.ok);
  CHECK(empty.message.find("no annotators") != std::string::npos);

  std::vector<LabelMap> mismatched;
  mismatched.emplace_back(2, 2, 3, std::vector<int>{0, 1, 2, 0});
  mismatched.emplace_back(2, 3, 3, std::vector<int>{0, 1, 2, 0, 1, 2});
  CHECK_FALSE(ExpertSet::check(mismatched, {"a", "b"}).ok);

  std::vector<LabelMap> fine;
  fine.emplace_back(2, 2, 3, std::vector<int>{0, 1, 2, 0});
  fine.emplace_back(2, 2, 3, std::vector<int>{1, 1, 2, 0});
  CHECK_NOTHROW(ExpertSet(fine, {"a", "b"}));
}
