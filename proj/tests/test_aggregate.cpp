#include <gtest/gtest.h>

#include <random>

#include "cosreg/aggregate.hpp"

using namespace cosreg;

namespace {

PointPattern random_pattern(std::mt19937_64& rng, int n, double p_one) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointPattern pat{StudyWindow::unit_square(), {}};
  for (int i = 0; i < n; ++i) pat.points.push_back({{u(rng), u(rng)}, u(rng) < p_one ? 1 : 0});
  return pat;
}

}  // namespace

TEST(AggregateTypeC, EmptyPatternGivesZeros) {
  const auto part = build_partition(StudyWindow::unit_square(), 3, 2, 1);
  const auto c = aggregate_to_type_c(PointPattern{StudyWindow::unit_square(), {}}, part);
  ASSERT_EQ(c.size(), 6u);
  for (const auto& r : c.regions) {
    EXPECT_EQ(r.n1, 0);
    EXPECT_EQ(r.n0, 0);
  }
}

TEST(AggregateTypeC, ThreePointsInOneCell) {
  const auto part = build_partition(StudyWindow::unit_square(), 2, 2, 1);
  PointPattern pat{StudyWindow::unit_square(), {{{0.1, 0.1}, 1}, {{0.2, 0.3}, 0}, {{0.4, 0.05}, 1}}};
  const auto c = aggregate_to_type_c(pat, part);
  EXPECT_EQ(c.regions[0].n1, 2);
  EXPECT_EQ(c.regions[0].n0, 1);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(c.regions[j].n1 + c.regions[j].n0, 0);
}

TEST(AggregateTypeC, BoundaryPointsUseClosedLeftRule) {
  const auto part = build_partition(StudyWindow::unit_square(), 2, 2, 1);
  PointPattern pat{StudyWindow::unit_square(), {{{0.5, 0.5}, 1}, {{1.0, 1.0}, 0}, {{0.0, 0.0}, 0}}};
  const auto c = aggregate_to_type_c(pat, part);
  EXPECT_EQ(c.regions[3].n1, 1);  // (0.5, 0.5) goes up-right
  EXPECT_EQ(c.regions[3].n0, 1);  // top-right corner maps to the last cell
  EXPECT_EQ(c.regions[0].n0, 1);
}

TEST(AggregateTypeC, PointOutsideWindowThrows) {
  const auto part = build_partition(StudyWindow::unit_square(), 2, 2, 1);
  PointPattern pat{StudyWindow::unit_square(), {{{1.5, 0.5}, 1}}};
  EXPECT_THROW(aggregate_to_type_c(pat, part), out_of_domain_error);
}

TEST(AggregateTypeC, CountsMatchBruteForceRecount) {
  std::mt19937_64 rng(8);
  const auto part = build_partition(StudyWindow::unit_square(), 5, 4, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pat = random_pattern(rng, 300, 0.2);
    const auto c = aggregate_to_type_c(pat, part);
    std::int64_t ones = 0, total = 0;
    for (const auto& r : c.regions) {
      ones += r.n1;
      total += r.n1 + r.n0;
    }
    std::int64_t direct_ones = 0;
    for (const auto& p : pat.points) direct_ones += p.mark;
    EXPECT_EQ(ones, direct_ones);
    EXPECT_EQ(total, static_cast<std::int64_t>(pat.size()));
    // recount region by region from rectangle bounds
    for (std::size_t j = 0; j < part.num_regions(); ++j) {
      const double x0 = static_cast<double>(j % 5) / 5.0, y0 = static_cast<double>(j / 5) / 4.0;
      std::int64_t n1 = 0, n0 = 0;
      for (const auto& p : pat.points)
        if (p.location.x >= x0 && p.location.x < x0 + 0.2 && p.location.y >= y0 && p.location.y < y0 + 0.25)
          (p.mark ? n1 : n0)++;
      EXPECT_EQ(c.regions[j].n1, n1);
      EXPECT_EQ(c.regions[j].n0, n0);
    }
  }
}

TEST(Degrade, KnownExamples) {
  AggregatedData c{DataKind::TypeC, {{2, 1}, {0, 5}, {0, 0}}};
  const auto d = degrade(c, DataKind::TypeD);
  EXPECT_EQ(d.kind, DataKind::TypeD);
  EXPECT_EQ(d.regions[0].n, 3);
  EXPECT_EQ(d.regions[0].v, 1);
  EXPECT_EQ(d.regions[1].n, 5);
  EXPECT_EQ(d.regions[1].v, 0);
  EXPECT_EQ(d.regions[2].n, 0);
  EXPECT_EQ(d.regions[2].v, 0);
  const auto e = degrade(c, DataKind::TypeE);
  EXPECT_EQ(e.regions[0].v, 1);
  EXPECT_EQ(e.regions[1].v, 0);
  const auto e2 = degrade(d, DataKind::TypeE);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(e2.regions[j].v, e.regions[j].v);
  d.validate();
  e.validate();
}

TEST(Degrade, UpgradeRejected) {
  AggregatedData e{DataKind::TypeE, {{0, 0, 0, 1}}};
  EXPECT_THROW(degrade(e, DataKind::TypeD), invalid_argument_error);
  EXPECT_THROW(degrade(e, DataKind::TypeC), invalid_argument_error);
  AggregatedData d{DataKind::TypeD, {{0, 0, 2, 1}}};
  EXPECT_THROW(degrade(d, DataKind::TypeC), invalid_argument_error);
}

TEST(Degrade, PropertyIndicatorMatchesAnyOneInRegion) {
  std::mt19937_64 rng(21);
  const auto part = build_partition(StudyWindow::unit_square(), 6, 6, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pat = random_pattern(rng, static_cast<int>(rng() % 200), 0.05);
    const auto e = degrade(aggregate_to_type_c(pat, part), DataKind::TypeE);
    std::vector<int> any(part.num_regions(), 0);
    for (const auto& p : pat.points)
      if (p.mark == 1) any[part.region_of(p.location)] = 1;
    for (std::size_t j = 0; j < part.num_regions(); ++j) EXPECT_EQ(e.regions[j].v, any[j]);
  }
}

TEST(Degrade, IdempotentAtTarget) {
  std::mt19937_64 rng(5);
  const auto part = build_partition(StudyWindow::unit_square(), 4, 4, 1);
  const auto c = aggregate_to_type_c(random_pattern(rng, 150, 0.3), part);
  for (DataKind k : {DataKind::TypeD, DataKind::TypeE}) {
    const auto once = degrade(c, k);
    const auto twice = degrade(once, k);
    for (std::size_t j = 0; j < once.size(); ++j) {
      EXPECT_EQ(once.regions[j].n, twice.regions[j].n);
      EXPECT_EQ(once.regions[j].v, twice.regions[j].v);
    }
  }
}

TEST(AggregatedData, ValidationCatchesInconsistentTypeD) {
  AggregatedData d{DataKind::TypeD, {{0, 0, 0, 1}}};
  EXPECT_THROW(d.validate(), validation_error);
  AggregatedData c{DataKind::TypeC, {{-1, 0, 0, 0}}};
  EXPECT_THROW(c.validate(), validation_error);
}
