#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "expect_error.hpp"
#include "support.hpp"

using namespace ctprep;

namespace {

constexpr std::array<double, 6> kAxial{1, 0, 0, 0, 1, 0};
constexpr std::array<double, 6> kSagittal{0, 1, 0, 0, 0, -1};
constexpr std::array<double, 6> kCoronal{1, 0, 0, 0, 0, -1};

DicomSeries series_of(std::size_t n, std::array<double, 6> cosines = kAxial, std::vector<std::string> type = {"ORIGINAL", "PRIMARY", "AXIAL"},
                      std::optional<std::string> kernel = "H30s") {
  DicomSeries s;
  s.series_uid = "1.2.3";
  for (std::size_t i = 0; i < n; ++i) {
    DicomSlice d;
    d.orientation = cosines;
    d.image_type = type;
    d.convolution_kernel = kernel;
    d.image_position = {0, 0, double(i)};
    s.slices.push_back(d);
  }
  return s;
}

std::array<double, 6> rotate_about_row_axis(std::array<double, 6> c, double deg) {
  double a = deg * M_PI / 180.0;
  // Rotation about x applied to both direction vectors.
  auto rot = [&](double x, double y, double z) {
    return std::array<double, 3>{x, std::cos(a) * y - std::sin(a) * z, std::sin(a) * y + std::cos(a) * z};
  };
  auto r = rot(c[0], c[1], c[2]);
  auto k = rot(c[3], c[4], c[5]);
  return {r[0], r[1], r[2], k[0], k[1], k[2]};
}

}  // namespace

TEST(ClassifyOrientation, CanonicalPlanes) {
  EXPECT_EQ(classify_orientation(kAxial), Orientation::Axial);
  EXPECT_EQ(classify_orientation(kSagittal), Orientation::Sagittal);
  EXPECT_EQ(classify_orientation(kCoronal), Orientation::Coronal);
}

TEST(ClassifyOrientation, GantryTiltStaysAxial) {
  auto tilted = rotate_about_row_axis(kAxial, 20.0);
  DicomSlice probe;
  probe.orientation = tilted;
  EXPECT_NEAR(std::abs(probe.normal()[2]), std::cos(20.0 * M_PI / 180.0), 1e-12);
  EXPECT_EQ(classify_orientation(tilted), Orientation::Axial);
}

TEST(ClassifyOrientation, FortyFiveDegreesIsDegenerate) {
  EXPECT_CTPREP_ERROR(classify_orientation(rotate_about_row_axis(kAxial, 45.0)), DegenerateOrientation);
}

TEST(ClassifyOrientation, InvariantUnderInPlaneFlip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    double a = ctprep::testing::uniform(rng, -80, 80);
    auto base = i % 3 == 0 ? kAxial : i % 3 == 1 ? kSagittal : kCoronal;
    auto c = rotate_about_row_axis(base, a);
    std::array<double, 6> flipped;
    for (int k = 0; k < 6; ++k) flipped[std::size_t(k)] = -c[std::size_t(k)];
    try {
      EXPECT_EQ(classify_orientation(c), classify_orientation(flipped));
    } catch (const Error& e) {
      EXPECT_CTPREP_ERROR(classify_orientation(flipped), DegenerateOrientation);
    }
  }
}

TEST(SplitMixed, SingleSagittalAmongAxial) {
  auto s = series_of(30);
  auto sag = series_of(1, kSagittal);
  s.slices.insert(s.slices.begin() + 10, sag.slices.front());
  auto parts = split_mixed_series(s);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].first, Orientation::Axial);
  EXPECT_EQ(parts[0].second.slices.size(), 30u);
  EXPECT_EQ(parts[1].first, Orientation::Sagittal);
  EXPECT_EQ(parts[1].second.slices.size(), 1u);
  // Original order preserved within the axial partition.
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(parts[0].second.slices[i].image_position[2], double(i));
}

TEST(SplitMixed, HomogeneousSeriesUnchanged) {
  auto axial = series_of(12);
  auto parts = split_mixed_series(axial);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].second.slices, axial.slices);
  auto coronal = split_mixed_series(series_of(12, kCoronal));
  ASSERT_EQ(coronal.size(), 1u);
  EXPECT_EQ(coronal[0].first, Orientation::Coronal);
  auto v = triage_series(coronal[0].second, coronal[0].first, 12);
  EXPECT_EQ(v.reason, ExclusionReason::NonAxial);
}

TEST(Triage, ThresholdBoundaries) {
  auto blank = series_of(2, kAxial, {});
  EXPECT_EQ(triage_series(blank, Orientation::Axial, 2).reason, ExclusionReason::Localiser);
  auto three = triage_series(series_of(3, kAxial, {}), Orientation::Axial, 3);
  EXPECT_NE(three.reason, ExclusionReason::Localiser);
  EXPECT_EQ(three.decision, Decision::NeedsReview);

  auto v24 = triage_series(series_of(24), Orientation::Axial, 24);
  EXPECT_EQ(v24.decision, Decision::NeedsReview);
  EXPECT_EQ(v24.reason, ExclusionReason::SuspectedSplitBrain);
  auto v25 = triage_series(series_of(25), Orientation::Axial, 25);
  EXPECT_EQ(v25.decision, Decision::Accepted);
  EXPECT_EQ(v25.reason, ExclusionReason::None);
}

TEST(Triage, Examples) {
  EXPECT_EQ(triage_series(series_of(40), Orientation::Axial, 40).decision, Decision::Accepted);
  auto bone = triage_series(series_of(40, kAxial, {"ORIGINAL", "PRIMARY", "AXIAL"}, "BONE"), Orientation::Axial, 40);
  EXPECT_EQ(bone.decision, Decision::Excluded);
  EXPECT_EQ(bone.reason, ExclusionReason::BoneReformat);
  auto tagged = triage_series(series_of(40, kAxial, {"ORIGINAL", "PRIMARY", "LOCALIZER"}), Orientation::Axial, 40);
  EXPECT_EQ(tagged.reason, ExclusionReason::Localiser);
  auto scout = triage_series(series_of(1, kAxial, {"derived", "scout"}), Orientation::Axial, 1);
  EXPECT_EQ(scout.reason, ExclusionReason::Localiser);
  auto bone_type = triage_series(series_of(40, kAxial, {"ORIGINAL", "BONEPLUS"}, std::nullopt), Orientation::Axial, 40);
  EXPECT_EQ(bone_type.reason, ExclusionReason::BoneReformat);
}

TEST(Triage, ConfiguredBoneKernels) {
  TriageConfig cfg;
  cfg.bone_tokens = {"B70S"};
  auto s = series_of(40, kAxial, {"ORIGINAL", "PRIMARY", "AXIAL"}, "b70s");
  EXPECT_EQ(triage_series(s, Orientation::Axial, 40, cfg).reason, ExclusionReason::BoneReformat);
  auto plain = series_of(40, kAxial, {"ORIGINAL", "PRIMARY", "AXIAL"}, "BONE");
  EXPECT_EQ(triage_series(plain, Orientation::Axial, 40, cfg).decision, Decision::Accepted);
}

TEST(Triage, RulePrecedenceAndVerdictInvariants) {
  // Enumerate every combination of rule triggers; the first rule in the
  // fixed order must decide, and the verdict must be internally consistent.
  for (int mask = 0; mask < 32; ++mask) {
    bool loc_tag = mask & 1, blank = mask & 2, bone = mask & 4, non_axial = mask & 8, few = mask & 16;
    std::vector<std::string> type = blank ? std::vector<std::string>{} : std::vector<std::string>{"ORIGINAL", "PRIMARY"};
    if (loc_tag) type.push_back("LOCALIZER");
    std::size_t n = few ? 2 : 40;
    auto s = series_of(n, kAxial, type, bone ? std::optional<std::string>("BONE") : std::nullopt);
    auto v = triage_series(s, non_axial ? Orientation::Coronal : Orientation::Axial, n);
    ExclusionReason expected = loc_tag                 ? ExclusionReason::Localiser
                               : (blank && few)        ? ExclusionReason::Localiser
                               : bone                  ? ExclusionReason::BoneReformat
                               : non_axial             ? ExclusionReason::NonAxial
                               : few                   ? ExclusionReason::SuspectedSplitBrain
                                                       : ExclusionReason::None;
    EXPECT_EQ(v.reason, expected) << "mask " << mask;
    switch (v.decision) {
      case Decision::Excluded:
        EXPECT_TRUE(v.reason == ExclusionReason::NonAxial || v.reason == ExclusionReason::Localiser ||
                    v.reason == ExclusionReason::BoneReformat);
        break;
      case Decision::NeedsReview: EXPECT_EQ(v.reason, ExclusionReason::SuspectedSplitBrain); break;
      case Decision::Accepted: EXPECT_EQ(v.reason, ExclusionReason::None); break;
    }
  }
}

TEST(Triage, NamesRoundTrip) {
  for (auto o : {Orientation::Axial, Orientation::Sagittal, Orientation::Coronal, Orientation::Mixed})
    EXPECT_EQ(parse_orientation(to_string(o)), o);
  for (auto d : {Decision::Accepted, Decision::Excluded, Decision::NeedsReview}) EXPECT_EQ(parse_decision(to_string(d)), d);
  for (auto r : {ExclusionReason::None, ExclusionReason::NonAxial, ExclusionReason::Localiser, ExclusionReason::BoneReformat,
                 ExclusionReason::SuspectedSplitBrain})
    EXPECT_EQ(parse_reason(to_string(r)), r);
}
