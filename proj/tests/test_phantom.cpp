#include <gtest/gtest.h>

#include <set>

#include "expect_error.hpp"
#include "support.hpp"

using namespace ctprep;
using namespace ctprep::phantom;
using ctprep::testing::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::filesystem::path& p) { return read_file_bytes(p); }

PhantomSpec small_spec(Category c, std::uint64_t seed) {
  PhantomSpec s;
  s.seed = seed;
  s.category = c;
  s.rows = s.cols = 64;
  s.n_slices = 6;
  s.supersample = 1;
  s.age_years = 70;
  return s;
}

DicomSeries load(const GroundTruth& gt) {
  std::vector<std::pair<std::filesystem::path, DicomSlice>> slices;
  for (const auto& f : gt.files) slices.emplace_back(f, parse_file(f));
  auto series = group_series(slices);
  EXPECT_EQ(series.size(), 1u);
  return series.front();
}

/// Extent of an ellipsoid with semi-axes `semi` under `pose`, along unit `e`.
std::pair<double, double> ellipsoid_extent(const AffineTransform& pose, const Eigen::Vector3d& semi,
                                           const Eigen::Vector3d& e) {
  Eigen::Matrix3d l = pose.linear_part();
  Eigen::Matrix3d shape = l * semi.cwiseAbs2().asDiagonal() * l.transpose();
  double half = std::sqrt(e.dot(shape * e));
  double mid = pose.translation().dot(e);
  return {mid - half, mid + half};
}

}  // namespace

TEST(Phantom, LocaliserIsSingleTaggedSlice) {
  TempDir dir;
  auto gt = generate_scan(small_spec(Category::Localiser, 3), dir.path());
  ASSERT_EQ(gt.files.size(), 1u);
  auto s = parse_file(gt.files[0]);
  EXPECT_NE(std::find(s.image_type.begin(), s.image_type.end(), "LOCALIZER"), s.image_type.end());
}

TEST(Phantom, SplitBaseAndVaultAreSeparateShortSeries) {
  TempDir dir;
  auto spec = small_spec(Category::SplitBase, 4);
  spec.n_slices = 12;
  auto base = generate_scan(spec, dir.path());
  spec.category = Category::SplitVault;
  spec.seed = 5;
  auto vault = generate_scan(spec, dir.path());
  EXPECT_NE(base.series_uid, vault.series_uid);
  for (const auto* gt : {&base, &vault}) {
    auto series = load(*gt);
    EXPECT_EQ(series.slices.size(), 12u);
    EXPECT_LT(assembled_slice_count(series), 25u);
  }
}

TEST(Phantom, SameSpecGivesByteIdenticalFiles) {
  TempDir a, b;
  for (auto c : kAllCategories) {
    auto spec = small_spec(c, 40 + std::uint64_t(c));
    spec.noise_sigma_hu = 3.0;
    auto ga = generate_scan(spec, a.path());
    auto gb = generate_scan(spec, b.path());
    ASSERT_EQ(ga.files.size(), gb.files.size());
    for (std::size_t i = 0; i < ga.files.size(); ++i) EXPECT_EQ(bytes_of(ga.files[i]), bytes_of(gb.files[i]));
  }
}

TEST(Phantom, CategoriesTriageAsLabelled) {
  TempDir dir;
  for (auto c : kAllCategories) {
    for (bool blank : {false, true}) {
      auto spec = small_spec(c, 60 + std::uint64_t(c) * 2 + blank);
      spec.n_slices = c == Category::SplitBase || c == Category::SplitVault ? 12 : 30;
      spec.blank_image_type = blank;
      auto gt = generate_scan(spec, dir.path());
      auto parts = split_mixed_series(load(gt));
      ASSERT_EQ(parts.size(), gt.expected.size()) << to_string(c);
      for (std::size_t i = 0; i < parts.size(); ++i) {
        auto v = triage_series(parts[i].second, parts[i].first, assembled_slice_count(parts[i].second));
        EXPECT_EQ(v.orientation, gt.expected[i].orientation) << to_string(c);
        EXPECT_EQ(v.decision, gt.expected[i].decision) << to_string(c);
        EXPECT_EQ(v.reason, gt.expected[i].reason) << to_string(c);
      }
    }
  }
}

TEST(Phantom, TemplatesDifferAndAreReadable) {
  TempDir dir;
  generate_templates(dir.path());
  auto bank = load_templates(dir.path());
  ASSERT_EQ(bank.younger.data.shape(), bank.older.data.shape());
  double mad = 0.0;
  std::size_t dark_young = 0, dark_old = 0;
  for (std::size_t i = 0; i < bank.younger.data.size(); ++i) {
    mad += std::abs(double(bank.younger.data.data()[i]) - double(bank.older.data.data()[i]));
  }
  // Ventricles are the only dark tissue inside the brain on the MR scale.
  for (std::size_t i = 0; i < bank.younger.data.size(); ++i) {
    dark_young += bank.younger.data.data()[i] == float(intensity(Tissue::Ventricle, Contrast::MR));
    dark_old += bank.older.data.data()[i] == float(intensity(Tissue::Ventricle, Contrast::MR));
  }
  EXPECT_GT(mad, 0.0);
  EXPECT_GT(dark_old, dark_young);
  auto header = decode_header(read_file_bytes(template_paths(dir.path()).younger));
  EXPECT_EQ(header.dim[0], 3);
}

TEST(Phantom, LabelsCoverEverySeriesOnce) {
  TempDir dir;
  CorpusSpec corpus = balanced_corpus(1, 7);
  corpus.rows = corpus.cols = 64;
  corpus.n_slices = 26;
  auto truths = generate_corpus(corpus, dir.path());
  auto labels = read_labels(dir / kLabelsFile);
  ASSERT_EQ(labels.size(), truths.size());
  std::multiset<std::string> label_uids;
  for (const auto& gt : labels) label_uids.insert(gt.series_uid);

  std::vector<std::pair<std::filesystem::path, DicomSlice>> slices;
  for (const auto& f : list_files_recursive(dir.path()))
    if (looks_like_dicom(f)) slices.emplace_back(f, parse_file(f));
  std::set<std::string> found;
  for (const auto& s : group_series(slices)) found.insert(s.series_uid);
  EXPECT_EQ(found.size(), label_uids.size());
  for (const auto& uid : found) EXPECT_EQ(label_uids.count(uid), 1u) << uid;

  // Ages missing from the tag are recoverable from the sidecar.
  auto ages = load_age_sidecar(dir / kAgeSidecarFile);
  for (const auto& gt : truths) {
    if (gt.age_years && !gt.age_in_tag) EXPECT_EQ(ages.at(gt.series_uid), *gt.age_years);
  }
}

TEST(Phantom, SkullExtentMatchesHeadBox) {
  // The egg-shaped skull lies between the ellipsoids with the anterior and
  // posterior semi-axes; the detected box must sit between their extents.
  TempDir dir;
  const HeadModel head;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.rows = spec.cols = 128;
    spec.n_slices = 40;
    spec.supersample = 1;
    if (seed % 3 == 0) spec.pose = AffineTransform{};
    auto gt = generate_scan(spec, dir.path());
    auto series = load(gt);
    Volume v = assemble(series);
    const std::size_t margin = 5;
    CropBox box = find_head_box(v, 300.0, 0);
    CropBox padded = find_head_box(v, 300.0, margin);
    AffineTransform pose = spec.pose.value_or(default_pose(seed));
    const double px = series.slices.front().pixel_spacing[0];
    const auto& origin = series.slices.front().image_position;
    auto to_col = [&](double x) { return (x - origin[0]) / px; };
    auto to_row = [&](double y) { return (y - origin[1]) / px; };
    Eigen::Vector3d small(head.semi_x, head.semi_y_anterior, head.semi_z),
        large(head.semi_x, head.semi_y_posterior, head.semi_z);
    auto xs = ellipsoid_extent(pose, small, Eigen::Vector3d::UnitX()), xl = ellipsoid_extent(pose, large, Eigen::Vector3d::UnitX());
    auto ys = ellipsoid_extent(pose, small, Eigen::Vector3d::UnitY()), yl = ellipsoid_extent(pose, large, Eigen::Vector3d::UnitY());
    const double tol = 1.0;  // one voxel of sampling slack
    EXPECT_GE(double(box.col_min), to_col(xl.first) - tol) << seed;
    EXPECT_LE(double(box.col_min), to_col(xs.first) + tol) << seed;
    EXPECT_LE(double(box.col_max), to_col(xl.second) + tol) << seed;
    EXPECT_GE(double(box.col_max), to_col(xs.second) - tol) << seed;
    EXPECT_GE(double(box.row_min), to_row(yl.first) - tol) << seed;
    EXPECT_LE(double(box.row_min), to_row(ys.first) + tol) << seed;
    EXPECT_LE(double(box.row_max), to_row(yl.second) + tol) << seed;
    EXPECT_GE(double(box.row_max), to_row(ys.second) - tol) << seed;
    // With the margin, the box contains the whole analytic skull.
    EXPECT_LE(double(padded.col_min), to_col(xs.first));
    EXPECT_GE(double(padded.col_max), to_col(xs.second));
    EXPECT_LE(double(padded.row_min), to_row(ys.first));
    EXPECT_GE(double(padded.row_max), to_row(ys.second));
  }
}

TEST(Phantom, GroundTruthTransformMapsTemplateOntoScan) {
  // Rendering the CT head through the recorded transform onto the scan grid
  // must reproduce the written pixels.
  TempDir dir;
  PhantomSpec spec;
  spec.seed = 21;
  spec.rows = spec.cols = 64;
  spec.n_slices = 8;
  spec.supersample = 1;
  spec.age_years = 50;
  auto gt = generate_scan(spec, dir.path());
  ASSERT_TRUE(gt.true_transform);
  Volume v = assemble(load(gt));
  Volume again = render_head(head_for(TemplateChoice::Younger), Contrast::CT, {v.n_slices(), v.height(), v.width()},
                             v.spacing, *gt.true_transform, TemplateGeometry{}, 1);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i)
    mismatched += std::abs(v.data.data()[i] - again.data.data()[i]) > 0.5f;
  // Boundary voxels may land on either side of a surface after quantization.
  EXPECT_LT(double(mismatched) / double(v.data.size()), 0.002);
}

TEST(Phantom, RejectsTinyImages) {
  TempDir dir;
  auto spec = small_spec(Category::AxialSoft, 1);
  spec.rows = 32;
  EXPECT_CTPREP_ERROR(generate_scan(spec, dir.path()), ConfigError);
}
