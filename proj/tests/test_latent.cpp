#include <gtest/gtest.h>

#include <fstream>

#include "pandas/latent.hpp"
#include "support.hpp"

using namespace pandas;
using namespace pandas::testing;

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(const Mesh& a, const Mesh& b) { return same_bits(a.vertices(), b.vertices()); }

class LatentFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    source = jittered(small_bar(), 0.01, 1);
    target = jittered(source, 0.08, 2);
    other = jittered(source, 0.08, 3);
    params = random_model(5, 0.2);
    const int m = source.num_faces();
    std::vector<int> left, right;
    for (int t = 0; t < m; ++t) (t % 3 == 0 ? left : right).push_back(t);
    maskA = mask_from_faces(m, left, "left");
    maskB = mask_from_faces(m, right, "right");
  }
  Mesh source, target, other;
  ModelParams params;
  Mask maskA, maskB;
};

std::vector<LatentCode> random_codes(int count, int dim, std::uint64_t seed) {
  Matrix X = random_matrix(count, dim, seed);
  std::vector<LatentCode> out;
  for (int j = 0; j < count; ++j) out.push_back(LatentCode{X.row(j)});
  return out;
}

}  // namespace

TEST_F(LatentFixture, InterpolationEndpointsBitExact) {
  EXPECT_TRUE(same_bits(interpolate(source, target, params, 0.0), zero_decode(source, params)));
  EXPECT_TRUE(same_bits(interpolate(source, target, params, 1.0), predict(source, target, params)));
  auto frames = interpolation_sequence(source, target, params, 7);
  ASSERT_EQ(frames.size(), 7u);
  EXPECT_TRUE(same_bits(frames.front(), zero_decode(source, params)));
  EXPECT_TRUE(same_bits(frames.back(), predict(source, target, params)));
  EXPECT_TRUE(same_bits(frames[3], interpolate(source, target, params, 0.5)));
  EXPECT_THROW(interpolation_sequence(source, target, params, 1), Error);
}

TEST_F(LatentFixture, PartialDeformDegenerateMasks) {
  const int m = source.num_faces();
  for (double alpha : {0.0, 0.4, 1.0}) {
    EXPECT_TRUE(same_bits(partial_deform(source, target, Mask::full(m), params, alpha),
                          interpolate(source, target, params, alpha)));
    EXPECT_TRUE(same_bits(partial_deform(source, target, Mask::empty(m), params, alpha), zero_decode(source, params)));
  }
}

TEST_F(LatentFixture, MixConsistency) {
  const int m = source.num_faces();
  MixPart full = part_from_target(source, target, Mask::full(m), params);
  MixPart half = part_from_target(source, target, maskA, params);
  for (double alpha : {0.0, 0.7, 1.0}) {
    EXPECT_TRUE(same_bits(mix(source, {full}, params, alpha), interpolate(source, target, params, alpha)));
    EXPECT_TRUE(same_bits(mix(source, {half}, params, alpha), partial_deform(source, target, maskA, params, alpha)));
  }
  EXPECT_TRUE(same_bits(mix(source, {}, params, 1.0), zero_decode(source, params)));
}

TEST_F(LatentFixture, DisjointPartsMatchRowwiseMerge) {
  FeatureField local = extract_features(source, params);
  LatentCode z1 = encode_deformation(source, target, params), z2 = encode_deformation(source, other, params);
  FeatureField mixed = mix_field(local, {{z1, maskA}, {z2, maskB}}, 1.0, params.config.codeDim);
  FeatureField a = assemble(local, z1, maskA.weights), b = assemble(local, z2, maskB.weights);
  Matrix merged(source.num_faces(), params.config.codeDim);
  for (int t = 0; t < source.num_faces(); ++t) merged.row(t) = maskA.weights[t] != 0.0 ? a.code->row(t) : b.code->row(t);
  EXPECT_TRUE(same_bits(*mixed.code, merged));
  EXPECT_TRUE(same_bits(mixed.local, local.local));
}

TEST_F(LatentFixture, CodeAlgebraIsLinear) {
  FeatureField local = extract_features(source, params);
  auto codes = random_codes(2, params.config.codeDim, 9);
  LatentCode sum{codes[0].z + codes[1].z};
  for (const Mask& mask : {maskA, Mask::full(source.num_faces())}) {
    FeatureField two = mix_field(local, {{codes[0], mask}, {codes[1], mask}}, 0.3, params.config.codeDim);
    FeatureField one = mix_field(local, {{sum, mask}}, 0.3, params.config.codeDim);
    EXPECT_TRUE(same_bits(*two.code, *one.code));
  }
  EXPECT_THROW(mix_field(local, {{codes[0], Mask::full(3)}}, 1.0, params.config.codeDim), Error);
  EXPECT_THROW(mix_field(local, {{LatentCode{Eigen::RowVectorXd::Ones(2)}, maskA}}, 1.0, params.config.codeDim), Error);
}

TEST_F(LatentFixture, SelfEncodingIsZero) {
  LatentCode z = encode_deformation(source, source, params);
  EXPECT_EQ(z.z.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(same_bits(predict(source, source, params), zero_decode(source, params)));
}

TEST_F(LatentFixture, MeanPose) {
  EXPECT_TRUE(same_bits(mean_pose(source, {target}, std::nullopt, params), predict(source, target, params)));
  Mesh triple = mean_pose(source, {target, target, target}, std::nullopt, params);
  EXPECT_LE((triple.vertices() - predict(source, target, params).vertices()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(same_bits(mean_pose(source, {target}, maskA, params), partial_deform(source, target, maskA, params, 1.0)));
  EXPECT_THROW(mean_pose(source, {}, std::nullopt, params), Error);

  auto codes = random_codes(1, params.config.codeDim, 4);
  LatentCode zbar = mean_code({codes[0], LatentCode{-codes[0].z}});
  EXPECT_EQ(zbar.z.cwiseAbs().maxCoeff(), 0.0);
  FeatureField local = extract_features(source, params);
  EXPECT_TRUE(same_bits(generate(source, assemble(local, zbar), params).mesh, zero_decode(source, params)));

  // The mean of a pair equals the half-weighted mix of both codes.
  MixPart p1 = part_from_target(source, target, Mask::full(source.num_faces()), params);
  MixPart p2 = part_from_target(source, other, Mask::full(source.num_faces()), params);
  Mesh mid = mix(source, {p1, p2}, params, 0.5);
  EXPECT_LE((mean_pose(source, {target, other}, std::nullopt, params).vertices() - mid.vertices()).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(Pca, MatchesCovarianceEigenOracle) {
  auto codes = random_codes(9, 5, 21);
  auto pcs = pca_codes(codes, 5);
  Eigen::MatrixXd X(9, 5);
  for (int j = 0; j < 9; ++j) X.row(j) = codes[j].z;
  Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  Eigen::MatrixXd cov = C.transpose() * C / 9.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(pcs[k].variance, es.eigenvalues()[4 - k], 1e-8);
    EXPECT_NEAR(pcs[k].direction.z.norm(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(pcs[k].direction.z.dot(es.eigenvectors().col(4 - k))), 1.0, 1e-8);
    if (k > 0) EXPECT_GE(pcs[k - 1].variance, pcs[k].variance);
  }
}

TEST(Pca, TraceIdentityAndRankOne) {
  auto codes = random_codes(6, 8, 22);
  auto pcs = pca_codes(codes, 5);
  Eigen::MatrixXd X(6, 8);
  for (int j = 0; j < 6; ++j) X.row(j) = codes[j].z;
  Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  double total = 0.0;
  for (const auto& pc : pcs) total += pc.variance;
  EXPECT_NEAR(total, C.squaredNorm() / 6.0, 1e-8);

  Eigen::RowVectorXd dir = random_matrix(1, 8, 23), base = random_matrix(1, 8, 24);
  std::vector<LatentCode> line;
  for (int j = 0; j < 7; ++j) line.push_back(LatentCode{base + (j - 3.0) * dir});
  auto lp = pca_codes(line, 3);
  double sum = lp[0].variance + lp[1].variance + lp[2].variance;
  EXPECT_GE(lp[0].variance / sum, 0.999);
  EXPECT_NEAR(std::abs(lp[0].direction.z.dot(dir.normalized())), 1.0, 1e-10);
}

TEST(Pca, DegenerateAndErrors) {
  std::vector<LatentCode> same(4, LatentCode{Eigen::RowVectorXd::Constant(3, 0.5)});
  auto pcs = pca_codes(same, 2);
  EXPECT_EQ(pcs[0].variance, 0.0);
  EXPECT_EQ(pcs[1].direction.z, Eigen::RowVectorXd::Unit(3, 1));
  EXPECT_THROW(pca_codes(same, 0), Error);
  EXPECT_THROW(pca_codes(same, 4), Error);
  EXPECT_THROW(pca_codes({}, 1), Error);
}

TEST_F(LatentFixture, PcaPosesAreDeterministic) {
  auto a = pca_poses(source, {target, other, source}, params, 2);
  auto b = pca_poses(source, {target, other, source}, params, 2);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_TRUE(same_bits(a[0].direction.z, b[0].direction.z));
  EXPECT_THROW(pca_poses(source, {target}, params, 2), Error);
}

TEST_F(LatentFixture, TransferDegenerateCases) {
  EXPECT_TRUE(same_bits(transfer(source, source, target, params, std::nullopt, 1.0), predict(source, target, params)));
  Mesh wide = jittered(source, 0.02, 8);
  EXPECT_TRUE(same_bits(transfer(wide, source, target, params, std::nullopt, 0.0), zero_decode(wide, params)));
  EXPECT_TRUE(same_bits(transfer(wide, source, target, params, maskA, 1.0),
                        generate(wide, assemble(extract_features(wide, params), encode_deformation(source, target, params),
                                                maskA.weights),
                                 params)
                            .mesh));
  EXPECT_THROW(transfer(small_sheet(), source, target, params, std::nullopt, 1.0), Error);
}

TEST_F(LatentFixture, LocalityDegenerateMasks) {
  const int m = source.num_faces();
  auto full = locality_profile(source, target, Mask::full(m), params);
  ASSERT_EQ(full.size(), 1u);
  EXPECT_EQ(full[0].distance, 0);
  EXPECT_EQ(full[0].faces, m);

  ModelParams untrained = init_model(tiny_config(), 3, 0.01);
  auto none = locality_profile(source, target, Mask::empty(m), untrained);
  ASSERT_EQ(none.size(), 1u);
  EXPECT_EQ(none[0].distance, -1);
  EXPECT_LE(none[0].jacobianDeviation, 1e-6);
  EXPECT_LE(none[0].gradientDeviation, 1e-6);

  auto part = locality_profile(source, target, maskA, params);
  int total = 0;
  for (std::size_t k = 0; k < part.size(); ++k) {
    total += part[k].faces;
    if (k > 0) EXPECT_GT(part[k].distance, part[k - 1].distance);
  }
  EXPECT_EQ(total, m);
  EXPECT_EQ(part[0].faces, static_cast<int>(maskA.face_indices().size()));
}

TEST(MaskIo, JsonAndColumnForms) {
  auto dir = temp_dir("masks");
  Mask m = mask_from_faces(10, {1, 4, 9}, "tip");
  save_mask((dir / "m.json").string(), m);
  Mask back = load_mask((dir / "m.json").string(), 10);
  EXPECT_EQ(back.face_indices(), (std::vector<int>{1, 4, 9}));
  EXPECT_EQ(back.name, "tip");
  {
    std::ofstream out(dir / "m.txt");
    out << "0\n1\n1\n0\n";
  }
  EXPECT_EQ(load_mask((dir / "m.txt").string(), 4).face_indices(), (std::vector<int>{1, 2}));
  EXPECT_THROW(load_mask((dir / "m.txt").string(), 5), Error);
  EXPECT_THROW(load_mask((dir / "m.json").string(), 5), Error);
  EXPECT_THROW(load_mask((dir / "missing.json").string(), 5), Error);
  {
    std::ofstream out(dir / "bad.json");
    out << "{\"faceIndices\": [1,";
  }
  EXPECT_THROW(load_mask((dir / "bad.json").string(), 5), Error);
  EXPECT_THROW(mask_from_faces(3, {-1}), Error);
}
