#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "srl/error.hpp"
#include "srl/ply.hpp"
#include "support.hpp"

using namespace srl;

namespace {

// Minimal independent writer for binary little-endian float PLY files.
std::string make_ply(const std::vector<std::string>& names, const std::vector<std::vector<float>>& rows) {
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(rows.size()) + "\n";
  for (const auto& n : names) out += "property float " + n + "\n";
  out += "end_header\n";
  for (const auto& row : rows) {
    for (float v : row) {
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  }
  return out;
}

std::vector<std::string> stock_names(int l_max, bool label = false) {
  std::vector<std::string> n = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  const int rest = 3 * ((l_max + 1) * (l_max + 1) - 1);
  for (int i = 0; i < rest; ++i) n.push_back("f_rest_" + std::to_string(i));
  n.insert(n.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
  if (label) n.push_back("label");
  return n;
}

std::vector<std::vector<float>> random_rows(std::size_t n, std::size_t columns, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<std::vector<float>> rows(n, std::vector<float>(columns));
  for (auto& r : rows) {
    for (auto& v : r) v = g(rng);
  }
  return rows;
}

std::span<const char> as_span(const std::string& s) { return {s.data(), s.size()}; }

}  // namespace

TEST(Ply, SingleVertexExample) {
  std::vector<float> row = {1, 2, 3, 0, 0, 0, 0.5f, 0.25f, 0.125f};
  row.resize(9 + 45, 0.0f);
  const float ln01 = std::log(0.1f);
  row.insert(row.end(), {0.0f, ln01, ln01, ln01, 1, 0, 0, 0});
  const auto model = splat::parse_ply(as_span(make_ply(stock_names(3), {row})));
  ASSERT_EQ(model.size(), 1u);
  EXPECT_EQ(model.l_max, 3);
  const auto& g = model.gaussians[0];
  EXPECT_NEAR(g.scale.x(), 0.1, 1e-7);
  EXPECT_NEAR(g.scale.z(), 0.1, 1e-7);
  EXPECT_DOUBLE_EQ(g.opacity, 0.5);
  EXPECT_EQ(g.rotation.w(), 1.0);
  EXPECT_EQ(g.position, Vec3(1, 2, 3));
  EXPECT_DOUBLE_EQ(g.sh(0, 1), 0.25);
}

TEST(Ply, DegreeInferredFromRestCount) {
  for (int l = 0; l <= 3; ++l) {
    const auto names = stock_names(l);
    const auto model = splat::parse_ply(as_span(make_ply(names, random_rows(3, names.size(), 1))));
    EXPECT_EQ(model.l_max, l);
  }
  auto names = stock_names(1);
  names.erase(names.begin() + 9);  // 8 f_rest values is not 3 * (K - 1)
  EXPECT_THROW(splat::parse_ply(as_span(make_ply(names, random_rows(1, names.size(), 1)))), ParseError);
}

TEST(Ply, RestIsChannelMajor) {
  const auto names = stock_names(1);
  std::vector<float> row(names.size(), 0.0f);
  // f_rest_{c*3 + (k-1)}
  for (int c = 0; c < 3; ++c) {
    for (int k = 1; k < 4; ++k) row[static_cast<std::size_t>(9 + c * 3 + (k - 1))] = static_cast<float>(10 * c + k);
  }
  row[row.size() - 4] = 1.0f;
  const auto model = splat::parse_ply(as_span(make_ply(names, {row})));
  EXPECT_EQ(model.gaussians[0].sh(2, 1), 12.0);
  EXPECT_EQ(model.gaussians[0].sh(3, 2), 23.0);
  EXPECT_EQ(model.gaussians[0].sh(1, 0), 1.0);
}

TEST(Ply, ConformingFileRoundTripsByteIdentical) {
  srl::testing::TempDir dir;
  for (bool label : {false, true}) {
    const auto names = stock_names(3, label);
    auto rows = random_rows(10000, names.size(), label ? 7 : 3);
    if (label) {
      for (auto& r : rows) r.back() = std::abs(r.back()) / (1.0f + std::abs(r.back()));
    }
    const std::string bytes = make_ply(names, rows);
    const auto model = splat::parse_ply(as_span(bytes));
    EXPECT_EQ(model.has_scores(), label);
    EXPECT_EQ(splat::serialize_ply(model), bytes);
    splat::save_ply(model, dir / "out.ply");
    const auto loaded = splat::load_ply(dir / "out.ply");
    EXPECT_EQ(splat::serialize_ply(loaded), bytes);
  }
}

TEST(Ply, ModifiedModelsWriteFreshValues) {
  const auto names = stock_names(2);
  const auto model = splat::parse_ply(as_span(make_ply(names, random_rows(20, names.size(), 5))));
  auto edited = model;
  edited.gaussians[3].opacity = 0.25;
  edited.gaussians[4].scale *= 2.0;
  edited.gaussians[5].sh(0, 0) = 7.0;
  const auto back = splat::parse_ply(as_span(splat::serialize_ply(edited)));
  EXPECT_NEAR(back.gaussians[3].opacity, 0.25, 1e-7);
  EXPECT_NEAR(back.gaussians[4].scale.y(), edited.gaussians[4].scale.y(), 1e-6 * edited.gaussians[4].scale.y());
  EXPECT_EQ(back.gaussians[5].sh(0, 0), 7.0);
  EXPECT_EQ(back.gaussians[6].opacity, model.gaussians[6].opacity);
}

TEST(Ply, ExtraPropertiesPreservedOrSkipped) {
  auto names = stock_names(0);
  names.push_back("custom");
  auto rows = random_rows(4, names.size(), 8);
  const std::string bytes = make_ply(names, rows);
  const auto kept = splat::parse_ply(as_span(bytes));
  ASSERT_EQ(kept.extra_names.size(), 4u);  // nx ny nz custom
  EXPECT_EQ(kept.extra_names.back(), "custom");
  EXPECT_EQ(kept.gaussians[2].extra.back(), rows[2].back());
  EXPECT_EQ(splat::serialize_ply(kept), bytes);

  splat::PlyReadOptions skip;
  skip.keep_unknown = false;
  const auto dropped = splat::parse_ply(as_span(bytes), skip);
  EXPECT_TRUE(dropped.extra_names.empty());
  EXPECT_NE(splat::serialize_ply(dropped), bytes);
}

TEST(Ply, ScoresWrittenAsLabel) {
  const auto names = stock_names(0);
  auto model = splat::parse_ply(as_span(make_ply(names, random_rows(3, names.size(), 9))));
  for (auto& g : model.gaussians) g.score = 0.75;
  const std::string out = splat::serialize_ply(model);
  EXPECT_NE(out.find("property float label\n"), std::string::npos);
  const auto back = splat::parse_ply(as_span(out));
  EXPECT_DOUBLE_EQ(*back.gaussians[1].score, 0.75);
}

TEST(Ply, SurfelFilesWithTwoScales) {
  std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                                    "scale_0", "scale_1", "rot_0", "rot_1", "rot_2", "rot_3"};
  std::vector<float> row = {0, 0, 0, 1, 1, 1, 0, std::log(0.2f), std::log(0.1f), 1, 0, 0, 0};
  const auto model = splat::parse_ply(as_span(make_ply(names, {row, row})));
  EXPECT_EQ(model.kind, splat::ModelKind::kSurfel);
  EXPECT_NEAR(model.gaussians[0].scale.z(), 1e-3 * 0.1, 1e-9);
}

TEST(Ply, Errors) {
  const auto names = stock_names(0);
  const std::string good = make_ply(names, random_rows(5, names.size(), 10));
  try {
    splat::parse_ply(as_span(good.substr(0, good.size() - 7)));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), static_cast<long long>(good.find("end_header")));
  }
  std::string ascii = good;
  ascii.replace(ascii.find("binary_little_endian"), 20, "ascii");
  EXPECT_THROW(splat::parse_ply(as_span(ascii)), ParseError);
  EXPECT_THROW(splat::parse_ply(as_span(std::string("not a ply"))), ParseError);
  std::vector<std::string> missing = names;
  missing.erase(missing.begin() + 9);  // opacity
  EXPECT_THROW(splat::parse_ply(as_span(make_ply(missing, random_rows(1, missing.size(), 1)))), ParseError);

  std::vector<std::string> gap = names;
  gap.erase(gap.begin() + 10);  // scale_0 with scale_1, scale_2 left
  EXPECT_THROW(splat::parse_ply(as_span(make_ply(gap, random_rows(1, gap.size(), 1)))), ParseError);
  std::vector<std::string> twice = names;
  twice.push_back("x");
  EXPECT_THROW(splat::parse_ply(as_span(make_ply(twice, random_rows(1, twice.size(), 1)))), ParseError);

  splat::GaussianModel empty;
  EXPECT_THROW(splat::serialize_ply(empty), ArgumentError);
  EXPECT_THROW(splat::load_ply("/nonexistent/file.ply"), IoError);
}
