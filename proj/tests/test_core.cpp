#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "strategist/core.hpp"
#include "strategist/random.hpp"
#include "strategist/trajectory_io.hpp"

using namespace strategist;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("strategist_core_" + name);
}

template <class Fn>
Error capture(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an Error";
  return Error(ErrorCode::invalid_argument, "none");
}

}  // namespace

TEST(SearchSpace, RejectsDegenerateAxis) {
  const auto e = capture([] { SearchSpace(vec({0.0, 1.0}), vec({1.0, 1.0})); });
  EXPECT_EQ(e.code(), ErrorCode::degenerate_axis);
  EXPECT_EQ(e.detail(), "axis=1");
}

TEST(SearchSpace, LogVolumeIsSumOfLogRanges) {
  const SearchSpace s(vec({0.0, -1.0, 2.0}), vec({2.0, 1.0, 2.5}));
  EXPECT_NEAR(s.log_volume(), std::log(2.0 * 2.0 * 0.5), 1e-15);
  // 600 axes of width 4 overflow a direct product but not the log.
  EXPECT_NEAR(SearchSpace::cube(600, -2.0, 2.0).log_volume(), 600 * std::log(4.0), 1e-9);
}

TEST(Normalize, MidpointMapsToZero) {
  Trajectory t(SearchSpace(vec({0.0}), vec({2.0})));
  t.append({vec({1.0}), 3.0});
  const auto n = normalize_trajectory(t);
  EXPECT_EQ(n[0].x[0], 0.0);
  EXPECT_EQ(n[0].f, 3.0);
}

TEST(Normalize, LowerCornerMapsToMinusOne) {
  const auto space = SearchSpace::cube(30, -2.0, 2.0);
  Trajectory t(space);
  t.append({space.lower(), 1.0});
  const auto n = normalize_trajectory(t);
  EXPECT_TRUE((n[0].x.array() == -1.0).all());
  EXPECT_TRUE(is_unit_space(n.space()));
}

TEST(Normalize, AffineMapHandValue) {
  // 2 * (7.5 - 0) / 10 - 1 = 0.5
  Trajectory t(SearchSpace(vec({0.0}), vec({10.0})));
  t.append({vec({7.5}), 0.0});
  EXPECT_DOUBLE_EQ(normalize_trajectory(t)[0].x[0], 0.5);
}

TEST(Normalize, InverseRoundTrip) {
  const SearchSpace space(vec({-5.0, 0.0, 1e-3}), vec({10.0, 15.0, 2e-3}));
  Trajectory t(space);
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Vector x(3);
    for (int a = 0; a < 3; ++a) x[a] = space.lower()[a] + u(rng) * space.range()[a];
    t.append({x, u(rng)});
  }
  const auto back = denormalize_trajectory(normalize_trajectory(t), space);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(back[i].x[a], t[i].x[a], 1e-12 * (1.0 + std::abs(t[i].x[a])));
    EXPECT_EQ(back[i].f, t[i].f);
  }
}

TEST(Normalize, DegenerateBoundsRejected) {
  const auto e = capture([] { BoxMap(vec({0.0, 3.0}), vec({1.0, 3.0})); });
  EXPECT_EQ(e.code(), ErrorCode::degenerate_axis);
}

TEST(Trajectory, InclusiveBoundsAccepted) {
  Trajectory t(SearchSpace::unit(2));
  t.append({vec({-1.0, 1.0}), 0.0});
  EXPECT_EQ(t.size(), 1u);
}

TEST(Trajectory, OutOfBoundsRejected) {
  Trajectory t(SearchSpace::unit(2));
  const auto e = capture([&] { t.append({vec({0.0, std::nextafter(1.0, 2.0)}), 0.0}); });
  EXPECT_EQ(e.code(), ErrorCode::out_of_bounds);
  EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos);
}

TEST(Trajectory, DuplicateRejected) {
  Trajectory t(SearchSpace::unit(1));
  t.append({vec({0.25}), 0.0});
  EXPECT_EQ(capture([&] { t.append({vec({0.25}), 1.0}); }).code(), ErrorCode::duplicate_sample);
}

TEST(Trajectory, NonFiniteObjectiveRejected) {
  Trajectory t(SearchSpace::unit(1));
  EXPECT_THROW(t.append({vec({0.0}), std::numeric_limits<double>::quiet_NaN()}), Error);
}

TEST(TrajectoryIo, RoundTripIsBitExact) {
  Trajectory t(SearchSpace(vec({0.1}), vec({0.7})));
  t.append({vec({0.1 + 1.0 / 3.0}), std::sqrt(2.0)});
  t.append({vec({0.7}), -1e-300});
  const auto path = temp_file("roundtrip.json");
  save_trajectory(t, path);
  const auto back = load_trajectory(path);
  EXPECT_TRUE(back == t);
  std::filesystem::remove(path);
}

TEST(TrajectoryIo, WrongLengthNamesRecord) {
  const auto path = temp_file("bad_len.json");
  {
    std::ofstream os(path);
    os << R"({"space":{"lower":[0,0],"upper":[1,1]},"samples":[{"x":[0.5,0.5],"f":1},{"x":[0.5],"f":2}]})";
  }
  const auto e = capture([&] { load_trajectory(path); });
  EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  EXPECT_NE(std::string(e.what()).find("samples[1]"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(TrajectoryIo, MalformedDocument) {
  const auto path = temp_file("malformed.json");
  {
    std::ofstream os(path);
    os << "{\"space\": ";
  }
  EXPECT_EQ(capture([&] { load_trajectory(path); }).code(), ErrorCode::malformed_document);
  std::filesystem::remove(path);
}

TEST(TrajectoryIo, DuplicateInFileRejected) {
  const auto path = temp_file("dup.json");
  {
    std::ofstream os(path);
    os << R"({"space":{"lower":[0],"upper":[1]},"samples":[{"x":[0.5],"f":1},{"x":[0.5],"f":2}]})";
  }
  const auto e = capture([&] { load_trajectory(path); });
  EXPECT_EQ(e.code(), ErrorCode::duplicate_sample);
  EXPECT_NE(std::string(e.what()).find("samples[1]"), std::string::npos);
  std::filesystem::remove(path);
}
