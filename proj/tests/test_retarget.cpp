#include "oracles.hpp"

#include "teledex/errors.hpp"
#include "teledex/retarget.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace teledex;

namespace {

// One thumb, one joint at `root`, keypoints at the root and `length` along x.
HandModel stick(double root, double length) {
  const std::string doc = R"({"name": "stick", "fingers": [{"name": "thumb", "joints": [
      {"origin": {"xyz": [)" + std::to_string(root) + R"(, 0, 0], "rpy": [0, 0, 0]},
       "axis": [0, 0, 1], "lower": -1, "upper": 1}],
      "keypoints": [{"id": 0, "link": 0, "offset": [0, 0, 0], "role": "mcp"},
                    {"id": 1, "link": 0, "offset": [)" + std::to_string(length) +
                          R"(, 0, 0], "role": "fingertip"}]}]})";
  return load_hand_model(doc);
}

HumanHandFrame frame_of(std::initializer_list<std::pair<KeypointKey, Vec3>> points) {
  HumanHandFrame f;
  for (const auto& [k, p] : points) f.points[k] = p;
  return f;
}

}  // namespace

TEST_CASE("calibration scale and root offset") {
  const auto human = frame_of({{{0, 0}, Vec3(0, 0, 0)}, {{0, 1}, Vec3(0.04, 0, 0)}});
  const auto half = calibrate(stick(0.0, 0.02), JointVector::Zero(1), human, {});
  CHECK(half.scale.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-15));

  const auto shifted = calibrate(stick(0.01, 0.04), JointVector::Zero(1), human, {});
  CHECK(shifted.root_offset.at(0).isApprox(Vec3(0.01, 0, 0)));
  CHECK(shifted.scale.at({0, 0}) == doctest::Approx(1.0));

  const auto flat = frame_of({{{0, 0}, Vec3(0, 0, 0)}, {{0, 1}, Vec3(0, 0, 0)}});
  CHECK_THROWS_AS(calibrate(stick(0.0, 0.02), JointVector::Zero(1), flat, {}),
                  DegenerateCalibrationError);
  CHECK_THROWS_AS(calibrate(stick(0.0, 0.02), JointVector::Zero(1),
                            frame_of({{{0, 0}, Vec3(0, 0, 0)}}), {}),
                  MissingError);
}

TEST_CASE("calibration proximity band and flat motion") {
  const auto model = oracle::load_model("o6_like");
  const auto rest = forward_keypoints(model, model.lower_limits());
  HumanHandFrame pbar{0.0, rest};
  std::vector<HumanHandFrame> motion{pbar};
  CHECK_THROWS_AS(calibrate(model, model.lower_limits(), pbar, motion), DegenerateCalibrationError);

  motion.push_back({0.04, forward_keypoints(model, model.upper_limits())});
  const auto p = calibrate(model, model.lower_limits(), pbar, motion);
  for (int f = 1; f < kFingerSlots; ++f) {
    CHECK(p.rho_min.at(f) < p.rho_max.at(f));
    for (int j = 0; j < 3; ++j) CHECK(p.scale.at({f, j}) == doctest::Approx(1.0));
    CHECK(p.root_offset.at(f).norm() < 1e-15);
  }
}

TEST_CASE("calibration scale is inversely proportional to human size") {
  const auto model = oracle::load_model("l10_like");
  const auto human = oracle::load_model("human_reference");
  const auto pts = forward_keypoints(human, human.lower_limits());
  HumanHandFrame pbar{0.0, pts};
  const auto base = calibrate(model, model.lower_limits(), pbar, {});
  for (double c : {0.5, 1.7, 3.0}) {
    HumanHandFrame scaled{0.0, {}};
    for (const auto& [k, p] : pts) scaled.points[k] = c * p;
    const auto p = calibrate(model, model.lower_limits(), scaled, {});
    for (const auto& [key, s] : base.scale) {
      CHECK(p.scale.at(key) == doctest::Approx(s / c).epsilon(1e-12));
    }
  }
}

TEST_CASE("keypoint transform chain") {
  CalibrationProfile p;
  p.theta0 = JointVector::Zero(1);
  p.scale[{0, 0}] = 0.5;
  p.scale[{0, 1}] = 0.5;
  p.root_offset[0] = Vec3(0.01, 0, 0);
  const auto frame = frame_of(
      {{{0, 0}, Vec3(0, 0, 0)}, {{0, 1}, Vec3(0.04, 0, 0)}, {{0, 2}, Vec3(0.07, 0, 0)}});
  const auto out = transform_keypoints(p, frame);
  CHECK(out.at({0, 0}) == Vec3(0, 0, 0));
  CHECK(out.at({0, 1}) == Vec3(0.03, 0, 0));
  CHECK(out.at({0, 2}) == Vec3(0.045, 0, 0));

  const auto human = oracle::load_model("human_reference");
  const auto id = oracle::identity_profile(human);
  HumanHandFrame f{0.0, forward_keypoints(human, human.upper_limits())};
  for (const auto& [k, v] : transform_keypoints(id, f)) {
    CHECK((v - f.points.at(k)).norm() < 1e-15);
  }

  p.scale.erase({0, 1});
  p.scale[{0, 1}] = 0.5;
  HumanHandFrame missing = frame;
  missing.points.erase({0, 2});
  CHECK_THROWS_AS(transform_keypoints(p, missing), MissingError);
}

TEST_CASE("alignment cost") {
  const auto m = oracle::load_model("planar2");
  JointVector th(2);
  th << 0.4, 0.7;
  auto target = forward_keypoints(m, th);
  const std::vector<KeypointKey> K{{0, 1}, {0, 2}};
  CHECK(align_cost(m, th, target, K) == 0.0);

  auto one = target;
  one[{0, 2}] += Vec3(0.01, 0, 0);
  CHECK(align_cost(m, th, one, K) == doctest::Approx(1e-4).epsilon(1e-12));

  auto two = one;
  two[{0, 1}] += Vec3(0, 0.02, 0);
  CHECK(align_cost(m, th, two, K) == doctest::Approx(5e-4).epsilon(1e-12));

  CHECK_THROWS_AS(align_cost(m, JointVector::Zero(3), target, K), DimensionError);
  target.erase({0, 1});
  CHECK_THROWS_AS(align_cost(m, th, target, K), MissingError);
}

TEST_CASE("coupling weight") {
  const auto model = oracle::load_model("o6_like");
  auto p = oracle::identity_profile(model, 0.02, 0.10);
  const auto thumb_tip = model.fingertip_key(kThumb);
  const auto index_tip = model.fingertip_key(1);
  auto frame_at = [&](double dist) {
    HumanHandFrame f{0.0, forward_keypoints(model, model.lower_limits())};
    f.points[index_tip] = f.points[thumb_tip] + Vec3(0, dist, 0);
    return f;
  };
  CHECK(proximity(p, frame_at(0.02), 1) == doctest::Approx(1.0));
  CHECK(coupling_weight(p, frame_at(0.02), 1, 10, 0.5) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-5.0))).epsilon(1e-15));
  CHECK(coupling_weight(p, frame_at(0.06), 1, 10, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(coupling_weight(p, frame_at(0.10), 1, 10, 0.5) ==
        doctest::Approx(1.0 / (1.0 + std::exp(5.0))).epsilon(1e-12));
  CHECK(proximity(p, frame_at(0.5), 1) == 0.0);
  CHECK(proximity(p, frame_at(0.0), 1) == 1.0);

  double last = 0.0;
  for (double d = 0.15; d >= -0.01; d -= 0.001) {
    const double b = coupling_weight(p, frame_at(std::abs(d)), 1, 10, 0.5);
    CHECK(b > 0.0);
    CHECK(b < 1.0);
    if (d >= 0.0) {
      CHECK(b >= last);
      last = b;
    }
  }

  auto no_tip = frame_at(0.05);
  no_tip.points.erase(index_tip);
  CHECK_THROWS_AS(coupling_weight(p, no_tip, 1, 10, 0.5), MissingError);
}

TEST_CASE("coupling cost") {
  const auto model = oracle::load_model("o6_like");
  std::mt19937_64 rng(2);
  const auto th = oracle::random_within(model, rng);
  HumanHandFrame same{0.0, forward_keypoints(model, th)};
  CHECK(coupling_cost(model, th, same, {{1, 0.7}}, {1}) == 0.0);

  HumanHandFrame other{0.0, forward_keypoints(model, oracle::random_within(model, rng))};
  CHECK(coupling_cost(model, th, other, {{1, 0.0}, {2, 0.0}}, {1, 2}) == 0.0);

  HumanHandFrame shifted = same;
  shifted.points[model.fingertip_key(1)] += Vec3(0.02, 0, 0);
  CHECK(coupling_cost(model, th, shifted, {{1, 0.5}}, {1}) ==
        doctest::Approx(2e-4).epsilon(1e-10));
  CHECK_THROWS_AS(coupling_cost(model, th, shifted, {}, {1}), MissingError);
}

TEST_CASE("smoothing cost") {
  JointVector a(2);
  JointVector b(2);
  a << 0.3, 0.5;
  CHECK(smooth_cost(a, a) == 0.0);
  b << 0.4, 0.5;
  CHECK(smooth_cost(b, a) == doctest::Approx(0.01).epsilon(1e-12));
  b << 0.4, 0.3;
  CHECK(smooth_cost(b, a) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(smooth_cost(a, JointVector::Zero(3)), DimensionError);
}

TEST_CASE("total cost is the weighted sum of its terms") {
  const auto model = oracle::load_model("o6_like");
  std::mt19937_64 rng(4);
  const auto c = oracle::random_case(model, rng);

  RetargetConfig cfg;
  HumanHandFrame exact{0.0, forward_keypoints(model, c.theta)};
  auto prof = oracle::identity_profile(model);
  const auto zero = total_cost(model, c.theta, c.theta, transform_keypoints(prof, exact), exact,
                               prof, cfg);
  CHECK(zero.total == doctest::Approx(0.0));

  cfg.alpha_couple = 0.0;
  cfg.alpha_smooth = 0.0;
  const auto align_only =
      total_cost(model, c.theta, c.theta_prev, c.pprime, c.frame, c.profile, cfg);
  CHECK(align_only.total ==
        align_cost(model, c.theta, c.pprime, resolve_keypoints(model, cfg)));

  cfg = RetargetConfig{};
  const auto b = total_cost(model, c.theta, c.theta_prev, c.pprime, c.frame, c.profile, cfg);
  CHECK(b.total == doctest::Approx(1.0 * b.align + 0.5 * b.couple + 0.1 * b.smooth));
  CHECK(1.0 * 2e-4 + 0.5 * 4e-4 + 0.1 * 1e-2 == doctest::Approx(1.4e-3));
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 rng(21);
  RetargetConfig cfg;
  for (const char* name : {"planar2", "o6_like", "l10_like"}) {
    const auto model = oracle::load_model(name);
    for (int trial = 0; trial < 40; ++trial) {
      const auto c = oracle::random_case(model, rng);
      const auto g = total_cost_gradient(model, c.theta, c.theta_prev, c.pprime, c.frame,
                                         c.profile, cfg);
      const auto fd = oracle::fd_gradient(
          [&](const JointVector& th) {
            return total_cost(model, th, c.theta_prev, c.pprime, c.frame, c.profile, cfg).total;
          },
          c.theta);
      CHECK(oracle::relative_error(g, fd) < 1e-5);
    }
  }
}

TEST_CASE("config defaults and validation") {
  RetargetConfig cfg;
  CHECK(cfg.alpha_align == 1.0);
  CHECK(cfg.alpha_couple == 0.5);
  CHECK(cfg.alpha_smooth == 0.1);
  CHECK(cfg.sigma == 10.0);
  CHECK(cfg.tau == 0.5);
  const auto model = oracle::load_model("o6_like");
  CHECK(resolve_keypoints(model, cfg).size() == 15);
  CHECK(resolve_coupled_fingers(model, cfg) == std::vector<int>{1, 2, 3, 4});

  cfg.alpha_align = cfg.alpha_couple = cfg.alpha_smooth = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = RetargetConfig{};
  cfg.keypoints = std::vector<KeypointKey>{};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = RetargetConfig{};
  cfg.coupled_fingers = std::vector<int>{0};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = RetargetConfig{};
  cfg.keypoints = std::vector<KeypointKey>{{1, 9}};
  CHECK_THROWS_AS(resolve_keypoints(model, cfg), MissingError);
}

TEST_CASE("direct joint mapping") {
  const auto model = oracle::load_model("planar2");
  JointVector src(2);
  src << 0.4, 2.5;
  const auto same = direct_joint_map(src, JointMapping::identity(2), model);
  CHECK(same[0] == 0.4);
  CHECK(same[1] == 1.5);

  JointMapping affine;
  affine.target_dof = 2;
  affine.entries.push_back({0, 1, 0.5, 0.1});
  const auto out = direct_joint_map(src, affine, model);
  CHECK(out[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(out[0] == 0.0);

  affine.entries.push_back({1, 1, 1.0, 0.0});
  CHECK_THROWS_AS(direct_joint_map(src, affine, model), ValidationError);
  JointMapping bad_source;
  bad_source.target_dof = 2;
  bad_source.entries.push_back({5, 0, 1.0, 0.0});
  CHECK_THROWS_AS(direct_joint_map(src, bad_source, model), DimensionError);
  JointMapping bad_target;
  bad_target.target_dof = 2;
  bad_target.entries.push_back({0, 2, 1.0, 0.0});
  CHECK_THROWS_AS(direct_joint_map(src, bad_target, model), ValidationError);
}
