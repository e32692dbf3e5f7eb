#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>

#include "diffant/errors.hpp"
#include "diffant/infer.hpp"
#include "doctest.h"

using namespace diffant;

namespace {

ModelConfig infer_cfg() {
  ModelConfig c;
  c.input_dim = 4;
  c.enc_dim = 8;
  c.dec_dim = 8;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.queries = 3;
  c.classes = 4;
  c.schedule_steps = 10;
  return c;
}

ObservedFeatures obs_fixture(std::uint64_t seed) {
  RngStream r(seed);
  ObservedFeatures obs;
  obs.F = r.gaussian_matrix(6, 4);
  return obs;
}

}  // namespace

TEST_CASE("framewise expansion hand cases") {
  ActionSequence one;
  one.classes = {7};
  one.durations = {1.0};
  CHECK(to_framewise(one, 10) == std::vector<int>(10, 7));

  ActionSequence halves;
  halves.classes = {1, 2};
  halves.durations = {0.5, 0.5};
  CHECK(to_framewise(halves, 4) == std::vector<int>{1, 1, 2, 2});

  // equal remainders: the leftover frame goes to the earliest slot
  ActionSequence thirds;
  thirds.classes = {0, 1, 2};
  thirds.durations = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::vector<int> counts(3, 0);
  for (int c : to_framewise(thirds, 10)) ++counts[static_cast<std::size_t>(c)];
  CHECK(counts == std::vector<int>{4, 3, 3});

  ActionSequence skewed;
  skewed.classes = {3, 1};
  skewed.durations = {0.05, 0.95};
  const std::vector<int> frames = to_framewise(skewed, 7);
  // 0.35 and 6.65 floor to 0 and 6; the larger remainder wins the last frame
  CHECK(frames == std::vector<int>{1, 1, 1, 1, 1, 1, 1});
}

TEST_CASE("framewise expansion conserves frames") {
  RngStream r(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = r.uniform_int(1, 5);
    ActionSequence a;
    std::vector<double> raw;
    for (int i = 0; i < n; ++i) {
      a.classes.push_back(i);  // distinct classes so slot runs are unambiguous
      raw.push_back(r.uniform(0.05, 1.0));
    }
    a.durations = normalize_durations(raw);
    const int horizon = r.uniform_int(1, 200);
    const std::vector<int> frames = to_framewise(a, horizon);
    REQUIRE(static_cast<int>(frames.size()) == horizon);

    // slot order preserved and each count within one frame of its exact share
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    int prev = -1;
    for (int f : frames) {
      REQUIRE(f >= prev);  // non-decreasing since classes follow slot order
      prev = f;
      ++counts[static_cast<std::size_t>(f)];
    }
    for (int i = 0; i < n; ++i) {
      const double exact = a.durations[static_cast<std::size_t>(i)] * horizon;
      CHECK(counts[static_cast<std::size_t>(i)] >= static_cast<int>(std::floor(exact)));
      CHECK(counts[static_cast<std::size_t>(i)] <= static_cast<int>(std::floor(exact)) + 1);
    }
  }
}

TEST_CASE("framewise expansion rejects bad input") {
  ActionSequence a;
  a.classes = {1};
  a.durations = {1.0};
  CHECK_THROWS_AS((void)to_framewise(a, 0), std::invalid_argument);

  ActionSequence empty;
  CHECK_THROWS_AS((void)to_framewise(empty, 5), std::invalid_argument);

  ActionSequence ragged;
  ragged.classes = {1, 2};
  ragged.durations = {0.5, 0.7};
  CHECK_THROWS_AS((void)to_framewise(ragged, 5), std::invalid_argument);
}

TEST_CASE("deterministic anticipation is seed independent") {
  Model model(infer_cfg(), 3);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(4);

  InferenceOptions opts;
  opts.deterministic = true;
  opts.num_steps = 5;
  opts.samples = 25;  // ignored in deterministic mode
  opts.seed = 7;
  const auto a = anticipate(model, sched, obs, 30, opts);
  REQUIRE(a.size() == 1);
  CHECK(a[0].sample_id == 0);

  opts.seed = 99;
  const auto b = anticipate(model, sched, obs, 30, opts);
  REQUIRE(b.size() == 1);
  CHECK(a[0].frame_labels == b[0].frame_labels);
  CHECK(a[0].actions == b[0].actions);
  if (!a[0].empty_future) CHECK(a[0].frame_labels.size() == 30);
}

TEST_CASE("deterministic anticipation matches a manual trajectory replay") {
  ModelConfig cfg = infer_cfg();
  Model model(cfg, 6);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(8);

  InferenceOptions opts;
  opts.deterministic = true;
  opts.num_steps = 4;
  const auto got = anticipate(model, sched, obs, 20, opts);
  REQUIRE(got.size() == 1);

  const EncodedObservation enc = model.encode(obs);
  const std::vector<int> traj = make_trajectory(10, 4);
  LatentSeq z;
  z.z = Eigen::MatrixXd::Zero(cfg.queries, cfg.dec_dim);
  z.step = traj.front();
  LatentSeq z0_hat;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    z.step = traj[k];
    z0_hat = model.denoise(z, enc);
    if (k + 1 < traj.size())
      z = renoise_from_z0hat(sched, z0_hat, z, traj[k + 1], Eigen::MatrixXd(), true);
  }
  const ActionSequence want = decode_prediction(predict_actions(z0_hat, model.codec()),
                                                cfg.resolved_eos());
  CHECK(got[0].actions == want);
}

TEST_CASE("stochastic anticipation is reproducible per seed") {
  Model model(infer_cfg(), 5);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(9);

  InferenceOptions opts;
  opts.deterministic = false;
  opts.num_steps = 5;
  opts.samples = 4;
  opts.seed = 11;
  const auto a = anticipate(model, sched, obs, 25, opts);
  REQUIRE(a.size() == 4);
  for (int j = 0; j < 4; ++j) CHECK(a[static_cast<std::size_t>(j)].sample_id == j);

  const auto b = anticipate(model, sched, obs, 25, opts);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(a[j].actions == b[j].actions);
    CHECK(a[j].frame_labels == b[j].frame_labels);
  }

  opts.seed = 12;
  const auto c = anticipate(model, sched, obs, 25, opts);
  bool any_diff = false;
  for (std::size_t j = 0; j < 4; ++j)
    if (!(a[j].actions == c[j].actions)) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("intermediate decodes snapshot the arriving latent") {
  ModelConfig cfg = infer_cfg();
  Model model(cfg, 13);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(10);
  const CodecParams codec = model.codec();

  InferenceOptions opts;
  opts.deterministic = false;
  opts.num_steps = 5;
  opts.samples = 2;
  opts.seed = 21;
  opts.keep_intermediate = true;
  const auto results = anticipate(model, sched, obs, 25, opts);

  const std::vector<int> traj = make_trajectory(10, 5);
  for (const auto& r : results) {
    REQUIRE(r.intermediate.size() == traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k)
      CHECK(r.intermediate[k].first == traj[k]);

    // the first record decodes the initial Gaussian latent, before any
    // denoising has touched it
    RngStream rng = RngStream(opts.seed).derive(static_cast<std::uint64_t>(r.sample_id));
    LatentSeq init;
    init.z = rng.gaussian_matrix(cfg.queries, cfg.dec_dim);
    init.step = traj.front();
    const ActionSequence want =
        decode_prediction(predict_actions(init, codec), cfg.resolved_eos());
    CHECK(r.intermediate.front().second == want);
  }

  // deterministic runs snapshot the zero latent first
  InferenceOptions det;
  det.deterministic = true;
  det.num_steps = 5;
  det.keep_intermediate = true;
  const auto dres = anticipate(model, sched, obs, 25, det);
  REQUIRE(dres.size() == 1);
  LatentSeq zero;
  zero.z = Eigen::MatrixXd::Zero(cfg.queries, cfg.dec_dim);
  zero.step = traj.front();
  CHECK(dres[0].intermediate.front().second ==
        decode_prediction(predict_actions(zero, codec), cfg.resolved_eos()));

  InferenceOptions off;
  off.deterministic = true;
  off.num_steps = 5;
  CHECK(anticipate(model, sched, obs, 25, off)[0].intermediate.empty());
}

TEST_CASE("anticipation rejects inconsistent setups") {
  Model model(infer_cfg(), 2);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(3);

  InferenceOptions opts;
  opts.samples = 0;
  opts.deterministic = false;
  CHECK_THROWS_AS((void)anticipate(model, sched, obs, 20, opts), std::invalid_argument);

  opts = {};
  opts.num_steps = 0;
  CHECK_THROWS_AS((void)anticipate(model, sched, obs, 20, opts), std::invalid_argument);
  opts.num_steps = 11;
  CHECK_THROWS_AS((void)anticipate(model, sched, obs, 20, opts), std::invalid_argument);

  const NoiseSchedule longer = make_schedule(20, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  opts = {};
  CHECK_THROWS_AS((void)anticipate(model, longer, obs, 20, opts), std::invalid_argument);
}

TEST_CASE("an immediate end-of-sequence falls back to the last observed class") {
  ModelConfig cfg = infer_cfg();
  Model model(cfg, 17);
  // force every slot to decode to EOS
  const int wi = model.params().lookup("codec.head_class.w");
  const int bi = model.params().lookup("codec.head_class.b");
  REQUIRE(wi >= 0);
  model.params().at(wi).value.setZero();
  model.params().at(bi).value.setZero();
  model.params().at(bi).value(0, cfg.resolved_eos()) = 5.0;

  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(18);
  InferenceOptions opts;
  opts.deterministic = true;
  opts.num_steps = 5;
  const auto results = anticipate(model, sched, obs, 12, opts);
  REQUIRE(results.size() == 1);
  const AnticipationResult& r = results[0];
  CHECK(r.empty_future);
  CHECK(r.actions.classes.empty());
  REQUIRE(r.frame_labels.size() == 12);
  for (int f : r.frame_labels) CHECK(f == r.fallback_label);

  Eigen::Index want;
  const EncodedObservation enc = model.encode(obs);
  enc.frame_logits.row(enc.frame_logits.rows() - 1).maxCoeff(&want);
  CHECK(r.fallback_label == static_cast<int>(want));
}

TEST_CASE("multilabel anticipation emits class probabilities") {
  ModelConfig cfg = infer_cfg();
  cfg.multilabel = true;
  cfg.queries = 1;
  Model model(cfg, 23);
  const NoiseSchedule sched = make_schedule(10, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  const ObservedFeatures obs = obs_fixture(24);

  InferenceOptions opts;
  opts.deterministic = true;
  opts.num_steps = 5;
  const auto results = anticipate(model, sched, obs, 20, opts);
  REQUIRE(results.size() == 1);
  const AnticipationResult& r = results[0];

  REQUIRE(r.class_scores.size() == cfg.classes);
  for (Eigen::Index i = 0; i < r.class_scores.size(); ++i) {
    CHECK(r.class_scores(i) > 0.0);
    CHECK(r.class_scores(i) < 1.0);
  }
  REQUIRE(r.actions.classes.size() == 1);
  Eigen::Index best;
  r.class_scores.maxCoeff(&best);
  CHECK(r.actions.classes[0] == static_cast<int>(best));
  CHECK(r.actions.durations == std::vector<double>{1.0});
  CHECK(r.frame_labels.empty());
  CHECK_FALSE(r.empty_future);
}
