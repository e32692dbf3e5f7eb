#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "diffant/codec.hpp"
#include "diffant/errors.hpp"
#include "diffant/io.hpp"
#include "diffant/net.hpp"
#include "diffant/rng.hpp"
#include "diffant/train.hpp"
#include "doctest.h"

using namespace diffant;
namespace fs = std::filesystem;

namespace {

CodecParams tiny_codec(std::uint64_t seed) {
  RngStream r(seed);
  CodecParams p;
  p.emb_class = r.gaussian_matrix(3, 2);
  p.emb_dur_w = r.gaussian_matrix(1, 2);
  p.emb_dur_b = r.gaussian_matrix(1, 2);
  p.merge_w = r.gaussian_matrix(4, 3);
  p.merge_b = r.gaussian_matrix(1, 3);
  p.head_class_w = r.gaussian_matrix(3, 3);
  p.head_class_b = r.gaussian_matrix(1, 3);
  p.head_dur_w = r.gaussian_matrix(3, 1);
  p.head_dur_b = r.gaussian_matrix(1, 1);
  return p;
}

}  // namespace

TEST_CASE("vocabulary construction and lookup") {
  ActionVocabulary v = ActionVocabulary::with_eos({"pour", "stir"});
  CHECK(v.size() == 3);
  CHECK(v.eos_id() == 2);
  CHECK(v.name(2) == "EOS");
  CHECK(v.id("stir") == 1);
  CHECK_THROWS_AS((void)v.id("chop"), DataError);
  CHECK_THROWS_AS((void)v.name(3), std::invalid_argument);

  CHECK_THROWS_AS(ActionVocabulary({"only"}, 0), std::invalid_argument);
  CHECK_THROWS_AS(ActionVocabulary({"a", "a", "EOS"}, 2), std::invalid_argument);
  CHECK_THROWS_AS(ActionVocabulary({"a", "b"}, 5), std::invalid_argument);
}

TEST_CASE("vocabulary file round-trip") {
  const fs::path dir = fs::temp_directory_path() / "diffant_codec_test";
  fs::create_directories(dir);
  const fs::path path = dir / "vocab.txt";

  ActionVocabulary v = ActionVocabulary::with_eos({"pour", "stir", "crack"});
  save_vocabulary(path, v);
  ActionVocabulary back = load_vocabulary(path);
  CHECK(back.names() == v.names());
  CHECK(back.eos_id() == v.eos_id());

  atomic_write(path, "0 pour\n2 stir\n");
  CHECK_THROWS_AS((void)load_vocabulary(path), DataError);
  atomic_write(path, "0 pour\n1 stir\n");
  CHECK_THROWS_AS((void)load_vocabulary(path), DataError);  // no EOS row
}

TEST_CASE("eos truncation") {
  ActionSequence seq;
  seq.classes = {4, 1, 9, 2, 5};
  seq.durations = {0.1, 0.2, 0.3, 0.2, 0.2};
  ActionSequence cut = truncate_at_eos(seq, 9);
  CHECK(cut.classes == std::vector<int>{4, 1});
  CHECK(cut.durations == std::vector<double>{0.1, 0.2});
  CHECK(seq.count_non_eos(9) == 2);

  CHECK(truncate_at_eos(seq, 4).classes.empty());
  CHECK(truncate_at_eos(seq, 7).classes == seq.classes);  // eos absent
}

TEST_CASE("duration normalization") {
  const std::vector<double> out = normalize_durations({2.0, 6.0});
  CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-12));

  const std::vector<double> scaled = normalize_durations({0.001, 0.003, 0.004});
  CHECK(scaled[0] + scaled[1] + scaled[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scaled[2] / scaled[0] == doctest::Approx(4.0).epsilon(1e-9));

  CHECK_THROWS_AS((void)normalize_durations({}), DataError);
  CHECK_THROWS_AS((void)normalize_durations({0.5, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)normalize_durations({0.5, -0.1}), std::invalid_argument);
}

TEST_CASE("fitting sequences to a fixed slot count") {
  ActionSequence seq;
  seq.classes = {1, 0};
  seq.durations = {0.4, 0.6};

  ActionSequence padded = fit_to_slots(seq, 4, 7);
  CHECK(padded.classes == std::vector<int>{1, 0, 7, 7});
  CHECK(padded.durations == std::vector<double>{0.4, 0.6, 0.0, 0.0});

  ActionSequence longer;
  longer.classes = {1, 0, 2, 5};
  longer.durations = {0.1, 0.1, 0.1, 0.7};
  ActionSequence cut = fit_to_slots(longer, 2, 7);
  CHECK(cut.classes == std::vector<int>{1, 0});
  CHECK(cut.durations[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cut.durations[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("action embedding matches the affine construction") {
  const CodecParams p = tiny_codec(3);
  ActionSequence a;
  a.classes = {2, 0};
  a.durations = {0.3, 0.7};

  const LatentSeq z = embed_actions(a, p);
  REQUIRE(z.z.rows() == 2);
  REQUIRE(z.z.cols() == 3);
  CHECK(z.step == 0);

  for (int i = 0; i < 2; ++i) {
    Eigen::RowVectorXd cat(4);
    cat.head(2) = p.emb_class.row(a.classes[static_cast<std::size_t>(i)]);
    cat.tail(2) = a.durations[static_cast<std::size_t>(i)] * p.emb_dur_w.row(0) + p.emb_dur_b.row(0);
    const Eigen::RowVectorXd want = cat * p.merge_w + p.merge_b.row(0);
    CHECK((z.z.row(i) - want).cwiseAbs().maxCoeff() < 1e-14);
  }

  // same class, embedding is affine in the duration
  auto at = [&](double t) {
    ActionSequence q;
    q.classes = {1};
    q.durations = {t};
    return embed_actions(q, p).z;
  };
  const Eigen::MatrixXd d1 = at(0.5) - at(0.25);
  const Eigen::MatrixXd d2 = at(0.75) - at(0.25);
  CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() < 1e-12);

  ActionSequence bad = a;
  bad.classes[0] = 3;
  CHECK_THROWS_AS((void)embed_actions(bad, p), std::invalid_argument);
  ActionSequence mismatch = a;
  mismatch.durations.pop_back();
  CHECK_THROWS_AS((void)embed_actions(mismatch, p), std::invalid_argument);
}

TEST_CASE("class-set embedding in multilabel mode") {
  CodecParams p = tiny_codec(4);
  p.multilabel = true;

  const LatentSeq z = embed_action_set({0, 2}, 3, p);
  REQUIRE(z.z.rows() == 1);
  const Eigen::RowVectorXd want = p.emb_class.row(0) + p.emb_class.row(2);
  CHECK((z.z.row(0) - want).cwiseAbs().maxCoeff() < 1e-14);

  // repeated ids collapse into the same multi-hot row
  const LatentSeq dup = embed_action_set({0, 0, 2}, 3, p);
  CHECK((dup.z - z.z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("latent sampling around the embedding") {
  const CodecParams p = tiny_codec(5);
  ActionSequence a;
  a.classes = {0, 1, 2};
  a.durations = {0.2, 0.5, 0.3};
  const LatentSeq mean = embed_actions(a, p);

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK((sample_z0(a, p, 0.0, zero).z - mean.z).cwiseAbs().maxCoeff() == 0.0);

  RngStream r(11);
  const Eigen::MatrixXd noise = r.gaussian_matrix(3, 3);
  const LatentSeq z = sample_z0(a, p, 0.04, noise);
  CHECK(z.step == 0);
  CHECK((z.z - mean.z - 0.2 * noise).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS((void)sample_z0(a, p, -0.1, noise), std::invalid_argument);
  CHECK_THROWS_AS((void)sample_z0(a, p, 0.1, Eigen::MatrixXd::Zero(2, 3)),
                  std::invalid_argument);
}

TEST_CASE("prediction heads") {
  CodecParams p = tiny_codec(6);
  RngStream r(12);
  LatentSeq z;
  z.z = r.gaussian_matrix(4, 3);
  z.step = 0;

  const ActionPrediction pred = predict_actions(z, p);
  const Eigen::MatrixXd want_logits = (z.z * p.head_class_w).rowwise() + p.head_class_b.row(0);
  CHECK((pred.class_logits - want_logits).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((pred.durations.array() > 0.0).all());

  p.head_dur_w.setZero();
  p.head_dur_b.setZero();
  const ActionPrediction unit = predict_actions(z, p);
  CHECK((unit.durations.array() == 1.0).all());

  LatentSeq nan = z;
  nan.z(1, 1) = std::nan("");
  CHECK_THROWS_AS((void)predict_actions(nan, p), NumericError);

  CodecParams ml = tiny_codec(6);
  ml.multilabel = true;
  CHECK((predict_actions(z, ml).durations.array() == 0.0).all());
}

TEST_CASE("argmax decoding truncates and renormalizes") {
  ActionPrediction pred;
  pred.class_logits.resize(4, 3);
  pred.class_logits << 0.0, 2.0, -1.0,   // -> 1
                       3.0, 0.0, 1.0,    // -> 0
                       0.0, 0.0, 5.0,    // -> EOS
                       4.0, 0.0, 0.0;    // dropped
  pred.durations.resize(4, 1);
  pred.durations << 2.0, 6.0, 1.0, 1.0;

  const ActionSequence out = decode_prediction(pred, 2);
  CHECK(out.classes == std::vector<int>{1, 0});
  CHECK(out.durations[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out.durations[1] == doctest::Approx(0.75).epsilon(1e-12));

  ActionPrediction eos_first;
  eos_first.class_logits = Eigen::MatrixXd::Zero(2, 3);
  eos_first.class_logits(0, 2) = 9.0;
  eos_first.durations = Eigen::MatrixXd::Ones(2, 1);
  CHECK(decode_prediction(eos_first, 2).classes.empty());
}

TEST_CASE("trained codec round-trips a sequence through the latent") {
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.enc_dim = 16;
  cfg.dec_dim = 16;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 2;
  cfg.queries = 3;
  cfg.classes = 4;
  cfg.schedule_steps = 10;
  Model model(cfg, 7);

  ActionSequence target;
  target.classes = {1, 0, 2};
  target.durations = {0.2, 0.5, 0.3};
  Eigen::MatrixXd dur_target(3, 1);
  dur_target << 0.2, 0.5, 0.3;

  AdamW opt;
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 300; ++it) {
    model.params().zero_grads();
    Tape t(model.params());
    Var emb = model.build_embed_actions(t, target);
    auto [logits, durs] = model.build_predict(t, emb);
    Var loss = t.weighted_sum({t.cross_entropy_rows(logits, target.classes),
                               t.mse(durs, t.constant(dur_target))},
                              {1.0, 1.0});
    if (it == 0) first = t.scalar(loss);
    last = t.scalar(loss);
    t.backward(loss);
    opt.step(model.params(), 1e-2, 0.0);
  }
  CHECK(last < first * 0.1);

  const CodecParams cp = model.codec();
  const ActionSequence back =
      decode_prediction(predict_actions(embed_actions(target, cp), cp), cfg.resolved_eos());
  CHECK(back.classes == target.classes);
  for (int i = 0; i < 3; ++i)
    CHECK(back.durations[static_cast<std::size_t>(i)] ==
          doctest::Approx(target.durations[static_cast<std::size_t>(i)]).epsilon(0.25));
}
