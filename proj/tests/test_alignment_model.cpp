#include <doctest.h>

#include <cmath>
#include <random>

#include "avh/alignment_model.hpp"
#include "avh/error.hpp"
#include "oracles.hpp"

using namespace avh;

namespace {

Architecture small_mlp(std::size_t da, std::size_t dv, std::vector<std::size_t> hidden = {6, 4}) {
  Architecture a;
  a.audio_dim = da;
  a.video_dim = dv;
  a.hidden = std::move(hidden);
  return a;
}

Architecture linear(std::size_t da, std::size_t dv) {
  Architecture a;
  a.head = HeadType::linear;
  a.audio_dim = da;
  a.video_dim = dv;
  return a;
}

LossConfig window(std::size_t h) {
  LossConfig c;
  c.neighborhood_half_width = h;
  return c;
}

// Phi = w_v * v_hat + const on scalar video features, so only w_v matters
// inside a window.
BasicAlignmentNetwork<double> linear_video_net(std::size_t da, double w_v, double w_a = 0.3, double b = -0.2) {
  BasicAlignmentNetwork<double> net(linear(da, 1));
  auto w = net.weights(0);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(da); ++j) w(0, j) = w_a * (j + 1);
  w(0, static_cast<Eigen::Index>(da)) = w_v;
  net.bias(0)[0] = b;
  return net;
}

FeatureSequencePair scalar_video_pair(std::vector<float> video, std::size_t da = 2) {
  std::mt19937_64 rng(1);
  auto p = oracle::random_pair(rng, static_cast<Eigen::Index>(video.size()), static_cast<Eigen::Index>(da), 1);
  for (std::size_t i = 0; i < video.size(); ++i) p.video(static_cast<Eigen::Index>(i), 0) = video[i];
  return p;
}

}  // namespace

TEST_CASE("layer widths and parameter layout") {
  const auto a = small_mlp(3, 2, {5, 4});
  CHECK(a.layer_widths() == std::vector<std::size_t>{5, 5, 4, 1});
  const BasicAlignmentNetwork<float> net(a);
  CHECK(net.layer_count() == 3);
  CHECK(net.has_layer_norm(0));
  CHECK(net.has_layer_norm(1));
  CHECK_FALSE(net.has_layer_norm(2));
  // (5*5 + 5 + 5 + 5) + (4*5 + 4 + 4 + 4) + (1*4 + 1)
  CHECK(net.parameter_count() == 40 + 32 + 5);
  CHECK(net.parameters().isZero());

  const BasicAlignmentNetwork<float> lin(linear(3, 2));
  CHECK(lin.layer_count() == 1);
  CHECK(lin.parameter_count() == 6);
}

TEST_CASE("seeded initialisation") {
  const auto a = small_mlp(4, 3, {8, 5});
  const auto x = AlignmentNetwork::initialized(a, 42);
  const auto y = AlignmentNetwork::initialized(a, 42);
  const auto z = AlignmentNetwork::initialized(a, 43);
  CHECK(x.parameters() == y.parameters());
  CHECK(x.parameters() != z.parameters());
  const auto widths = a.layer_widths();
  for (std::size_t l = 0; l < x.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    CHECK(x.weights(l).cwiseAbs().maxCoeff() <= bound);
    CHECK(x.bias(l).isZero());
    if (x.has_layer_norm(l)) {
      CHECK(x.ln_scale(l).isOnes());
      CHECK(x.ln_shift(l).isZero());
    }
  }
}

TEST_CASE("architecture validation") {
  auto a = small_mlp(3, 2);
  CHECK_NOTHROW(a.validate());
  a.audio_dim = 0;
  CHECK_THROWS_AS(a.validate(), Error);
  a = small_mlp(3, 2, {4, 0});
  CHECK_THROWS_AS(a.validate(), Error);
  a = small_mlp(3, 2, {});
  CHECK_THROWS_AS(a.validate(), Error);
  a = small_mlp(3, 2);
  a.layer_norm_eps = 0.0;
  CHECK_THROWS_AS(a.validate(), Error);
  CHECK_NOTHROW(linear(1, 1).validate());
}

TEST_CASE("phi matches the loop-by-loop reference") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    auto a = small_mlp(1 + rng() % 6, 1 + rng() % 6, {2 + rng() % 6, 2 + rng() % 5});
    a.normalize_inputs = trial % 3 != 0;
    if (trial % 7 == 0) a.head = HeadType::linear;
    const auto netd = oracle::random_network<double>(a, rng);
    const auto netf = netd.cast<float>();
    const auto p = oracle::random_pair(rng, 12, static_cast<Eigen::Index>(a.audio_dim),
                                       static_cast<Eigen::Index>(a.video_dim));
    const auto wl = window_logits(netd, p, window(3));
    const auto wlf = window_logits(netf, p, window(3));
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t k = wl.first[i]; k < wl.first[i] + wl.window_size(i); ++k) {
        const double ref = oracle::naive_phi_value(netd, p, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        CHECK(wl.at(i, k) == doctest::Approx(ref).epsilon(1e-10));
        CHECK(wlf.at(i, k) == doctest::Approx(ref).epsilon(1e-4).scale(1.0));
        const double single = score(netd, std::span<const float>(p.audio.row(i).data(), p.audio.cols()),
                                    std::span<const float>(p.video.row(k).data(), p.video.cols()));
        CHECK(single == doctest::Approx(ref).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("window bounds are clamped to the video") {
  const BasicAlignmentNetwork<double> net(small_mlp(2, 2));
  std::mt19937_64 rng(2);
  const auto p = oracle::random_pair(rng, 40, 2, 2);
  const auto wl = window_logits(net, p, window(15));
  CHECK(wl.first[0] == 0);
  CHECK(wl.window_size(0) == 16);
  CHECK(wl.first[20] == 5);
  CHECK(wl.window_size(20) == 31);
  CHECK(wl.first[39] == 24);
  CHECK(wl.window_size(39) == 16);

  const auto q = oracle::random_pair(rng, 5, 2, 2);
  const auto small = window_logits(net, q, window(15));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(small.first[i] == 0);
    CHECK(small.window_size(i) == 5);
  }
  const auto one = window_logits(net, oracle::random_pair(rng, 1, 2, 2), window(15));
  CHECK(one.window_size(0) == 1);
}

TEST_CASE("a zero network is uniform over each window") {
  const BasicAlignmentNetwork<float> net(small_mlp(3, 3));
  std::mt19937_64 rng(6);
  const auto p = oracle::random_pair(rng, 40, 3, 3);
  const auto cfg = window(15);
  double expected = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t n = std::min<std::size_t>(39, i + 15) - (i >= 15 ? i - 15 : 0) + 1;
    CHECK(frame_probability(net, p, i, cfg) == 1.0 / static_cast<double>(n));
    expected += std::log(static_cast<double>(n));
  }
  CHECK(video_loss(net, p, cfg) == doctest::Approx(expected / 40.0).epsilon(1e-12));
}

TEST_CASE("closed-form probability with one matching frame in a full window") {
  // v_hat is +1 at frame 15 and -1 elsewhere, w_v = 5: the centre logit
  // exceeds the 30 others by exactly 10.
  std::vector<float> video(31, -2.0f);
  video[15] = 0.5f;
  const auto p = scalar_video_pair(video);
  const auto net = linear_video_net(2, 5.0);
  const double expected = std::exp(10.0) / (std::exp(10.0) + 30.0);
  CHECK(frame_probability(net, p, 15, window(15)) == doctest::Approx(expected).epsilon(1e-12));
  const std::vector<double> logits = {0, 0, 10, 0};
  CHECK(softmax_center_probability(logits, 2) == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 3)).epsilon(1e-14));
  // large logits must not overflow
  const std::vector<double> big = {1000.0, 999.0};
  CHECK(softmax_center_probability(big, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("convex toy problem reaches the analytic optimum") {
  // v_hat = (+1, +1, -1), h = 1. The loss only depends on w_v and is
  // minimised at w_v = -ln(2)/4.
  const auto p = scalar_video_pair({3.0f, 0.5f, -2.0f}, 3);
  const auto cfg = window(1);
  auto net = linear_video_net(3, 0.0);
  for (int it = 0; it < 2000; ++it) {
    const auto g = loss_gradient(net, p, cfg);
    net.parameters() -= 3.0 * g.gradient.parameters();
  }
  const double w_opt = -std::log(2.0) / 4.0;
  CHECK(net.weights(0)(0, 3) == doctest::Approx(w_opt).epsilon(1e-9));

  const auto at_opt = linear_video_net(3, w_opt);
  const auto g = loss_gradient(at_opt, p, cfg);
  CHECK(std::fabs(g.gradient.weights(0)(0, 3)) < 1e-12);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::fabs(g.gradient.weights(0)(0, j)) < 1e-12);
  CHECK(std::fabs(g.gradient.bias(0)[0]) < 1e-12);

  // closed-form loss at the optimum
  const double e = std::exp(w_opt), ie = std::exp(-w_opt);
  const double expected = (std::log(2.0) + std::log(2 * e + ie) + std::log(e + ie)) / 3.0;
  CHECK(g.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(video_loss(at_opt, p, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("losses and probabilities agree with the window-enumerating reference") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = small_mlp(1 + rng() % 5, 1 + rng() % 5, {3 + rng() % 4});
    const auto net = oracle::random_network<double>(a, rng);
    const auto T = static_cast<Eigen::Index>(1 + rng() % 20);
    const std::size_t h = 1 + rng() % 5;
    const auto p = oracle::random_pair(rng, T, static_cast<Eigen::Index>(a.audio_dim),
                                       static_cast<Eigen::Index>(a.video_dim));
    const auto ref = oracle::naive_unsupervised(net, p, h);
    CHECK(video_loss(net, p, window(h)) == doctest::Approx(ref.loss).epsilon(1e-10));
    CHECK(loss_gradient(net, p, window(h)).loss == doctest::Approx(ref.loss).epsilon(1e-10));
    const auto m = misalignment(net, p, window(h));
    const auto f = per_frame_fakeness(net, p, window(h));
    for (Eigen::Index i = 0; i < T; ++i) {
      CHECK(std::exp(-m[i]) == doctest::Approx(ref.probability[i]).epsilon(1e-10));
      CHECK(f[i] == doctest::Approx(1.0 - ref.probability[i]).epsilon(1e-9).scale(1.0));
      CHECK(m[i] >= 0.0);
    }
    for (auto label : {Label::real, Label::fake}) {
      const auto s = oracle::naive_supervised(net, p, label);
      CHECK(supervised_loss(net, p, label) == doctest::Approx(s.loss).epsilon(1e-10));
    }
  }
}

TEST_CASE("supervised logit and per-frame sigmoid") {
  std::mt19937_64 rng(12);
  const auto net = oracle::random_network<double>(small_mlp(3, 2), rng);
  const auto p = oracle::random_pair(rng, 9, 3, 2);
  double mx = -INFINITY;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < 9; ++i) d.push_back(oracle::naive_phi_value(net, p, i, i));
  for (double v : d) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : d) z += std::exp(v - mx);
  CHECK(supervised_logit(net, p) == doctest::Approx(mx + std::log(z)).epsilon(1e-12));
  const auto f = supervised_frame_fakeness(net, p);
  for (std::size_t i = 0; i < 9; ++i) CHECK(f[i] == doctest::Approx(1.0 / (1.0 + std::exp(-d[i]))).epsilon(1e-12));

  // fused cross-entropy stays finite for huge logits
  auto big = linear_video_net(2, 0.0, 0.0, 800.0);
  const auto q = scalar_video_pair({1.0f, 2.0f});
  CHECK(supervised_loss(big, q, Label::fake) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(supervised_loss(big, q, Label::real) == doctest::Approx(800.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(2024);
  double worst_u = 0.0, worst_s = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto r = oracle::gradient_check(rng);
    worst_u = std::max(worst_u, r.unsupervised_error);
    worst_s = std::max(worst_s, r.supervised_error);
  }
  CHECK(worst_u < 1e-4);
  CHECK(worst_s < 1e-4);
}

TEST_CASE("float gradients follow the double ones") {
  std::mt19937_64 rng(77);
  const auto a = small_mlp(4, 3, {6, 5});
  const auto netd = oracle::random_network<double>(a, rng);
  const auto netf = netd.cast<float>();
  const auto p = oracle::random_pair(rng, 20, 4, 3);
  const auto gd = loss_gradient(netd, p, window(4)).gradient.parameters();
  const auto gf = loss_gradient(netf, p, window(4)).gradient.parameters().cast<double>().eval();
  CHECK((gd - gf).cwiseAbs().maxCoeff() <= 1e-4 * std::max(1.0, gd.cwiseAbs().maxCoeff()));
}

TEST_CASE("input normalisation makes scores invariant to per-row scaling") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  const auto a = small_mlp(5, 4, {7, 3});
  const auto net = oracle::random_network<float>(a, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_pair(rng, 25, 5, 4);

    auto pow2 = p;
    for (Eigen::Index i = 0; i < p.frames(); ++i) {
      pow2.audio.row(i) *= std::ldexp(1.0f, static_cast<int>(rng() % 17) - 8);
      pow2.video.row(i) *= std::ldexp(1.0f, static_cast<int>(rng() % 17) - 8);
    }
    CHECK(l2_normalize_rows(pow2.audio) == l2_normalize_rows(p.audio));
    CHECK(misalignment(net, pow2, window(6)) == misalignment(net, p, window(6)));

    auto scaled = p;
    for (Eigen::Index i = 0; i < p.frames(); ++i) {
      scaled.audio.row(i) *= static_cast<float>(u(rng));
      scaled.video.row(i) *= static_cast<float>(u(rng));
    }
    CHECK((l2_normalize_rows(scaled.audio) - l2_normalize_rows(p.audio)).cwiseAbs().maxCoeff() <= 1e-6f);
    CHECK(video_loss(net, scaled, window(6)) == doctest::Approx(video_loss(net, p, window(6))).epsilon(1e-5));
  }
  FeatureMatrix zeros = FeatureMatrix::Zero(3, 4);
  CHECK(l2_normalize_rows(zeros) == zeros);
}

TEST_CASE("pooling") {
  const std::vector<double> same(7, 1.25);
  CHECK(pool_scores(same, Pooling::logsumexp) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(pool_scores(same, Pooling::mean) == doctest::Approx(1.25).epsilon(1e-14));
  std::vector<double> m = {0.1, 0.4, 2.0};
  const double base_l = pool_scores(m, Pooling::logsumexp);
  const double base_m = pool_scores(m, Pooling::mean);
  CHECK(base_l >= base_m);
  m[1] += 0.5;
  CHECK(pool_scores(m, Pooling::logsumexp) > base_l);
  CHECK(pool_scores(m, Pooling::mean) > base_m);
  CHECK(pool_scores(std::vector<double>{1000.0, 1000.0}, Pooling::logsumexp) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(pool_scores(std::vector<double>{}, Pooling::mean), Error);
  CHECK(parse_pooling("mean") == Pooling::mean);
  CHECK(parse_head_type(to_string(HeadType::linear)) == HeadType::linear);
  CHECK_THROWS_AS(parse_pooling("max"), Error);
}

TEST_CASE("dimension mismatches are typed errors") {
  const BasicAlignmentNetwork<float> net(small_mlp(3, 2));
  std::mt19937_64 rng(1);
  const auto bad = oracle::random_pair(rng, 5, 4, 2);
  const std::vector<float> a(3, 1.0f), v(3, 1.0f);
  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoFailure;
  };
  CHECK(kind([&] { score(net, a, v); }) == ErrorKind::DimensionMismatch);
  CHECK(kind([&] { video_loss(net, bad, window(2)); }) == ErrorKind::DimensionMismatch);
  CHECK(kind([&] { supervised_logit(net, bad); }) == ErrorKind::DimensionMismatch);
  auto uneven = oracle::random_pair(rng, 5, 3, 2);
  uneven.video.conservativeResize(4, 2);
  CHECK(kind([&] { loss_gradient(net, uneven, window(2)); }) != ErrorKind::IoFailure);
  const auto ok = oracle::random_pair(rng, 5, 3, 2);
  CHECK(kind([&] { frame_probability(net, ok, 5, window(2)); }) != ErrorKind::IoFailure);
}
