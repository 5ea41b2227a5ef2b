#include <cmath>

#include <gtest/gtest.h>

#include "fedpm/encoder.hpp"
#include "fedpm/nn.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fedpm;

namespace {

Samples random_samples(std::size_t n, std::uint64_t seed, std::size_t in = 12, std::size_t out = 4) {
    Rng rng(seed);
    Samples s(in, out);
    std::vector<double> x(in), y(out);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        s.push_back(x, y);
    }
    return s;
}

// Perturbs biases away from zero so every parameter, biases included, gets exercised.
ModelParams random_params(std::uint64_t seed) {
    ModelConfig cfg;
    auto p = init_params(cfg, seed);
    Rng rng(seed + 100);
    for (auto& l : p.layers) {
        for (auto& b : l.bias) b = rng.uniform(-0.1, 0.1);
    }
    return p;
}

ModelConfig scalar_model() {
    ModelConfig cfg;
    cfg.input_dim = 1;
    cfg.hidden_dims = {};
    cfg.output_dim = 1;
    return cfg;
}

}  // namespace

TEST(Init, ShapesFollowConfig) {
    auto p = init_params(ModelConfig{}, 1);
    ASSERT_EQ(p.layers.size(), 3u);
    EXPECT_EQ(p.layers[0].out, 64u);
    EXPECT_EQ(p.layers[0].in, 12u);
    EXPECT_EQ(p.layers[1].out, 32u);
    EXPECT_EQ(p.layers[1].in, 64u);
    EXPECT_EQ(p.layers[2].out, 4u);
    EXPECT_EQ(p.layers[2].in, 32u);
    EXPECT_EQ(p.num_parameters(), 64u * 12 + 64 + 32u * 64 + 32 + 4u * 32 + 4);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
    auto p = init_params(ModelConfig{}, 2);
    for (const auto& l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        for (double w : l.weights) {
            EXPECT_LE(std::abs(w), limit);
        }
        for (double b : l.bias) EXPECT_EQ(b, 0.0);
    }
}

TEST(Init, DeterministicInSeed) {
    EXPECT_EQ(init_params(ModelConfig{}, 3), init_params(ModelConfig{}, 3));
    EXPECT_FALSE(init_params(ModelConfig{}, 3) == init_params(ModelConfig{}, 4));
}

TEST(Forward, ZeroParamsGiveOneHalf) {
    auto p = ModelParams::zeros(ModelConfig{});
    std::vector<double> x(12, 3.7);
    for (double v : forward(p, x)) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Forward, OutputsStayInOpenUnitInterval) {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = init_params(ModelConfig{}, static_cast<std::uint64_t>(trial));
        const double scale = trial % 4 == 0 ? 50.0 : 1.0;  // include saturating inputs
        std::vector<double> x(12);
        for (auto& v : x) v = scale * rng.normal();
        for (double v : forward(p, x)) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Forward, HandComputedToyNetwork) {
    // 2-2-1: W1 = [[0.5, -1], [1.5, 0.25]], b1 = [0.1, -0.2], W2 = [[2, -3]], b2 = 0.3
    // x = (1, 2): h = relu(-1.4, 1.8) = (0, 1.8); logit = -5.4 + 0.3 = -5.1
    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dims = {2};
    cfg.output_dim = 1;
    auto p = ModelParams::zeros(cfg);
    p.layers[0].weights = {0.5, -1.0, 1.5, 0.25};
    p.layers[0].bias = {0.1, -0.2};
    p.layers[1].weights = {2.0, -3.0};
    p.layers[1].bias = {0.3};
    const std::vector<double> x{1.0, 2.0};
    EXPECT_NEAR(forward(p, x)[0], 1.0 / (1.0 + std::exp(5.1)), 1e-12);
}

TEST(Forward, DimensionMismatchThrows) {
    auto p = ModelParams::zeros(ModelConfig{});
    std::vector<double> x(11);
    EXPECT_THROW(forward(p, x), std::invalid_argument);
}

TEST(Loss, PerfectPredictionIsZero) {
    const std::vector<double> probs{1.0, 0.0, 1.0, 0.0};
    EXPECT_LT(bce_loss(probs, probs), 1e-10);
}

TEST(Loss, OneHalfGivesLn2) {
    const std::vector<double> probs(4, 0.5);
    EXPECT_NEAR(bce_loss(probs, std::vector<double>{1, 0, 0, 1}), std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(probs, std::vector<double>{0, 0, 0, 0}), 0.693147, 1e-6);
}

TEST(Loss, ClosedFormMixedCase) {
    const std::vector<double> probs{0.9, 0.1, 0.9, 0.1};
    const std::vector<double> labels{1, 0, 1, 0};
    EXPECT_NEAR(bce_loss(probs, labels), -std::log(0.9), 1e-15);
    EXPECT_NEAR(bce_loss(probs, labels), 0.105361, 1e-6);
}

TEST(Loss, NonNegativeEverywhere) {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p(4), y(4);
        for (auto& v : p) v = rng.uniform();
        for (auto& v : y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        EXPECT_GE(bce_loss(p, y), 0.0);
    }
}

TEST(Backward, MatchesCentralFiniteDifferences) {
    auto p = random_params(10);
    auto data = random_samples(1, 11);
    auto g = backward(p, data);
    auto grads = g.grad.tensors();
    Rng pick(12);
    for (std::size_t t = 0; t < grads.size(); ++t) {
        for (int probe = 0; probe < 10; ++probe) {
            const auto idx = static_cast<std::size_t>(pick.below(grads[t].size()));
            const double numeric = oracle::central_difference(p, data, t, idx);
            EXPECT_LT(oracle::relative_error(grads[t][idx], numeric), 1e-4)
                << "tensor " << t << " index " << idx << " analytic " << grads[t][idx] << " numeric " << numeric;
        }
    }
    EXPECT_NEAR(g.loss, oracle::batch_loss(p, data), 1e-12);
}

TEST(Backward, ZeroGradientAtPerfectPrediction) {
    auto p = ModelParams::zeros(ModelConfig{});
    p.layers.back().bias = {40.0, -40.0, 40.0, -40.0};
    Samples data(12, 4);
    Rng rng(1);
    for (int i = 0; i < 8; ++i) {
        std::vector<double> x(12);
        for (auto& v : x) v = rng.normal();
        data.push_back(x, std::vector<double>{1, 0, 1, 0});
    }
    auto g = backward(p, data);
    double norm = 0.0;
    for (double v : g.grad.flatten()) norm += v * v;
    EXPECT_LT(std::sqrt(norm), 1e-8);
}

TEST(Backward, RepeatedExampleGivesSameGradient) {
    auto p = random_params(20);
    auto one = random_samples(1, 21);
    Samples many(12, 4);
    for (int i = 0; i < 5; ++i) many.push_back(one.input(0), one.target(0));
    auto g1 = backward(p, one).grad.flatten();
    auto g5 = backward(p, many).grad.flatten();
    ASSERT_EQ(g1.size(), g5.size());
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g5[i], 1e-14 + 1e-12 * std::abs(g1[i]));
}

TEST(Backward, EmptyBatchOrBadShapesThrow) {
    auto p = random_params(1);
    EXPECT_THROW(backward(p, Samples(12, 4)), std::invalid_argument);
    EXPECT_THROW(backward(p, random_samples(2, 1, 11, 4)), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    auto p = random_params(30);
    const auto before = p.flatten();
    auto g = backward(p, random_samples(4, 31)).grad;
    auto state = AdamState::fresh(p);
    ModelConfig cfg;
    adam_step(p, g, state, cfg);
    EXPECT_EQ(state.step, 1);
    const auto after = p.flatten();
    const auto grad = g.flatten();
    for (std::size_t i = 0; i < after.size(); ++i) {
        const double expected = cfg.learning_rate * std::abs(grad[i]) / (std::abs(grad[i]) + cfg.adam_eps);
        EXPECT_NEAR(std::abs(after[i] - before[i]), expected, 1e-12);
    }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    auto p = random_params(40);
    const auto copy = p;
    auto state = AdamState::fresh(p);
    adam_step(p, ModelParams::zeros_like(p), state, ModelConfig{});
    EXPECT_EQ(p, copy);
}

TEST(Adam, QuadraticDescentMatchesScalarReference) {
    auto cfg = scalar_model();
    cfg.learning_rate = 0.1;
    auto p = ModelParams::zeros(cfg);
    p.layers[0].weights[0] = 1.0;
    auto state = AdamState::fresh(p);
    for (int t = 0; t < 100; ++t) {
        auto g = ModelParams::zeros_like(p);
        g.layers[0].weights[0] = 2.0 * p.layers[0].weights[0];
        adam_step(p, g, state, cfg);
    }
    const double reference = oracle::scalar_adam_quadratic(1.0, 0.1, 100);
    EXPECT_NEAR(p.layers[0].weights[0], reference, 1e-12);
    EXPECT_LT(std::abs(p.layers[0].weights[0]), 0.1);
    for (const auto& v : state.v.flatten()) EXPECT_GE(v, 0.0);
}

TEST(Train, ZeroEpochsReturnsInput) {
    auto p = random_params(50);
    auto res = train_local(p, random_samples(10, 51), 0, ModelConfig{}, 52);
    EXPECT_EQ(res.params, p);
    EXPECT_TRUE(res.epoch_losses.empty());
}

TEST(Train, LossDecreasesOnSimulatedClient) {
    auto cfg = fedpm::testing::s1();
    auto data = build_datasets(run(cfg), cfg);
    const auto client = to_samples(data.per_gnb.at(0));
    const auto p0 = init_params(cfg.model, 1);
    const double initial = dataset_loss(p0, client);
    auto res = train_local(p0, client, 10, cfg.model, 2);
    ASSERT_EQ(res.epoch_losses.size(), 10u);
    EXPECT_LT(dataset_loss(res.params, client), initial);
    EXPECT_LT(res.final_loss(), res.epoch_losses.front());
}

TEST(Train, DeterministicGivenSeed) {
    auto data = random_samples(70, 60);
    auto p = random_params(61);
    auto a = train_local(p, data, 3, ModelConfig{}, 62);
    auto b = train_local(p, data, 3, ModelConfig{}, 62);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.epoch_losses, b.epoch_losses);
    auto c = train_local(p, data, 3, ModelConfig{}, 63);
    EXPECT_FALSE(a.params == c.params);
}

TEST(Train, LastBatchMayBeSmaller) {
    ModelConfig cfg;
    cfg.batch_size = 32;
    auto data = random_samples(33, 70);  // 32 + 1
    auto p = random_params(71);
    auto manual = p;
    auto state = AdamState::fresh(manual);
    const auto order = epoch_order(data.size(), 72, 0);
    for (std::size_t start = 0; start < order.size(); start += 32) {
        std::span<const std::size_t> rows(order.data() + start, std::min<std::size_t>(32, order.size() - start));
        adam_step(manual, backward(manual, data, rows).grad, state, cfg);
    }
    EXPECT_EQ(state.step, 2);
    EXPECT_EQ(train_local(p, data, 1, cfg, 72).params, manual);
}

TEST(Checkpoint, RoundTripIsExact) {
    fedpm::testing::TempDir dir;
    auto p = random_params(80);
    save_checkpoint(p, ModelConfig{}, dir / "m.json");
    EXPECT_EQ(load_checkpoint(dir / "m.json"), p);
    auto j = nlohmann::json::parse(fedpm::testing::read_file(dir / "m.json"));
    EXPECT_EQ(j.at("format"), 1);
    EXPECT_EQ(j.at("config").at("hidden_dims"), (std::vector<int>{64, 32}));
    EXPECT_EQ(j.at("layers").size(), 3u);
}
