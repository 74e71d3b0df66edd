#include <doctest.h>

#include <cmath>

#include "ncdl/theory.hpp"
#include "ncdl/trainer.hpp"

using namespace ncdl;

namespace {

ProblemSpec make_spec(std::size_t k, std::vector<std::size_t> counts,
                      std::vector<std::size_t> widths, double lambda,
                      LossKind loss = LossKind::Mse, BiasMode bias = BiasMode::None) {
    ProblemSpec s;
    s.num_classes = k;
    s.class_counts = std::move(counts);
    s.widths = std::move(widths);
    s.loss = loss;
    s.bias_mode = bias;
    s.lambda_w.assign(s.widths.size(), lambda);
    s.lambda_h = lambda;
    return s;
}

bool states_equal(const NetworkState& a, const NetworkState& b) {
    if (a.weights.size() != b.weights.size()) return false;
    for (std::size_t m = 0; m < a.weights.size(); ++m)
        if (!(a.weights[m] == b.weights[m])) return false;
    if (!(a.features == b.features)) return false;
    if (a.bias.has_value() != b.bias.has_value()) return false;
    if (a.bias && *a.bias != *b.bias) return false;
    return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero learning rate keeps the initial state") {
    const auto spec = make_spec(3, {2, 2, 2}, {4, 4}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.iterations = 50;
    cfg.grad_tol.reset();
    cfg.seed = 6;
    const Trajectory t = train(spec, cfg);
    CHECK(states_equal(t.final_state, init_state(spec, 6)));
    CHECK(t.final_iteration == 50);
}

TEST_CASE("one step equals the hand-composed update") {
    const auto spec = make_spec(2, {2, 1}, {3}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.iterations = 1;
    cfg.grad_tol.reset();
    cfg.seed = 12;
    const Trajectory t = train(spec, cfg);

    NetworkState expected = init_state(spec, 12);
    const NetworkState g = gradient(expected, spec);
    for (std::size_t m = 0; m < expected.weights.size(); ++m)
        expected.weights[m] -= cfg.lr * g.weights[m];
    expected.features -= cfg.lr * g.features;
    CHECK(states_equal(t.final_state, expected));
}

TEST_CASE("two identical runs are bitwise identical") {
    const auto spec = make_spec(3, {3, 2, 2}, {5, 5}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.iterations = 300;
    cfg.record_stride = 50;
    cfg.seed = 9;
    const Trajectory a = train(spec, cfg);
    const Trajectory b = train(spec, cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].iteration == b.samples[i].iteration);
        CHECK(a.samples[i].loss == b.samples[i].loss);  // exact
    }
    CHECK(states_equal(a.final_state, b.final_state));
}

TEST_CASE("record stride equal to the horizon records the two endpoints") {
    const auto spec = make_spec(2, {2, 2}, {3}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.iterations = 40;
    cfg.record_stride = 40;
    cfg.grad_tol.reset();
    const Trajectory t = train(spec, cfg);
    REQUIRE(t.samples.size() == 2);
    CHECK(t.samples[0].iteration == 0);
    CHECK(t.samples[1].iteration == 40);
}

TEST_CASE("sample iterations increase strictly") {
    const auto spec = make_spec(2, {2, 2}, {3}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.iterations = 137;
    cfg.record_stride = 25;
    const Trajectory t = train(spec, cfg);
    for (std::size_t i = 1; i < t.samples.size(); ++i)
        CHECK(t.samples[i].iteration > t.samples[i - 1].iteration);
    CHECK(t.samples.back().iteration == t.final_iteration);
}

TEST_CASE("divergence raises with the iteration index") {
    const auto spec = make_spec(2, {2, 2}, {3}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 1e6;
    cfg.iterations = 1000;
    cfg.record_stride = 1;
    CHECK_THROWS_AS(train(spec, cfg), DivergenceError);
}

TEST_CASE("a converged run satisfies the coupling identities") {
    const auto spec = make_spec(2, {3, 1}, {2}, 0.05);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.iterations = 200000;
    cfg.grad_tol = 1e-11;
    cfg.record_stride = 1000;
    cfg.seed = 3;
    const Trajectory t = train(spec, cfg);
    CHECK(t.early_stopped);
    CHECK(t.monotone);
    for (double r : balance_residuals(t.final_state, spec)) CHECK(r < 1e-4);
}

TEST_CASE("the two-class toy run reaches the predicted optimum") {
    const auto spec = make_spec(2, {3, 1}, {2}, 0.05);
    const TheoryPrediction p = predict_imbalanced_plain(spec);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.iterations = 200000;
    cfg.grad_tol = 1e-12;
    cfg.record_stride = 10000;
    cfg.seed = 1;
    const Trajectory t = train(spec, cfg, &p);
    CHECK(std::abs(t.samples.back().loss - p.predicted_loss) < 1e-6);
    const MetricReport& r = *t.samples.back().report;
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(std::abs(r.sv_measured[k] - r.sv_predicted[k]) < 1e-4);
}

TEST_CASE("sweep") {
    const auto a = make_spec(2, {2, 2}, {3}, 1e-2);
    const auto b = make_spec(3, {2, 2, 2}, {4}, 1e-2);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.iterations = 200;
    cfg.record_stride = 50;

    SUBCASE("single-spec sweep equals train") {
        const auto results = sweep({a}, cfg);
        REQUIRE(results.size() == 1);
        REQUIRE(results[0].trajectory.has_value());
        const Trajectory direct = train(a, cfg);
        CHECK(states_equal(results[0].trajectory->final_state, direct.final_state));
    }

    SUBCASE("permutation permutes results") {
        const auto ab = sweep({a, b}, cfg);
        const auto ba = sweep({b, a}, cfg);
        CHECK(states_equal(ab[0].trajectory->final_state, ba[1].trajectory->final_state));
        CHECK(states_equal(ab[1].trajectory->final_state, ba[0].trajectory->final_state));
    }

    SUBCASE("failures are isolated") {
        TrainConfig wild = cfg;
        wild.lr = 1e6;
        const auto results = sweep({a, b}, wild);
        CHECK_FALSE(results[0].trajectory.has_value());
        CHECK_FALSE(results[0].error.empty());
    }

    SUBCASE("empty sweep is rejected") {
        CHECK_THROWS_AS(sweep({}, cfg), ArgumentError);
    }
}

}  // TEST_SUITE
