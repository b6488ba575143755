#include "doctest.h"

#include <cstring>

#include "localegn/experiment.hpp"
#include "localegn/optim.hpp"
#include "localegn/synthetic.hpp"
#include "localegn/train.hpp"
#include "oracles.hpp"

using namespace localegn;

namespace {

ModelConfig tiny_cfg(ModelVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.lookback = 4;
    cfg.hidden = 8;
    return cfg;
}

TrainConfig quick_train(std::size_t iterations, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.lookback = 4;
    cfg.hidden = 8;
    cfg.seed = seed;
    cfg.batch_size = 8;
    cfg.val_every = 25;
    cfg.subsample_fraction = 0.5;
    return cfg;
}

/// Hand-assembled dataset over a constant series, identity normalization.
Dataset constant_dataset(const DirectedGraph& g, double value, std::size_t windows) {
    Dataset d;
    d.normalizer.mean = 0.0;
    d.normalizer.std = 1.0;
    WindowSample w;
    w.window = Tensor2(g.num_nodes, 4, value);
    w.future = Tensor2(g.num_nodes, 1, value);
    for (std::size_t i = 0; i < windows; ++i) d.train.push_back(w);
    d.train_full = d.train;
    d.val = {w};
    d.test = {w};
    return d;
}

DiffusionSpec small_diffusion(std::uint64_t seed) {
    DiffusionSpec spec;
    spec.num_nodes = 4;
    spec.edge_prob = 0.3;
    spec.steps = 160;
    spec.seed = seed;
    spec.noise_std = 0.05;
    return spec;
}

} // namespace

TEST_CASE("train config defaults") {
    const TrainConfig cfg;
    CHECK(cfg.lr == 0.001);
    CHECK(cfg.weight_decay == 0.0005);
    CHECK(cfg.iterations == 3000);
    CHECK(cfg.lookback == 12);
    CHECK(cfg.hidden == 64);
    CHECK(cfg.gn_layers == 1);
    CHECK(cfg.subsample_fraction == 0.2);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.repeats == 5);
    CHECK_NOTHROW(cfg.validate());

    TrainConfig bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.subsample_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("l2 loss values and gradient") {
    Tape t;
    const auto pred = t.leaf(Tensor2(2, 1, {1, 2}));
    const auto target = t.leaf(Tensor2(2, 1, {0, 0}));
    const auto loss = l2_loss(t, pred, target);
    CHECK(t.value(loss)(0, 0) == 5.0);

    t.backward(loss);
    CHECK(t.grad(pred)(0, 0) == 2.0); // 2*(pred - target)
    CHECK(t.grad(pred)(1, 0) == 4.0);
    CHECK(t.grad(target)(0, 0) == -2.0);

    const auto same = l2_loss(t, pred, pred);
    CHECK(t.value(same)(0, 0) == 0.0);

    CHECK_THROWS_AS(l2_loss(t, pred, t.leaf(Tensor2(3, 1, 0.0))), ShapeError);
    CHECK(l2_loss_value(Tensor2(2, 1, {1, 2}), Tensor2(2, 1, {0, 0})) == 5.0);
}

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
    ParameterStore s;
    s.add("w", Tensor2(2, 2, {1, -2, 3, 4}));
    AdamState adam(s);
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    const Tensor2 before = s.value("w");
    s.zero_grads();
    adam.step(s, cfg);
    CHECK(std::memcmp(before.data(), s.value("w").data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("adam: first bias-corrected step moves by lr") {
    ParameterStore s;
    s.add("w", Tensor2(1, 1, {0.0}));
    AdamState adam(s);
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    s.grad("w")(0, 0) = 1.0;
    adam.step(s, cfg);
    // mhat = vhat = 1 after one step, so the move is lr / (1 + eps)
    CHECK(s.value("w")(0, 0) == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("adam: weight decay alone shrinks parameters") {
    ParameterStore s;
    s.add("w", Tensor2(1, 2, {2.0, -3.0}));
    AdamState adam(s);
    AdamConfig cfg;
    cfg.weight_decay = 0.01;
    double prev0 = 2.0, prev1 = 3.0;
    for (int i = 0; i < 5; ++i) {
        s.zero_grads();
        adam.step(s, cfg);
        CHECK(std::abs(s.value("w")(0, 0)) < prev0);
        CHECK(std::abs(s.value("w")(0, 1)) < prev1);
        prev0 = std::abs(s.value("w")(0, 0));
        prev1 = std::abs(s.value("w")(0, 1));
    }
}

TEST_CASE("decoupled decay mode also shrinks, along a different path") {
    ParameterStore s;
    s.add("w", Tensor2(1, 1, {2.0}));
    AdamState adam(s);
    AdamConfig cfg;
    cfg.weight_decay = 0.01;
    cfg.decoupled_decay = true;
    s.zero_grads();
    adam.step(s, cfg);
    CHECK(s.value("w")(0, 0) == doctest::Approx(2.0 * (1.0 - cfg.lr * cfg.weight_decay)));
}

TEST_CASE("training a gru-only model on a constant series converges") {
    const DirectedGraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}}, {1, 1, 1});
    const Dataset data = constant_dataset(g, 0.5, 32);
    TrainConfig cfg = quick_train(600, 5);
    cfg.weight_decay = 0.0;
    const TrainResult r = train(tiny_cfg(ModelVariant::NodeGruOnly), data, g, cfg);
    CHECK(r.log.loss.back() < 1e-6);
}

TEST_CASE("fitted constant model rolls out without drift") {
    const DirectedGraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}}, {1, 1, 1});
    const Dataset data = constant_dataset(g, 0.5, 32);
    TrainConfig cfg = quick_train(800, 5);
    cfg.weight_decay = 0.0;
    const ModelConfig mc = tiny_cfg(ModelVariant::NodeGruOnly);
    const TrainResult r = train(mc, data, g, cfg);

    const Tensor2 out = rollout(mc, make_wiring(g), Tensor2(3, 4, 0.5), r.params, 12);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t h = 0; h < 12; ++h) CHECK(std::abs(out(i, h) - 0.5) < 1e-3);
}

TEST_CASE("same seed twice gives a bit-identical log and parameters") {
    const SyntheticData data = generate(small_diffusion(3));
    const Dataset d = prepare_dataset(data.signals, 4, 1, 0.5, 7);
    const ModelConfig mc = tiny_cfg(ModelVariant::LocaleGn);

    const TrainResult a = train(mc, d, data.graph, quick_train(60, 7));
    const TrainResult b = train(mc, d, data.graph, quick_train(60, 7));
    REQUIRE(a.log.loss.size() == b.log.loss.size());
    CHECK(std::memcmp(a.log.loss.data(), b.log.loss.data(),
                      a.log.loss.size() * sizeof(double)) == 0);
    CHECK(a.log.checkpoint_val_rmse == b.log.checkpoint_val_rmse);
    CHECK(a.params.checksum() == b.params.checksum());

    const TrainResult c = train(mc, d, data.graph, quick_train(60, 8));
    CHECK(a.params.checksum() != c.params.checksum());
}

TEST_CASE("training loss decreases on the synthetic fixture") {
    const SyntheticData data = generate(small_diffusion(11));
    const Dataset d = prepare_dataset(data.signals, 4, 1, 0.5, 11);
    const ModelConfig mc = tiny_cfg(ModelVariant::LocaleGn);
    const TrainResult r = train(mc, d, data.graph, quick_train(300, 11));

    auto median_of = [](std::span<const double> v) {
        std::vector<double> c(v.begin(), v.end());
        std::sort(c.begin(), c.end());
        return c[c.size() / 2];
    };
    const double early = median_of(std::span(r.log.loss).subspan(0, 100));
    const double late = median_of(std::span(r.log.loss).subspan(r.log.loss.size() - 100));
    CHECK(late < early);
    CHECK(r.log.loss.back() < r.log.loss.front());
}

TEST_CASE("returned checkpoint is the argmin of the recorded validation curve") {
    const SyntheticData data = generate(small_diffusion(13));
    const Dataset d = prepare_dataset(data.signals, 4, 1, 0.5, 13);
    const ModelConfig mc = tiny_cfg(ModelVariant::LocaleGn);
    const TrainResult r = train(mc, d, data.graph, quick_train(150, 13));

    REQUIRE(!r.log.checkpoint_val_rmse.empty());
    double best = r.log.checkpoint_val_rmse[0];
    for (double v : r.log.checkpoint_val_rmse) best = std::min(best, v);
    CHECK(r.log.checkpoint_val_rmse[r.log.best_checkpoint] == best);

    // the returned parameters really score the best recorded value
    const double rmse = validation_rmse(mc, data.graph, r.params, d.val, d.normalizer);
    CHECK(rmse == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("train log serializes as iter,loss,val_rmse") {
    TrainLog log;
    log.loss = {2.0, 1.5, 1.0};
    log.checkpoint_iters = {2};
    log.checkpoint_val_rmse = {0.75};
    const std::string csv = log.to_csv();
    CHECK(csv.find("iter,loss,val_rmse\n") == 0);
    CHECK(csv.find("\n2,1.5,0.75\n") != std::string::npos);
    CHECK(csv.find("\n3,1,\n") != std::string::npos);
}

TEST_CASE("diverging training aborts with the iteration number") {
    const SyntheticData data = generate(small_diffusion(17));
    const Dataset d = prepare_dataset(data.signals, 4, 1, 0.5, 17);
    TrainConfig cfg = quick_train(200, 17);
    cfg.lr = 1e40; // drive the forward values past the double range
    try {
        train(tiny_cfg(ModelVariant::LocaleGn), d, data.graph, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("repeat_experiment aggregates seeded repeats") {
    const SyntheticData data = generate(small_diffusion(19));
    const ModelConfig mc = tiny_cfg(ModelVariant::NodeGruOnly);
    const std::size_t horizons[] = {1, 2};

    SUBCASE("zero seed stride degenerates to zero deviation") {
        const ExperimentResult r = repeat_experiment(mc, data.signals, data.graph,
                                                     quick_train(40, 23), horizons, 3, 0);
        REQUIRE(r.report.runs.size() == 3);
        for (std::size_t h : {1, 2}) {
            const auto agg = r.report.aggregate(h, "rmse");
            CHECK(agg.n == 3);
            CHECK(agg.std == 0.0);
            CHECK(agg.mean == r.report.runs[0].at_horizon(h).rmse);
        }
    }
    SUBCASE("distinct seeds give distinct runs, aggregated") {
        const ExperimentResult r = repeat_experiment(mc, data.signals, data.graph,
                                                     quick_train(40, 23), horizons, 3, 1);
        REQUIRE(r.trainings.size() == 3);
        CHECK(r.trainings[0].params.checksum() != r.trainings[1].params.checksum());
        const auto agg = r.report.aggregate(1, "rmse");
        CHECK(agg.std >= 0.0);
        CHECK(agg.n == 3);
    }
}
