#include <doctest.h>

#include <cmath>

#include "sampsd/data.hpp"
#include "sampsd/errors.hpp"
#include "sampsd/optim.hpp"

using namespace sampsd;

namespace {

bool models_identical(const MlpModel& a, const MlpModel& b) {
    return a.w1.data == b.w1.data && a.b1 == b.b1 && a.w2.data == b.w2.data && a.b2 == b.b2;
}

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

Batch random_batch(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    Batch b{Matrix(n, d), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) b.inputs(i, j) = rng.uniform();
        b.labels[i] = static_cast<int>(rng.uniform_index(k));
    }
    return b;
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("sgd_step arithmetic and no-ops") {
    MlpModel m = init_mlp(1, 1, 2, Rng(1));
    m.w1(0, 0) = 1.0;
    Gradients g = Gradients::zeros_like(m);
    g.w1(0, 0) = 2.0;

    MlpModel frozen = m;
    sgd_step(frozen, g, 0.0);
    CHECK(models_identical(frozen, m));

    MlpModel untouched = m;
    sgd_step(untouched, Gradients::zeros_like(m), 0.3);
    CHECK(models_identical(untouched, m));

    sgd_step(m, g, 0.1);
    CHECK(m.w1(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sam_step with rho = 0 is bit-identical to sgd_step") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MlpModel init = init_mlp(8, 6, 3, Rng(300 + seed));
        const Batch batch = random_batch(16, 8, 3, 400 + seed);

        MlpModel via_sam = init;
        sam_step(via_sam, batch.inputs, batch.labels, 0.05, 0.0);

        MlpModel via_sgd = init;
        Gradients g;
        batch_gradients(via_sgd, batch.inputs, batch.labels, g);
        sgd_step(via_sgd, g, 0.05);

        CHECK(models_identical(via_sam, via_sgd));
    }
}

TEST_CASE("sam_step falls back to sgd on a zero-gradient batch") {
    // Saturated margins make the cross-entropy gradient exactly zero in
    // double precision.
    MlpModel m = init_mlp(1, 1, 2, Rng(5));
    m.w1(0, 0) = 1.0;
    m.b1[0] = 0.0;
    m.w2(0, 0) = 2000.0;
    m.w2(1, 0) = -2000.0;
    m.b2 = {0.0, 0.0};
    Matrix inputs(1, 1);
    inputs(0, 0) = 1.0;
    const std::vector<int> labels = {0};

    Gradients g;
    batch_gradients(m, inputs, labels, g);
    double norm_sq = 0.0;
    for (double v : g.w1.data) norm_sq += v * v;
    for (double v : g.w2.data) norm_sq += v * v;
    REQUIRE(norm_sq == 0.0);

    const MlpModel before = m;
    sam_step(m, inputs, labels, 0.1, 0.05);
    CHECK(models_identical(m, before));
}

TEST_CASE("sam_step matches an explicit two-pass recomputation") {
    const MlpModel init = init_mlp(10, 8, 4, Rng(7));
    const Batch batch = random_batch(12, 10, 4, 8);
    const double eta = 0.05, rho = 0.05;

    MlpModel stepped = init;
    sam_step(stepped, batch.inputs, batch.labels, eta, rho);

    // oracle: gradient, normalized ascent, gradient at the perturbed point,
    // descent from the original weights
    Gradients g;
    batch_gradients(init, batch.inputs, batch.labels, g);
    double norm = 0.0;
    for (double v : g.w1.data) norm += v * v;
    for (double v : g.b1) norm += v * v;
    for (double v : g.w2.data) norm += v * v;
    for (double v : g.b2) norm += v * v;
    norm = std::sqrt(norm);
    REQUIRE(norm > 1e-12);

    MlpModel perturbed = init;
    const double scale = rho / norm;
    for (std::size_t i = 0; i < perturbed.w1.data.size(); ++i)
        perturbed.w1.data[i] += scale * g.w1.data[i];
    for (std::size_t i = 0; i < perturbed.b1.size(); ++i) perturbed.b1[i] += scale * g.b1[i];
    for (std::size_t i = 0; i < perturbed.w2.data.size(); ++i)
        perturbed.w2.data[i] += scale * g.w2.data[i];
    for (std::size_t i = 0; i < perturbed.b2.size(); ++i) perturbed.b2[i] += scale * g.b2[i];

    Gradients g2;
    batch_gradients(perturbed, batch.inputs, batch.labels, g2);
    MlpModel oracle = init;
    sgd_step(oracle, g2, eta);

    for (std::size_t i = 0; i < oracle.w1.data.size(); ++i)
        CHECK(std::abs(stepped.w1.data[i] - oracle.w1.data[i]) <= 1e-12);
    for (std::size_t i = 0; i < oracle.b2.size(); ++i)
        CHECK(std::abs(stepped.b2[i] - oracle.b2[i]) <= 1e-12);
}

TEST_CASE("sam_step leaves no residual perturbation at eta = 0") {
    const MlpModel init = init_mlp(6, 5, 3, Rng(17));
    const Batch batch = random_batch(10, 6, 3, 18);
    MlpModel m = init;
    sam_step(m, batch.inputs, batch.labels, 0.0, 0.1);
    Gradients unused;
    const double loss_before = batch_gradients(init, batch.inputs, batch.labels, unused);
    const double loss_after = batch_gradients(m, batch.inputs, batch.labels, unused);
    CHECK(models_identical(m, init));
    CHECK(loss_before == loss_after);
}

TEST_CASE("train with zero epochs returns the init unchanged") {
    const Dataset ds = gen_synthetic(3, 10, ImageShape{8, 8, 1}, 0.1, 19);
    const MlpModel init = init_mlp(64, 8, 3, Rng(20));
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 21;
    const TrainResult r = train(ds, init, cfg);
    CHECK(models_identical(r.model, init));
    CHECK(r.log.epochs.empty());
}

TEST_CASE("train is deterministic given the config") {
    const Dataset ds = gen_synthetic(3, 20, ImageShape{8, 8, 1}, 0.1, 23);
    const MlpModel init = init_mlp(64, 8, 3, Rng(24));
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.kind = OptimizerKind::sam;
    cfg.rho = 0.1;
    cfg.seed = 25;
    const TrainResult a = train(ds, init, cfg);
    const TrainResult b = train(ds, init, cfg);
    CHECK(models_identical(a.model, b.model));
    REQUIRE(a.log.epochs.size() == b.log.epochs.size());
    for (std::size_t i = 0; i < a.log.epochs.size(); ++i)
        CHECK(a.log.epochs[i].loss == b.log.epochs[i].loss);
}

TEST_CASE("train reports divergence with the epoch") {
    // An impossible task (identical inputs, conflicting labels) with a huge
    // learning rate blows the loss up to non-finite values.
    Dataset ds;
    ds.num_classes = 2;
    ds.shape = ImageShape{8, 8, 1};
    for (int i = 0; i < 8; ++i) {
        Sample s;
        s.pixels.assign(64, 0.7);
        s.label = i % 2;
        s.origin_index = static_cast<std::size_t>(i);
        ds.samples.push_back(s);
    }
    const MlpModel init = init_mlp(64, 8, 2, Rng(26));
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e6;
    cfg.seed = 27;
    CHECK_THROWS_AS(train(ds, init, cfg), training_diverged_error);
}

TEST_CASE("train learns the synthetic task and the log stays in range") {
    const Dataset clean = gen_synthetic(3, 80, ImageShape{16, 16, 3}, 0.1, 29, "train");
    const Dataset test = gen_synthetic(3, 25, ImageShape{16, 16, 3}, 0.1, 30, "test");

    PoisonPlan plan;
    plan.poisoning_ratio = 0.05;
    plan.rule = TargetRule::fixed;
    plan.target_label = 0;
    plan.trigger = TriggerSpec::checkerboard_patch(clean.shape);
    plan.seed = 31;
    const Dataset poisoned = poison_dataset(clean, plan);

    EvalContext ctx;
    ctx.eval_set = &test;
    ctx.trigger = plan.trigger;
    ctx.rule = plan.rule;
    ctx.target_label = plan.target_label;

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.seed = 32;
    const TrainResult r = train(poisoned, init_mlp(16 * 16 * 3, 48, 3, Rng(33)), cfg, &ctx);
    REQUIRE(r.log.epochs.size() == 30);
    for (const auto& e : r.log.epochs) {
        REQUIRE(e.clean_accuracy.has_value());
        REQUIRE(e.attack_success_rate.has_value());
        CHECK(*e.clean_accuracy >= 0.0);
        CHECK(*e.clean_accuracy <= 1.0);
        CHECK(*e.attack_success_rate >= 0.0);
        CHECK(*e.attack_success_rate <= 1.0);
    }
    CHECK(*r.log.epochs.back().clean_accuracy > 0.8);
    const std::string csv = r.log.to_csv();
    CHECK(csv.starts_with("epoch,loss,clean_acc,asr\n"));
}

TEST_CASE("proposition_check with rho = 0 gives equal deltas") {
    Rng rng(41);
    const std::size_t m = 12, d = 6;
    std::vector<double> a(m), x(d);
    Matrix w(m, d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : w.data) v = rng.normal();
    for (auto& v : x) v = rng.uniform();
    const PropositionReport rep = proposition_check(a, w, x, 0.0, 1e-3);
    for (const auto& nr : rep.neurons) CHECK(nr.delta_sam == nr.delta_sgd);
}

TEST_CASE("proposition_check marks inactive neurons as condition-false") {
    std::vector<double> a = {1.0, -1.0};
    Matrix w(2, 2);
    w(0, 0) = -1.0;  // <w_0, x> < 0: inactive
    w(1, 0) = 1.0;   // active
    const std::vector<double> x = {1.0, 0.0};
    const PropositionReport rep = proposition_check(a, w, x, 1e-3, 1e-3);
    CHECK_FALSE(rep.neurons[0].active);
    CHECK_FALSE(rep.neurons[0].condition);
    CHECK(rep.neurons[1].active);
}

TEST_CASE("proposition_check condition-true neurons have negative a and SAM wins") {
    // Small Monte-Carlo slice of the acceptance-scale experiment.
    std::size_t cond_true = 0, sam_wins = 0, neg_a = 0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(5000 + trial);
        const std::size_t m = 16, d = 8;
        std::vector<double> a(m), x(d);
        Matrix w(m, d);
        for (auto& v : a) v = rng.normal();
        for (auto& v : w.data) v = rng.normal() / std::sqrt(static_cast<double>(d));
        for (auto& v : x) v = rng.normal();
        const PropositionReport rep = proposition_check(a, w, x, 1e-3, 1e-3);
        cond_true += rep.active_condition_true;
        sam_wins += rep.sam_greater_among_true;
        neg_a += rep.negative_a_among_true;
    }
    REQUIRE(cond_true > 50);  // the regime produces a healthy population
    CHECK(neg_a == cond_true);
    CHECK(static_cast<double>(sam_wins) / static_cast<double>(cond_true) >= 0.99);
}

TEST_CASE("proposition_check handles the zero-gradient edge") {
    // All neurons inactive: f = 0 and grad f = 0, so the condition is
    // undefined everywhere.
    std::vector<double> a = {1.0, -2.0};
    Matrix w(2, 3);
    for (double& v : w.data) v = -1.0;
    const std::vector<double> x = {1.0, 1.0, 1.0};
    const PropositionReport rep = proposition_check(a, w, x, 1e-3, 1e-3);
    for (const auto& nr : rep.neurons) CHECK_FALSE(nr.applicable);
}

}
