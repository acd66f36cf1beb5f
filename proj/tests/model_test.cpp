#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sampsd/data.hpp"
#include "sampsd/errors.hpp"
#include "sampsd/model.hpp"

using namespace sampsd;

namespace {

MlpModel random_model(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed) {
    return init_mlp(d, m, k, Rng(seed));
}

std::vector<double> random_input(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform();
    return x;
}

// Central finite differences over every parameter.
double max_grad_rel_error(MlpModel model, const std::vector<double>& x, int label) {
    const Gradients g = backward(model, x, label);
    const double eps = 1e-5;
    double worst = 0.0;
    auto check_param = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + eps;
        const double up = loss_ce(forward(model, x).logits, label);
        param = saved - eps;
        const double down = loss_ce(forward(model, x).logits, label);
        param = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 0.01});
        worst = std::max(worst, rel);
    };
    for (std::size_t i = 0; i < model.w1.data.size(); ++i)
        check_param(model.w1.data[i], g.w1.data[i]);
    for (std::size_t i = 0; i < model.b1.size(); ++i) check_param(model.b1[i], g.b1[i]);
    for (std::size_t i = 0; i < model.w2.data.size(); ++i)
        check_param(model.w2.data[i], g.w2.data[i]);
    for (std::size_t i = 0; i < model.b2.size(); ++i) check_param(model.b2[i], g.b2[i]);
    return worst;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("forward with zero parameters gives zero logits and a uniform softmax") {
    MlpModel m;
    m.input_dim = 4;
    m.hidden_dim = 3;
    m.num_classes = 5;
    m.w1 = Matrix(3, 4);
    m.b1.assign(3, 0.0);
    m.w2 = Matrix(5, 3);
    m.b2.assign(5, 0.0);
    const ForwardResult f = forward(m, {0.1, 0.2, 0.3, 0.4});
    for (double z : f.logits) CHECK(z == 0.0);
    for (double p : softmax(f.logits)) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("forward with all-negative pre-activations yields logits = b2") {
    MlpModel m = random_model(6, 4, 3, 2);
    for (double& v : m.b1) v = -100.0;  // kill every hidden unit
    for (double& v : m.w1.data) v = std::min(v, 0.0);
    const ForwardResult f = forward(m, random_input(6, 3));
    for (double h : f.hidden) CHECK(h == 0.0);
    for (std::size_t c = 0; c < 3; ++c) CHECK(f.logits[c] == m.b2[c]);
}

TEST_CASE("forward matches an independent recomputation") {
    const MlpModel m = random_model(10, 7, 4, 11);
    const std::vector<double> x = random_input(10, 12);
    const ForwardResult f = forward(m, x);
    for (std::size_t j = 0; j < 7; ++j) {
        double pre = m.b1[j];
        for (std::size_t c = 0; c < 10; ++c) pre += m.w1(j, c) * x[c];
        CHECK(std::abs(f.hidden[j] - std::max(pre, 0.0)) < 1e-12);
    }
    for (std::size_t c = 0; c < 4; ++c) {
        double z = m.b2[c];
        for (std::size_t j = 0; j < 7; ++j) z += m.w2(c, j) * f.hidden[j];
        CHECK(std::abs(f.logits[c] - z) < 1e-12);
    }
}

TEST_CASE("loss_ce on uniform logits is ln K") {
    const std::vector<double> logits(10, 0.7);
    CHECK(loss_ce(logits, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("loss_ce stays finite under extreme logits") {
    const double loss = loss_ce({1000.0, 0.0}, 0);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("loss_ce matches a long-double oracle") {
    const MlpModel m = random_model(8, 6, 5, 21);
    const std::vector<double> x = random_input(8, 22);
    const ForwardResult f = forward(m, x);
    for (int label = 0; label < 5; ++label) {
        long double sum = 0.0L;
        for (double z : f.logits) sum += expl(static_cast<long double>(z));
        const long double oracle = -logl(expl(static_cast<long double>(f.logits[label])) / sum);
        CHECK(std::abs(loss_ce(f.logits, label) - static_cast<double>(oracle)) < 1e-10);
    }
}

TEST_CASE("backward is zero in W1 for a zero input") {
    const MlpModel m = random_model(5, 4, 3, 31);
    const Gradients g = backward(m, std::vector<double>(5, 0.0), 1);
    for (double v : g.w1.data) CHECK(v == 0.0);
}

TEST_CASE("backward agrees with central finite differences on seeded pairs") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const MlpModel m = random_model(9, 6, 4, 100 + seed);
        const std::vector<double> x = random_input(9, 200 + seed);
        const int label = static_cast<int>(seed % 4);
        CHECK(max_grad_rel_error(m, x, label) <= 1e-6);
    }
}

TEST_CASE("batch gradient equals the mean of per-sample gradients bit-for-bit") {
    const MlpModel m = random_model(7, 5, 3, 41);
    const std::size_t batch = 6;
    Matrix inputs(batch, 7);
    std::vector<int> labels(batch);
    Rng rng(42);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < 7; ++j) inputs(i, j) = rng.uniform();
        labels[i] = static_cast<int>(rng.uniform_index(3));
    }

    Gradients batched;
    batch_gradients(m, inputs, labels, batched);

    Gradients acc = Gradients::zeros_like(m);
    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<double> x(inputs.row_ptr(i), inputs.row_ptr(i) + 7);
        const Gradients g = backward(m, x, labels[i]);
        for (std::size_t j = 0; j < acc.w1.data.size(); ++j) acc.w1.data[j] += g.w1.data[j];
        for (std::size_t j = 0; j < acc.b1.size(); ++j) acc.b1[j] += g.b1[j];
        for (std::size_t j = 0; j < acc.w2.data.size(); ++j) acc.w2.data[j] += g.w2.data[j];
        for (std::size_t j = 0; j < acc.b2.size(); ++j) acc.b2[j] += g.b2[j];
    }
    acc.scale(1.0 / static_cast<double>(batch));

    CHECK(batched.w1.data == acc.w1.data);
    CHECK(batched.b1 == acc.b1);
    CHECK(batched.w2.data == acc.w2.data);
    CHECK(batched.b2 == acc.b2);
}

TEST_CASE("extract_features matches per-sample forward calls exactly") {
    const Dataset ds = gen_synthetic(3, 6, ImageShape{8, 8, 1}, 0.1, 51);
    const MlpModel m = random_model(64, 10, 3, 52);
    const Matrix feats = extract_features(m, ds);
    REQUIRE(feats.rows == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const ForwardResult f = forward(m, ds.samples[i].pixels);
        for (std::size_t j = 0; j < 10; ++j) CHECK(feats(i, j) == f.hidden[j]);
    }
}

TEST_CASE("extract_features duplicate samples give identical rows") {
    Dataset ds = gen_synthetic(2, 2, ImageShape{8, 8, 1}, 0.0, 61);
    const MlpModel m = random_model(64, 8, 2, 62);
    const Matrix feats = extract_features(m, ds);
    // zero noise: samples of one class are identical
    for (std::size_t j = 0; j < 8; ++j) CHECK(feats(0, j) == feats(1, j));
}

TEST_CASE("extract_features permutation equivariance") {
    Dataset ds = gen_synthetic(3, 4, ImageShape{8, 8, 1}, 0.2, 63);
    const MlpModel m = random_model(64, 6, 3, 64);
    const Matrix feats = extract_features(m, ds);
    std::reverse(ds.samples.begin(), ds.samples.end());
    const Matrix rev = extract_features(m, ds);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < 6; ++j) CHECK(rev(i, j) == feats(ds.size() - 1 - i, j));
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const MlpModel m = random_model(12, 9, 4, 71);
    const std::string path = "/tmp/sampsd_test_model.bin";
    save_checkpoint(m, path);
    const MlpModel back = load_checkpoint(path);
    CHECK(back.input_dim == m.input_dim);
    CHECK(back.hidden_dim == m.hidden_dim);
    CHECK(back.num_classes == m.num_classes);
    CHECK(back.w1.data == m.w1.data);
    CHECK(back.b1 == m.b1);
    CHECK(back.w2.data == m.w2.data);
    CHECK(back.b2 == m.b2);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint with corrupted magic is rejected") {
    const MlpModel m = random_model(4, 3, 2, 81);
    const std::string path = "/tmp/sampsd_test_badmodel.bin";
    save_checkpoint(m, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.put('X');
    }
    CHECK_THROWS_AS(load_checkpoint(path), format_error);
    std::remove(path.c_str());
}

TEST_CASE("softmax sums to one") {
    const MlpModel m = random_model(6, 5, 7, 91);
    const ForwardResult f = forward(m, random_input(6, 92));
    const std::vector<double> p = softmax(f.logits);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

}
