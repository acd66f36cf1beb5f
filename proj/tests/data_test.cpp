#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "sampsd/data.hpp"
#include "sampsd/errors.hpp"

using namespace sampsd;

namespace {

// Pixel-space nearest-centroid classifier, the independent oracle for
// synthetic-data separability.
double centroid_holdout_accuracy(const Dataset& train, const Dataset& test) {
    const std::size_t d = train.shape.pixel_count();
    std::vector<std::vector<double>> centroids(train.num_classes, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(train.num_classes, 0);
    for (const auto& s : train.samples) {
        for (std::size_t j = 0; j < d; ++j) centroids[s.label][j] += s.pixels[j];
        ++counts[s.label];
    }
    for (int c = 0; c < train.num_classes; ++c)
        for (std::size_t j = 0; j < d; ++j) centroids[c][j] /= static_cast<double>(counts[c]);

    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        int best = -1;
        double best_d = 0.0;
        for (int c = 0; c < train.num_classes; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = s.pixels[j] - centroids[c][j];
                dist += diff * diff;
            }
            if (best < 0 || dist < best_d) {
                best = c;
                best_d = dist;
            }
        }
        if (best == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/sampsd_test_") + name;
}

void write_idx_fixture(const std::string& img_path, const std::string& lab_path) {
    // 2 images of 2x2 single-channel pixels.
    const unsigned char img[] = {0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                 0,    64,   128,  255,  10, 20, 30, 40};
    const unsigned char lab[] = {0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 1, 0};
    std::ofstream(img_path, std::ios::binary)
        .write(reinterpret_cast<const char*>(img), sizeof(img));
    std::ofstream(lab_path, std::ios::binary)
        .write(reinterpret_cast<const char*>(lab), sizeof(lab));
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("gen_synthetic zero noise makes identical samples per class") {
    const Dataset ds = gen_synthetic(3, 4, ImageShape{8, 8, 1}, 0.0, 7);
    for (int cls = 0; cls < 3; ++cls) {
        const Sample* first = nullptr;
        for (const auto& s : ds.samples) {
            if (s.label != cls) continue;
            if (!first) {
                first = &s;
                continue;
            }
            CHECK(s.pixels == first->pixels);
        }
    }
}

TEST_CASE("gen_synthetic determinism") {
    const Dataset a = gen_synthetic(4, 10, ImageShape{12, 12, 3}, 0.1, 99);
    const Dataset b = gen_synthetic(4, 10, ImageShape{12, 12, 3}, 0.1, 99);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].pixels == b.samples[i].pixels);
        CHECK(a.samples[i].label == b.samples[i].label);
    }
}

TEST_CASE("gen_synthetic nearest-centroid separability oracle") {
    const Dataset train = gen_synthetic(10, 500, ImageShape{16, 16, 3}, 0.1, 1, "train");
    const Dataset test = gen_synthetic(10, 100, ImageShape{16, 16, 3}, 0.1, 2, "test");
    CHECK(centroid_holdout_accuracy(train, test) >= 0.95);
}

TEST_CASE("gen_synthetic rejects images too small for the class geometry") {
    CHECK_THROWS_AS(gen_synthetic(3, 2, ImageShape{4, 16, 1}, 0.1, 1), value_error);
    CHECK_THROWS_AS(gen_synthetic(1, 2, ImageShape{16, 16, 1}, 0.1, 1), value_error);
}

TEST_CASE("load_idx reads a handcrafted fixture with exact /255 scaling") {
    const std::string img = temp_path("fixture.idx"), lab = temp_path("fixture_labels.idx");
    write_idx_fixture(img, lab);
    const Dataset ds = load_idx(img, lab);
    REQUIRE(ds.size() == 2);
    CHECK(ds.shape.height == 2);
    CHECK(ds.shape.width == 2);
    CHECK(ds.shape.channels == 1);
    CHECK(ds.samples[0].pixels == std::vector<double>{0.0, 64.0 / 255, 128.0 / 255, 1.0});
    CHECK(ds.samples[1].label == 0);
    CHECK(ds.samples[0].label == 1);
    CHECK(ds.num_classes == 2);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("load_idx rejects truncation, bad magic, count mismatch") {
    const std::string img = temp_path("bad.idx"), lab = temp_path("bad_labels.idx");
    write_idx_fixture(img, lab);

    {  // truncated image payload
        std::ofstream f(img, std::ios::binary);
        const unsigned char hdr[] = {0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2,
                                     0,    0,    0,    2,    9, 9};
        f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_AS(load_idx(img, lab), format_error);

    write_idx_fixture(img, lab);
    {  // bad magic
        std::fstream f(img, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(3);
        f.put(0x07);
    }
    CHECK_THROWS_AS(load_idx(img, lab), format_error);

    write_idx_fixture(img, lab);
    {  // label count disagrees
        std::fstream f(lab, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(7);
        f.put(3);
    }
    CHECK_THROWS_AS(load_idx(img, lab), format_error);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("save_idx / load_idx round trip with manifest") {
    const Dataset ds = gen_synthetic(3, 5, ImageShape{8, 8, 3}, 0.05, 21);
    const std::string img = temp_path("rt.idx"), lab = temp_path("rt_labels.idx");
    save_idx(ds, img, lab);
    const Dataset back = load_idx(img, lab);
    REQUIRE(back.size() == ds.size());
    CHECK(back.shape == ds.shape);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].label == ds.samples[i].label);
        for (std::size_t j = 0; j < ds.shape.pixel_count(); ++j)
            CHECK(std::abs(back.samples[i].pixels[j] - ds.samples[i].pixels[j]) <= 0.5 / 255.0);
    }
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("apply_trigger blend endpoints") {
    const ImageShape shape{8, 8, 1};
    const Dataset ds = gen_synthetic(2, 1, shape, 0.0, 3);
    const std::vector<double>& x = ds.samples[0].pixels;

    TriggerSpec identity = TriggerSpec::noise_blend(shape, 1.0);
    identity.alpha = 0.0;
    CHECK(apply_trigger(x, shape, identity) == x);

    const TriggerSpec full = TriggerSpec::noise_blend(shape, 1.0);
    CHECK(apply_trigger(x, shape, full) == full.blend_pattern);
}

TEST_CASE("apply_trigger patch changes exactly the corner pixels") {
    const ImageShape shape{8, 8, 3};
    std::vector<double> black(shape.pixel_count(), 0.0);
    TriggerSpec t;
    t.kind = TriggerKind::patch;
    t.patch_size = 3;
    t.corner = Corner::bottom_right;
    t.patch_pattern.assign(3 * 3 * 3, 1.0);

    const std::vector<double> out = apply_trigger(black, shape, t);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] != black[i]) {
            CHECK(out[i] == 1.0);
            ++changed;
        }
    CHECK(changed == 9 * shape.channels);
}

TEST_CASE("apply_trigger patch is idempotent") {
    const ImageShape shape{10, 12, 3};
    const Dataset ds = gen_synthetic(2, 1, shape, 0.2, 5);
    const TriggerSpec t = TriggerSpec::checkerboard_patch(shape);
    const std::vector<double> once = apply_trigger(ds.samples[0].pixels, shape, t);
    CHECK(apply_trigger(once, shape, t) == once);
}

TEST_CASE("poison_dataset p=0 keeps the clean data with zero flags") {
    const Dataset clean = gen_synthetic(3, 10, ImageShape{8, 8, 1}, 0.1, 11);
    PoisonPlan plan;
    plan.poisoning_ratio = 0.0;
    plan.trigger = TriggerSpec::checkerboard_patch(clean.shape);
    plan.seed = 5;
    const Dataset out = poison_dataset(clean, plan);
    REQUIRE(out.size() == clean.size());
    CHECK(out.poison_count() == 0);
    for (const auto& s : out.samples) {
        CHECK_FALSE(s.is_poisoned);
        CHECK(s.pixels == clean.samples[s.origin_index].pixels);
        CHECK(s.label == clean.samples[s.origin_index].label);
    }
}

TEST_CASE("poison_dataset floors the count and relabels under the fixed rule") {
    const Dataset clean = gen_synthetic(10, 100, ImageShape{8, 8, 1}, 0.05, 13);  // N = 1000
    PoisonPlan plan;
    plan.poisoning_ratio = 0.05;
    plan.rule = TargetRule::fixed;
    plan.target_label = 0;
    plan.trigger = TriggerSpec::checkerboard_patch(clean.shape);
    plan.seed = 17;
    const Dataset out = poison_dataset(clean, plan);
    CHECK(out.poison_count() == 50);
    for (const auto& s : out.samples) {
        if (!s.is_poisoned) continue;
        CHECK(s.label == 0);
        CHECK(clean.samples[s.origin_index].label != 0);  // origin label differed
    }
}

TEST_CASE("poison_dataset all-to-all rule shifts labels by one") {
    const Dataset clean = gen_synthetic(10, 30, ImageShape{8, 8, 1}, 0.05, 19);
    PoisonPlan plan;
    plan.poisoning_ratio = 0.1;
    plan.rule = TargetRule::all_to_all;
    plan.trigger = TriggerSpec::checkerboard_patch(clean.shape);
    plan.seed = 23;
    const Dataset out = poison_dataset(clean, plan);
    CHECK(out.poison_count() == 30);
    for (const auto& s : out.samples)
        if (s.is_poisoned) CHECK(s.label == (clean.samples[s.origin_index].label + 1) % 10);
}

TEST_CASE("poison_dataset rejects a ratio with no eligible sources") {
    const Dataset clean = gen_synthetic(2, 10, ImageShape{8, 8, 1}, 0.05, 29);  // N = 20
    PoisonPlan plan;
    plan.poisoning_ratio = 0.8;  // needs 16 samples but only 10 have label != 0
    plan.rule = TargetRule::fixed;
    plan.target_label = 0;
    plan.trigger = TriggerSpec::checkerboard_patch(clean.shape);
    CHECK_THROWS_AS(poison_dataset(clean, plan), config_error);
}

TEST_CASE("poison_dataset is deterministic under the plan seed") {
    const Dataset clean = gen_synthetic(5, 20, ImageShape{8, 8, 3}, 0.1, 31);
    PoisonPlan plan;
    plan.poisoning_ratio = 0.1;
    plan.trigger = TriggerSpec::noise_blend(clean.shape, 0.2);
    plan.target_label = 2;
    plan.seed = 37;
    const Dataset a = poison_dataset(clean, plan);
    const Dataset b = poison_dataset(clean, plan);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].pixels == b.samples[i].pixels);
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(a.samples[i].is_poisoned == b.samples[i].is_poisoned);
        CHECK(a.samples[i].origin_index == b.samples[i].origin_index);
    }
}

TEST_CASE("split_per_class holds out the requested counts") {
    const Dataset ds = gen_synthetic(4, 25, ImageShape{8, 8, 1}, 0.1, 41);
    const auto [held, rest] = split_per_class(ds, 10, 43);
    CHECK(held.size() == 40);
    CHECK(rest.size() == 60);
    std::vector<int> counts(4, 0);
    for (const auto& s : held.samples) ++counts[s.label];
    for (int c : counts) CHECK(c == 10);
}

}
