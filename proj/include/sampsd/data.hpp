#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sampsd/rng.hpp"

namespace sampsd {

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t pixel_count() const { return height * width * channels; }
    bool operator==(const ImageShape&) const = default;
};

struct Sample {
    std::vector<double> pixels;  // H*W*C row-major, values in [0, 1]
    int label = 0;
    bool is_poisoned = false;
    std::size_t origin_index = 0;  // index in the source dataset
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    ImageShape shape;
    std::string split;  // train / reference / test

    std::size_t size() const { return samples.size(); }
    std::size_t poison_count() const;
};

enum class TriggerKind { patch, blend };
enum class Corner { top_left, top_right, bottom_left, bottom_right };

// A fixed input perturbation: either an m x m patch pasted into a corner, or a
// full-image pattern alpha-blended over the input.
struct TriggerSpec {
    TriggerKind kind = TriggerKind::patch;
    // patch
    Corner corner = Corner::bottom_right;
    std::size_t patch_size = 3;
    std::vector<double> patch_pattern;  // patch_size * patch_size * channels
    // blend
    double alpha = 0.2;
    std::vector<double> blend_pattern;  // full image, H*W*C

    // 3x3 checkerboard in the bottom-right corner (BadNets-style default).
    static TriggerSpec checkerboard_patch(const ImageShape& shape, std::size_t size = 3,
                                          Corner corner = Corner::bottom_right);
    // Fixed seeded uniform-noise pattern blended at strength alpha.
    static TriggerSpec noise_blend(const ImageShape& shape, double alpha,
                                   std::uint64_t pattern_seed = 7);

    void validate(const ImageShape& shape) const;
};

enum class TargetRule { fixed, all_to_all };

struct PoisonPlan {
    double poisoning_ratio = 0.0;  // p in [0, 1)
    TargetRule rule = TargetRule::fixed;
    int target_label = 0;  // y_t for the fixed rule
    TriggerSpec trigger;
    std::uint64_t seed = 0;
};

// Synthetic labeled images: each class is a deterministic base pattern (a
// class-specific rectangle and color ramp) plus iid Gaussian pixel noise,
// clipped to [0, 1].
Dataset gen_synthetic(int num_classes, std::size_t per_class, const ImageShape& shape,
                      double noise_sigma, std::uint64_t seed, const std::string& split = "train");

// Read an IDX image/label file pair (MNIST-style: big-endian u32 header
// fields, unsigned-byte pixels scaled to [0, 1]). Images may be 3-dimensional
// (magic 0x00000803, single channel) or 4-dimensional (magic 0x00000804,
// trailing channel dim); labels use magic 0x00000801.
Dataset load_idx(const std::string& image_path, const std::string& label_path);

// Write a dataset as an IDX pair (pixels quantized to bytes) plus a JSON
// manifest {seed, shape, num_classes, plan, poison_indices} next to it.
void save_idx(const Dataset& ds, const std::string& image_path, const std::string& label_path);
void write_manifest(const Dataset& ds, std::uint64_t seed, const PoisonPlan* plan,
                    const std::string& manifest_path);

// x~ = g(x, trigger): patch replaces the corner region, blend mixes
// (1-alpha)*x + alpha*pattern. Result stays in [0, 1].
std::vector<double> apply_trigger(const std::vector<double>& pixels, const ImageShape& shape,
                                  const TriggerSpec& trigger);

// Replace floor(p*N) uniformly chosen samples by triggered, relabeled versions
// and shuffle the result, all under plan.seed. Under the fixed rule the
// replaced samples are drawn only from labels != target (a poisoned sample
// must change its label).
Dataset poison_dataset(const Dataset& clean, const PoisonPlan& plan);

// Split `per_class` samples per class out of `ds` (seeded), e.g. to hold a
// reference clean set out of the test split. Returns {held_out, remainder}.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t per_class,
                                            std::uint64_t seed);

}  // namespace sampsd
