#pragma once

#include <string>
#include <vector>

#include "sampsd/data.hpp"
#include "sampsd/linalg.hpp"
#include "sampsd/model.hpp"

namespace sampsd {

// Per-neuron trigger-activated change for the hidden layer: the mean absolute
// activation difference between clean inputs and their triggered versions.
struct TacProfile {
    std::vector<double> values;  // one per hidden neuron, >= 0
    int layer = 0;               // hidden-layer index (this model has one)
    std::size_t clean_set_size = 0;
};

// TAC over the given clean set. `layer` selects the hidden layer; only 0
// exists for this architecture.
TacProfile tac(const MlpModel& model, const Dataset& clean_set, const TriggerSpec& trigger,
               int layer = 0);

// Mean of the K largest TAC values (the model's aggregate backdoor effect).
double topk_tac(const TacProfile& profile, std::size_t k = 2);

// Incoming-weight row norm per hidden neuron.
std::vector<double> weight_norms(const MlpModel& model);

// neuron_index, tac, weight_norm rows.
std::string tac_csv(const TacProfile& profile, const std::vector<double>& norms);

// Per class: mean over feature dimensions of the per-dimension population
// variance among that class's rows. Classes with one sample report 0.
std::vector<double> intra_class_variance(const Matrix& features, const std::vector<int>& labels,
                                         int num_classes);

// Mean silhouette of a two-group split under Euclidean distance; singleton
// points score 0.
double silhouette(const Matrix& features, const std::vector<bool>& in_group_a);

struct CenterDistances {
    std::vector<double> clean;     // distances of clean target-class samples to their center
    std::vector<double> poisoned;  // distances of poisoned samples to that center
};

// Distances to the mean feature of clean target-class samples.
CenterDistances center_distances(const Matrix& features, const std::vector<int>& labels,
                                 int target_class, const std::vector<bool>& clean_flags);

}  // namespace sampsd
