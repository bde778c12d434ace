#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcn/model.hpp"
#include "pcn/patch.hpp"
#include "pcn/point_cloud.hpp"

namespace pcn {

struct TrainConfig {
    std::vector<double> radii{0.01, 0.03, 0.05};
    std::size_t batch_size_single = 64;
    std::size_t batch_size_multi = 16;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    std::size_t epochs = 20;
    std::size_t patches_per_shape = 500;
    std::size_t k = 500;
    std::uint64_t seed = 0;
    LabelConfig labels;
    bool freeze_subnets = false;  // multi-scale: train only the scale net
};

// Patches are extracted and labeled once up front; epochs reshuffle indices
// over the whole pool, mixing patches of different shapes in each batch.
struct PatchDataset {
    struct Sample {
        std::size_t shape_id = 0;
        std::size_t center = 0;
        std::vector<Patch> per_radius;
    };
    std::vector<double> radii;
    std::vector<std::string> shape_names;
    std::vector<Sample> samples;
    std::size_t k = 0;

    std::size_t size() const { return samples.size(); }
};

PatchDataset build_dataset(const std::vector<PointCloud>& shapes, const TrainConfig& config);

struct EpochStats {
    double l_normal = 0.0;
    double l_main = 0.0;
    double l_total = 0.0;
};

// the sample order both training loops walk in the given epoch
std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed,
                                     std::size_t epoch);

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&)>;

std::vector<EpochStats> train_single(const PatchDataset& dataset, SingleScaleModel& model,
                                     const TrainConfig& config, std::size_t radius_index = 0,
                                     const EpochCallback& on_epoch = nullptr);

std::vector<EpochStats> train_multi(const PatchDataset& dataset, MultiScaleModel& model,
                                    const TrainConfig& config,
                                    const EpochCallback& on_epoch = nullptr);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace pcn
