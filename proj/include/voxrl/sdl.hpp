#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxrl/network.hpp"
#include "voxrl/volume.hpp"

namespace voxrl::sdl {

struct SdlTrainConfig {
    int epochs = 100;
    int batch = 24;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

struct EpochRow {
    int epoch = 0;
    double loss = 0.0;            // mean BCE over the epoch's samples
    double train_accuracy = 0.0;  // threshold-0.5 decisions during the pass
};

struct TrainSdlResult {
    SdlNetwork net;
    std::vector<EpochRow> history;
};

// Shuffled passes over the train split in batches (final partial batch
// included), BCE loss, Adam. Touches only the train split.
TrainSdlResult train_sdl(const Dataset& data, const SdlTrainConfig& config);

struct SdlEval {
    std::vector<int> predictions;
    double accuracy = 0.0;
};

// Pure threshold-0.5 evaluation over the given items.
SdlEval predict_sdl(SdlNetwork& net, const std::vector<DatasetItem>& items);

// "epoch,loss,train_accuracy"
void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows);

}  // namespace voxrl::sdl
