#pragma once

#include "gbrs/dataset.hpp"
#include "gbrs/trainer.hpp"

#include <cstdint>

namespace gbrs::experiment {

// Fixed seeds and budgets shared by the CLI, the test fixtures and the
// acceptance run, so that every entry point sees the same checkpoints.
inline constexpr std::size_t kImageSize = 64;

inline constexpr std::uint64_t kTrainSeed = 1;
inline constexpr std::size_t kTrainSamples = 200;
inline constexpr std::uint64_t kHoldoutSeed = 2;
inline constexpr std::size_t kHoldoutSamples = 50;

inline constexpr std::uint64_t kNetworkSeed = 7;
inline constexpr std::uint64_t kTrainerSeed = 3;
inline constexpr std::size_t kEpochs = 30;
inline constexpr double kTrainLr = 3e-3;
inline constexpr std::size_t kBatchSize = 4;

// Refinement is evaluated on shifted scenes: same geometry, different look.
inline constexpr std::uint64_t kEvalSeed = 99;
inline constexpr std::size_t kEvalSamples = 100;
inline constexpr std::uint64_t kSweepSeed = 5;
inline constexpr std::size_t kSweepSamples = 8;
inline constexpr std::size_t kSweepClicks = 10;

inline TrainConfig train_config() { return TrainConfig{kEpochs, kTrainLr, kBatchSize, kTrainerSeed}; }

inline std::vector<Sample> train_set() { return generate_dataset(kTrainSamples, kImageSize, kTrainSeed); }
inline std::vector<Sample> holdout_set() { return generate_dataset(kHoldoutSamples, kImageSize, kHoldoutSeed); }
inline std::vector<Sample> eval_set(std::size_t n = kEvalSamples) {
    return generate_dataset(n, kImageSize, kEvalSeed, DatasetStyle::shifted);
}
inline std::vector<Sample> sweep_set() {
    return generate_dataset(kSweepSamples, kImageSize, kSweepSeed, DatasetStyle::shifted);
}

} // namespace gbrs::experiment
