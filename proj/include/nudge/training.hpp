#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nudge/corpus.hpp"
#include "nudge/nnet.hpp"

// End-to-end training workflow shared by the CLI and the bindings.
namespace nudge::training {

std::vector<nnet::LabelledFeatures> featurize(std::span<const corpus::LabelledSample> samples);

struct RunConfig {
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  nnet::ArchSpec arch;
};

struct RunResult {
  nnet::SnoreModel model;
  std::vector<nnet::EpochStats> history;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double seconds = 0.0;
};

// Stratified split, input normalisation fitted on the training part only,
// seeded initialisation and Adam training, then accuracy on both parts.
RunResult train_and_evaluate(std::vector<corpus::LabelledSample> samples, const RunConfig& cfg,
                             const std::function<void(const nnet::EpochStats&)>& on_epoch = {});

// Held-out partition of `samples` under the same split a training run with
// this seed and ratio would produce.
std::vector<corpus::LabelledSample> test_partition(std::vector<corpus::LabelledSample> samples,
                                                   std::uint64_t seed, double ratio = 0.8);

}  // namespace nudge::training
