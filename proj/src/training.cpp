#include "nudge/training.hpp"

#include <chrono>

namespace nudge::training {

std::vector<nnet::LabelledFeatures> featurize(std::span<const corpus::LabelledSample> samples) {
  std::vector<nnet::LabelledFeatures> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({dsp::compute_mfcc(s.chunk), s.label});
  return out;
}

RunResult train_and_evaluate(std::vector<corpus::LabelledSample> samples, const RunConfig& cfg,
                             const std::function<void(const nnet::EpochStats&)>& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  auto split = corpus::split_dataset(std::move(samples), cfg.split_ratio, cfg.seed);
  const auto train_set = featurize(split.train);
  const auto test_set = featurize(split.test);

  RunResult r;
  r.model = nnet::init_weights(cfg.seed, cfg.arch);
  r.model.input_norm() = nnet::fit_input_norm(train_set, cfg.arch.in_cols);
  nnet::TrainConfig tc;
  tc.max_epochs = cfg.epochs;
  tc.seed = cfg.seed;
  r.history = nnet::train(r.model, train_set, tc, on_epoch);
  r.n_train = train_set.size();
  r.n_test = test_set.size();
  r.train_accuracy = nnet::evaluate(r.model, train_set).accuracy;
  if (!test_set.empty()) r.test_accuracy = nnet::evaluate(r.model, test_set).accuracy;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<corpus::LabelledSample> test_partition(std::vector<corpus::LabelledSample> samples,
                                                   std::uint64_t seed, double ratio) {
  return corpus::split_dataset(std::move(samples), ratio, seed).test;
}

}  // namespace nudge::training
