#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "nudge/corpus.hpp"
#include "nudge/http.hpp"
#include "nudge/service.hpp"
#include "nudge/simulator.hpp"
#include "nudge/training.hpp"

using namespace nudge;
using Json = nlohmann::json;

namespace {

sigset_t stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Runs `on_signal` from a dedicated thread on SIGINT/SIGTERM. main() blocks
// both signals before any thread starts, so only this thread receives them.
// release() wakes the waiter without running the callback.
class SignalWaiter {
 public:
  explicit SignalWaiter(std::function<void()> on_signal) : set_(stop_signals()) {
    thread_ = std::thread([this, fn = std::move(on_signal)] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!released_) fn();
    });
  }
  ~SignalWaiter() { release(); }

  void release() {
    if (!thread_.joinable()) return;
    released_ = true;
    pthread_kill(thread_.native_handle(), SIGTERM);
    thread_.join();
  }

 private:
  sigset_t set_{};
  std::atomic<bool> released_{false};
  std::thread thread_;
};

std::vector<corpus::LabelledSample> load_samples(const std::string& data, bool synthetic,
                                                 std::uint64_t seed) {
  if (synthetic) {
    corpus::CorpusSpec spec;
    spec.seed = seed;
    return corpus::generate_synthetic_corpus(spec);
  }
  if (data.empty()) throw Error("either --data <dir> or --synthetic is required");
  return corpus::load_directory(data);
}

int cmd_run(const std::string& config_path, bool dry_run) {
  auto cfg = service::load_config(config_path);
  if (dry_run) cfg.device = "none";
  service::Service svc(cfg);
  service::HttpServer http(svc, cfg.listen_addr);
  const int port = http.start();
  std::cerr << "dashboard API on port " << port << "\n";

  const std::string id = svc.start_session();
  std::cerr << "session " << id << " started" << (cfg.dry_run() ? " (dry run)" : "") << "\n";
  SignalWaiter signals([&] {
    try {
      svc.stop_session(id);
    } catch (const std::exception& e) {
      std::cerr << "stop failed: " << e.what() << "\n";
    }
  });
  svc.wait_session();
  const Json summary = svc.stop_session(id);
  signals.release();
  http.stop();
  std::cout << Json{{"session_id", id}, {"summary", summary}}.dump(2) << "\n";
  return 0;
}

int cmd_replay(const std::string& wav, const std::string& config_path, bool dry_run) {
  auto cfg = service::load_config(config_path);
  if (dry_run) cfg.device = "none";
  const auto r = service::process_replay(std::filesystem::path(wav), cfg);
  double worst = 0.0;
  for (double l : r.nudge_latencies_ms) worst = std::max(worst, l);
  std::cout << Json{{"session_id", r.session_id},
                    {"counters", service::to_json(r.counters)},
                    {"events", r.events.size()},
                    {"log_dir", cfg.log_dir},
                    {"discarded_tail_samples", r.discarded_tail_samples},
                    {"max_nudge_latency_ms", worst}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_train(const std::string& data, bool synthetic, std::size_t epochs, std::uint64_t seed,
              const std::string& out) {
  auto samples = load_samples(data, synthetic, seed);
  std::cerr << "loaded " << samples.size() << " samples\n";
  training::RunConfig rc;
  rc.epochs = epochs;
  rc.seed = seed;
  const auto r = training::train_and_evaluate(std::move(samples), rc, [](const nnet::EpochStats& e) {
    std::fprintf(stderr, "epoch %zu  loss %.6f\n", e.epoch + 1, e.mean_loss);
  });
  nnet::save_model(r.model, out);
  std::cout << Json{{"model", out},
                    {"train_samples", r.n_train},
                    {"test_samples", r.n_test},
                    {"train_accuracy", r.train_accuracy},
                    {"test_accuracy", r.test_accuracy},
                    {"seconds", r.seconds}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_eval(const std::string& data, bool synthetic, const std::string& model_path,
             const std::string& split, std::uint64_t seed) {
  auto samples = load_samples(data, synthetic, seed);
  if (split == "test") samples = training::test_partition(std::move(samples), seed);
  const auto model = nnet::load_model(model_path);
  const auto feats = training::featurize(samples);
  const auto report = nnet::evaluate(model, feats);
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const int y = feats[i].label, p = report.predictions[i];
    (y == 1 ? (p == 1 ? tp : fn) : (p == 1 ? fp : tn))++;
  }
  std::cout << Json{{"samples", feats.size()},
                    {"accuracy", report.accuracy},
                    {"confusion", {{"tp", tp}, {"tn", tn}, {"fp", fp}, {"fn", fn}}}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_simulate(const std::string& listen, const std::string& scenario_path) {
  sim::Scenario scenario =
      scenario_path.empty() ? sim::Scenario::standard() : sim::Scenario::load(scenario_path);
  sim::DeviceServer server(std::move(scenario), listen);
  SignalWaiter signals([&] { server.stop(); });
  server.start();
  std::cerr << "device simulator '" << server.simulator().scenario().name << "' on "
            << server.address() << "\n";
  server.wait();
  signals.release();
  std::cout << Json{{"connections", server.connections()},
                    {"nudges", server.simulator().stats().nudges_delivered}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // A shell starts background jobs with SIGINT ignored, and an ignored signal
  // never becomes pending for sigwait.
  signal(SIGINT, SIG_DFL);
  signal(SIGTERM, SIG_DFL);
  const sigset_t blocked = stop_signals();
  pthread_sigmask(SIG_BLOCK, &blocked, nullptr);

  CLI::App app{"Snore detection and nudging service"};
  app.require_subcommand(1);

  std::string config, wav, data, model, out, listen, scenario, split = "all";
  bool dry_run = false, synthetic = false;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Run a live session with the dashboard API");
  run->add_option("--config", config, "Service config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--dry-run", dry_run, "Detect and log, but never contact the device");

  auto* replay = app.add_subcommand("replay", "Run a WAV recording through the pipeline");
  replay->add_option("--wav", wav, "16-bit mono 16 kHz WAV")->required()->check(CLI::ExistingFile);
  replay->add_option("--config", config, "Service config (JSON)")->required()->check(CLI::ExistingFile);
  replay->add_flag("--dry-run", dry_run, "Never contact the device");

  auto* train = app.add_subcommand("train", "Train a model");
  auto* train_src = train->add_option_group("source")->require_option(1);
  train_src->add_option("--data", data, "Directory with snore/ and non_snore/ WAVs");
  train_src->add_flag("--synthetic", synthetic, "Use the generated stand-in corpus");
  train->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
  train->add_option("--seed", seed, "Seed for split, init and shuffling")->capture_default_str();
  train->add_option("--out", out, "Model file to write")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a model");
  auto* eval_src = eval->add_option_group("source")->require_option(1);
  eval_src->add_option("--data", data, "Directory with snore/ and non_snore/ WAVs");
  eval_src->add_flag("--synthetic", synthetic, "Use the generated stand-in corpus");
  eval->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "all, or test for the held-out part of a training split")
      ->check(CLI::IsMember({"all", "test"}))
      ->capture_default_str();
  eval->add_option("--seed", seed, "Seed used for the training split")->capture_default_str();

  auto* simdev = app.add_subcommand("simulate-device", "Serve a simulated nudging device over TCP");
  simdev->add_option("--listen", listen, "host:port")->required();
  simdev->add_option("--scenario", scenario, "Scenario file (JSON)")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, dry_run);
    if (*replay) return cmd_replay(wav, config, dry_run);
    if (*train) return cmd_train(data, synthetic, epochs, seed, out);
    if (*eval) return cmd_eval(data, synthetic, model, split, seed);
    if (*simdev) return cmd_simulate(listen, scenario);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& f : e.errors()) std::cerr << "  " << f.field << ": " << f.message << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
