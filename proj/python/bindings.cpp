#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nudge/corpus.hpp"
#include "nudge/detector.hpp"
#include "nudge/dsp.hpp"
#include "nudge/errors.hpp"
#include "nudge/nnet.hpp"
#include "nudge/protocol.hpp"
#include "nudge/service.hpp"
#include "nudge/training.hpp"

namespace py = pybind11;
using namespace nudge;
using Json = nlohmann::json;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-D array of samples");
  return std::vector<double>(a.data(), a.data() + a.size());
}

dsp::AudioChunk to_chunk(const Array& a) {
  dsp::AudioChunk c;
  c.samples = to_vector(a);
  return c;
}

py::array_t<double> to_array(const dsp::FeatureMatrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

dsp::FeatureMatrix to_features(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D feature matrix");
  dsp::FeatureMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

service::ServiceConfig parse_config(const std::string& json_text) {
  return service::merge_config(Json::parse(json_text));
}

py::dict frame_to_dict(const protocol::Frame& f) {
  py::dict d;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, protocol::NudgeFrame>) {
          d["type"] = "nudge";
          d["kind"] = actuator::to_string(v.kind);
          d["intensity"] = v.intensity;
          d["seq"] = v.seq ? py::object(py::int_(*v.seq)) : py::none();
        } else if constexpr (std::is_same_v<T, protocol::SubscribeAccelFrame>) {
          d["type"] = "subscribe_accel";
        } else if constexpr (std::is_same_v<T, protocol::AckFrame>) {
          d["type"] = "ack";
          d["status"] = v.status;
          d["seq"] = v.seq ? py::object(py::int_(*v.seq)) : py::none();
        } else if constexpr (std::is_same_v<T, protocol::AccelFrame>) {
          d["type"] = "accel";
          d["x"] = v.x;
          d["y"] = v.y;
          d["z"] = v.z;
          d["timestamp_ms"] = v.timestamp_ms;
        } else {
          d["type"] = "error";
          d["reason"] = static_cast<int>(v.reason);
        }
      },
      f);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Snore detection and nudging core";

  auto base = py::register_exception<Error>(m, "NudgeError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<MalformedFrame>(m, "MalformedFrame", base.ptr());
  py::register_exception<UnsupportedFormat>(m, "UnsupportedFormat", base.ptr());
  py::register_exception<CorruptModel>(m, "CorruptModel", base.ptr());
  py::register_exception<StartupError>(m, "StartupError", base.ptr());

  m.attr("SAMPLE_RATE") = dsp::kSampleRate;
  m.attr("CHUNK_SAMPLES") = dsp::kChunkSamples;

  m.def("compute_mfcc", [](const Array& s) { return to_array(dsp::compute_mfcc(to_chunk(s))); },
        py::arg("samples"), "MFCC matrix (98 x 13) of one 16000-sample chunk.");
  m.def("compute_loudness", [](const Array& s) { return dsp::compute_loudness(to_vector(s)); },
        py::arg("samples"), "RMS loudness in dBFS, clamped to [-120, 0].");
  m.def("dct_ii", [](const Array& v) { return dsp::dct_ii(to_vector(v)); }, py::arg("values"));
  m.def("vote", [](const std::vector<bool>& flags, std::size_t k) {
        std::vector<detector::ChunkDecision> w;
        for (std::size_t i = 0; i < flags.size(); ++i) w.push_back(detector::make_decision(i, flags[i] ? 1.0 : 0.0, -120.0));
        return detector::vote(w, k);
      },
      py::arg("window"), py::arg("k") = 7);

  py::class_<nnet::SnoreModel>(m, "SnoreModel")
      .def_static("init", [](std::uint64_t seed) { return nnet::init_weights(seed); }, py::arg("seed"))
      .def_static("load", [](const std::string& path) { return nnet::load_model(path); }, py::arg("path"))
      .def("save", [](const nnet::SnoreModel& self, const std::string& path) { nnet::save_model(self, path); },
           py::arg("path"))
      .def_property_readonly("n_params", [](const nnet::SnoreModel& self) { return self.params().size(); })
      .def("forward", [](const nnet::SnoreModel& self, const Array& f) { return nnet::forward(self, to_features(f)).snore; },
           py::arg("features"), "p_snore for a 98 x 13 feature matrix.")
      .def("predict", [](const nnet::SnoreModel& self, const Array& s) {
             return nnet::forward(self, dsp::compute_mfcc(to_chunk(s))).snore;
           },
           py::arg("samples"), "p_snore for one 16000-sample chunk.");

  m.def("synthetic_corpus", [](std::size_t n_snore, std::size_t n_non_snore, std::uint64_t seed) {
        corpus::CorpusSpec spec;
        spec.n_snore = n_snore;
        spec.n_non_snore = n_non_snore;
        spec.seed = seed;
        const auto samples = corpus::generate_synthetic_corpus(spec);
        py::array_t<double> audio({samples.size(), dsp::kChunkSamples});
        py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(samples.size()));
        auto lab = labels.mutable_unchecked<1>();
        for (std::size_t i = 0; i < samples.size(); ++i) {
          std::copy(samples[i].chunk.samples.begin(), samples[i].chunk.samples.end(),
                    audio.mutable_data() + i * dsp::kChunkSamples);
          lab(static_cast<py::ssize_t>(i)) = samples[i].label;
        }
        return py::make_tuple(audio, labels);
      },
      py::arg("n_snore") = 500, py::arg("n_non_snore") = 500, py::arg("seed") = 0,
      "(audio[N, 16000], labels[N]) of the generated stand-in corpus.");

  m.def("train_synthetic", [](std::size_t n_per_class, std::size_t epochs, std::uint64_t seed) {
        corpus::CorpusSpec spec;
        spec.n_snore = spec.n_non_snore = n_per_class;
        spec.seed = seed;
        training::RunConfig rc;
        rc.epochs = epochs;
        rc.seed = seed;
        py::gil_scoped_release release;
        auto r = training::train_and_evaluate(corpus::generate_synthetic_corpus(spec), rc);
        py::gil_scoped_acquire acquire;
        py::dict out;
        out["train_accuracy"] = r.train_accuracy;
        out["test_accuracy"] = r.test_accuracy;
        out["n_train"] = r.n_train;
        out["n_test"] = r.n_test;
        out["model"] = std::move(r.model);
        return out;
      },
      py::arg("n_per_class") = 500, py::arg("epochs") = 20, py::arg("seed") = 0);

  m.def("read_wav", [](const std::string& path) {
    const auto s = corpus::load_wav(path);
    py::array_t<double> out(s.size());
    std::copy(s.begin(), s.end(), out.mutable_data());
    return out;
  });
  m.def("write_wav", [](const std::string& path, const Array& s) { corpus::write_wav(path, to_vector(s)); });

  m.def("encode_nudge", [](const std::string& kind, int intensity, std::optional<int> seq) {
        const auto k = actuator::parse_stimulus_kind(kind);
        if (!k) throw RangeError("unknown stimulus kind '" + kind + "'");
        std::optional<std::uint8_t> s;
        if (seq) s = static_cast<std::uint8_t>(*seq);
        const auto body = protocol::encode_frame(protocol::NudgeFrame{*k, intensity, s});
        return py::bytes(reinterpret_cast<const char*>(body.data()), body.size());
      },
      py::arg("kind"), py::arg("intensity"), py::arg("seq") = py::none(), "NUDGE frame body (no length prefix).");
  m.def("decode_frame", [](const py::bytes& b) {
        const std::string s = b;
        return frame_to_dict(protocol::decode_frame(std::vector<std::uint8_t>(s.begin(), s.end())));
      },
      py::arg("body"));

  m.def("validate_config", [](const std::string& json_text) {
        auto cfg = parse_config(json_text);
        service::validate(cfg);
        return service::to_json(cfg).dump();
      },
      py::arg("config_json"), "Validated config with defaults filled in, as JSON text.");

  m.def("replay", [](const Array& samples, const std::string& config_json) {
        const auto cfg = parse_config(config_json);
        const auto audio = to_vector(samples);
        service::ReplayResult r;
        {
          py::gil_scoped_release release;
          r = service::process_replay(std::span<const double>(audio), cfg);
        }
        Json events = Json::array();
        for (const auto& e : r.events) events.push_back(store::to_json(e));
        return Json{{"session_id", r.session_id},
                    {"counters", service::to_json(r.counters)},
                    {"events", events},
                    {"nudge_latencies_ms", r.nudge_latencies_ms},
                    {"discarded_tail_samples", r.discarded_tail_samples}}
            .dump();
      },
      py::arg("samples"), py::arg("config_json"), "Replay result as JSON text.");
}
