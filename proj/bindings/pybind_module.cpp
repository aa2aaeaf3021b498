// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Python bindings for the core operations: short-time transforms, the
// convolutional kernel bank, spatial features, metrics, room impulse
// responses, checkpoint-driven separation, and the command-line entry
// point. Arrays cross the boundary as NumPy float64 / complex128 copies.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <complex>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdsep/audio.hpp"
#include "tdsep/cli.hpp"
#include "tdsep/config_io.hpp"
#include "tdsep/errors.hpp"
#include "tdsep/kernelfeat.hpp"
#include "tdsep/model.hpp"
#include "tdsep/objectives.hpp"
#include "tdsep/params.hpp"
#include "tdsep/roomsim.hpp"
#include "tdsep/stft.hpp"

namespace py = pybind11;
using namespace tdsep;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using CArray =
    py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DArray& a) {
  if (a.ndim() != 1) throw ConfigError("expected a 1-D float array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

// Accepts [num_channels, num_samples] or a 1-D mono signal.
MultichannelAudio to_audio(const DArray& a, double sample_rate) {
  if (a.ndim() == 1) {
    MultichannelAudio audio(1, a.shape(0), sample_rate);
    std::memcpy(audio.channel(0), a.data(), sizeof(double) * a.shape(0));
    return audio;
  }
  if (a.ndim() != 2) {
    throw ConfigError("expected a 1-D signal or a [channels, samples] array");
  }
  MultichannelAudio audio(static_cast<int>(a.shape(0)), a.shape(1),
                          sample_rate);
  std::memcpy(audio.samples.data(), a.data(),
              sizeof(double) * audio.samples.size());
  return audio;
}

DArray from_vector(const std::vector<double>& v) {
  DArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::memcpy(out.mutable_data(), v.data(), sizeof(double) * v.size());
  return out;
}

DArray from_rows(const std::vector<std::vector<double>>& rows) {
  const py::ssize_t n = static_cast<py::ssize_t>(rows.size());
  const py::ssize_t len = n > 0 ? static_cast<py::ssize_t>(rows[0].size()) : 0;
  DArray out({n, len});
  for (py::ssize_t r = 0; r < n; ++r) {
    if (static_cast<py::ssize_t>(rows[r].size()) != len) {
      throw DataError("ragged rows cannot form a rectangular array");
    }
    std::memcpy(out.mutable_data(r, 0), rows[r].data(),
                sizeof(double) * len);
  }
  return out;
}

DArray from_matrix(const std::vector<double>& flat, py::ssize_t rows,
                   py::ssize_t cols) {
  DArray out({rows, cols});
  std::memcpy(out.mutable_data(), flat.data(),
              sizeof(double) * flat.size());
  return out;
}

CArray spec_to_complex(const ComplexSpectrogram& spec) {
  CArray out({static_cast<py::ssize_t>(spec.num_frames),
              static_cast<py::ssize_t>(spec.num_bins)});
  auto* dst = out.mutable_data();
  for (size_t i = 0; i < spec.re.size(); ++i) {
    dst[i] = {spec.re[i], spec.im[i]};
  }
  return out;
}

ComplexSpectrogram complex_to_spec(const CArray& a) {
  if (a.ndim() != 2) throw ConfigError("expected a [frames, bins] array");
  ComplexSpectrogram spec(static_cast<int>(a.shape(0)),
                          static_cast<int>(a.shape(1)));
  const auto* src = a.data();
  for (size_t i = 0; i < spec.re.size(); ++i) {
    spec.re[i] = src[i].real();
    spec.im[i] = src[i].imag();
  }
  return spec;
}

AnalysisSpec make_spec(int window_length, int hop, int fft_size,
                       const std::string& window) {
  AnalysisSpec spec;
  spec.window_length = window_length;
  spec.hop = hop;
  spec.fft_size = fft_size > 0 ? fft_size : window_length;
  spec.window = window_type_from_string(window);
  spec.validate();
  return spec;
}

Vec3 to_vec3(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

// Checkpoint-driven inference shared by the tasnet / frequency / cascaded
// model kinds. `stage1_path` is only consulted for cascaded refiners.
DArray separate_with_checkpoint(const std::string& checkpoint_path,
                                const DArray& mixture, double sample_rate,
                                const std::string& stage1_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const ModelConfig config =
      model_config_from_json(nlohmann::json::parse(ckpt.config_json));
  const MultichannelAudio audio = to_audio(mixture, sample_rate);
  std::vector<std::vector<double>> waves;
  switch (config.kind) {
    case ModelKind::kTasnet:
      waves = separate(config, ckpt.store, audio);
      break;
    case ModelKind::kFreqTcn:
      waves = freq_separate(config, ckpt.store, audio);
      break;
    case ModelKind::kCascadeRefine: {
      if (stage1_path.empty()) {
        throw ConfigError(
            "cascaded refiner checkpoints need stage1_checkpoint= pointing "
            "at the frequency-domain first stage");
      }
      Checkpoint stage1 = load_checkpoint(stage1_path);
      const ModelConfig stage1_config =
          model_config_from_json(nlohmann::json::parse(stage1.config_json));
      waves = cascaded_separate(stage1_config, stage1.store, config,
                                ckpt.store, audio);
      break;
    }
  }
  return from_rows(waves);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Multi-channel source separation core: short-time transforms, "
      "learnable kernel banks, spatial features, metrics, room simulation, "
      "and checkpoint inference.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  // ---------------------------------------------------------------- stft
  m.def(
      "stft",
      [](const DArray& signal, int window_length, int hop, int fft_size,
         const std::string& window) {
        const std::vector<double> x = to_vector(signal);
        return spec_to_complex(stft(
            x.data(), static_cast<int64_t>(x.size()),
            make_spec(window_length, hop, fft_size, window)));
      },
      py::arg("signal"), py::arg("window_length"), py::arg("hop"),
      py::arg("fft_size") = 0, py::arg("window") = "hann",
      "One-sided short-time transform of a mono signal; returns a "
      "[frames, bins] complex128 array. fft_size defaults to "
      "window_length.");

  m.def(
      "istft",
      [](const CArray& spec, int window_length, int hop, int fft_size,
         const std::string& window) {
        return from_vector(
            istft(complex_to_spec(spec),
                  make_spec(window_length, hop, fft_size, window)));
      },
      py::arg("spec"), py::arg("window_length"), py::arg("hop"),
      py::arg("fft_size") = 0, py::arg("window") = "hann",
      "Weighted overlap-add inverse of stft(); interior samples "
      "reconstruct the input exactly for overlap-consistent windows.");

  // --------------------------------------------------------- kernel bank
  py::class_<KernelBank>(m, "KernelBank",
                         "Bank of analysis kernels equivalent to a "
                         "short-time transform at initialization.")
      .def_readonly("num_bins", &KernelBank::num_bins)
      .def_readonly("kernel_length", &KernelBank::kernel_length)
      .def_readonly("stride", &KernelBank::stride)
      .def_property_readonly(
          "mode", [](const KernelBank& b) { return to_string(b.mode); })
      .def_property_readonly(
          "k_re",
          [](const KernelBank& b) {
            return from_matrix(b.k_re, b.num_bins, b.kernel_length);
          })
      .def_property_readonly(
          "k_im",
          [](const KernelBank& b) {
            return from_matrix(b.k_im, b.num_bins, b.kernel_length);
          })
      .def_property_readonly(
          "window", [](const KernelBank& b) { return from_vector(b.window); })
      .def(
          "set_window",
          [](KernelBank& b, const DArray& w) {
            if (b.mode != KernelMode::kWindowConstrained) {
              throw ConfigError(
                  "set_window requires a window_constrained bank");
            }
            const std::vector<double> taps = to_vector(w);
            if (static_cast<int>(taps.size()) != b.kernel_length) {
              throw ConfigError("window length must match kernel_length");
            }
            b.window = taps;
            b.rebuild_from_window();
          },
          py::arg("window"),
          "Replace the learnable window taps and rebuild the kernels.");

  m.def(
      "make_stft_kernels",
      [](int kernel_length, int stride, const std::string& window,
         const std::string& mode) {
        return make_stft_kernels(kernel_length, stride,
                                 window_type_from_string(window),
                                 kernel_mode_from_string(mode));
      },
      py::arg("kernel_length"), py::arg("stride"),
      py::arg("window") = "hann", py::arg("mode") = "fixed",
      "Windowed cosine/sine kernel bank; modes: fixed, unconstrained, "
      "window_constrained.");

  m.def(
      "conv_analysis",
      [](const DArray& signal, const KernelBank& bank) {
        const std::vector<double> x = to_vector(signal);
        const auto [re, im] =
            conv_analysis(x.data(), static_cast<int64_t>(x.size()), bank);
        return py::make_tuple(
            from_matrix(re.values, re.num_frames, re.dim),
            from_matrix(im.values, im.num_frames, im.dim));
      },
      py::arg("signal"), py::arg("bank"),
      "Frame-wise correlation with the bank; returns ([frames, bins] re, "
      "[frames, bins] im). With STFT-initialized kernels the magnitudes "
      "match stft().");

  // ----------------------------------------------------- spatial features
  m.def(
      "ipd_from_spectra",
      [](const DArray& audio, double sample_rate, const std::string& pairs,
         int window_length, int hop, int fft_size,
         const std::string& window) {
        const MultichannelAudio wave = to_audio(audio, sample_rate);
        const AnalysisSpec spec =
            make_spec(window_length, hop, fft_size, window);
        std::vector<ComplexSpectrogram> specs;
        for (int c = 0; c < wave.num_channels; ++c) {
          specs.push_back(stft(wave, c, spec));
        }
        const FeatureMap f =
            ipd_from_spectra(specs, parse_mic_pairs(pairs), spec.hop);
        return from_matrix(f.values, f.num_frames, f.dim);
      },
      py::arg("audio"), py::arg("sample_rate"), py::arg("pairs"),
      py::arg("window_length"), py::arg("hop"), py::arg("fft_size") = 0,
      py::arg("window") = "hann",
      "Inter-channel phase differences on the short-time grid. pairs is "
      "1-based, e.g. \"1-4,2-5,3-6\"; returns [frames, pairs*bins].");

  m.def(
      "ipd_from_kernels",
      [](const DArray& audio, double sample_rate, const std::string& pairs,
         const KernelBank& bank) {
        const MultichannelAudio wave = to_audio(audio, sample_rate);
        const FeatureMap f =
            ipd_from_kernels(wave, bank, parse_mic_pairs(pairs));
        return from_matrix(f.values, f.num_frames, f.dim);
      },
      py::arg("audio"), py::arg("sample_rate"), py::arg("pairs"),
      py::arg("bank"),
      "Same layout as ipd_from_spectra, computed from the kernel bank.");

  // ----------------------------------------------------------- objectives
  m.def(
      "si_snr",
      [](const DArray& est, const DArray& ref) {
        return si_snr(to_vector(est), to_vector(ref));
      },
      py::arg("est"), py::arg("ref"),
      "Scale-invariant SNR in dB, clamped to [-60, 60].");

  m.def(
      "si_snr_improvement",
      [](const DArray& est, const DArray& ref, const DArray& mixture) {
        const std::vector<double> e = to_vector(est);
        const std::vector<double> r = to_vector(ref);
        const std::vector<double> x = to_vector(mixture);
        if (e.size() != r.size() || e.size() != x.size()) {
          throw DataError("est, ref, and mixture lengths must match");
        }
        return si_snr_improvement(e.data(), r.data(), x.data(),
                                  static_cast<int64_t>(e.size()));
      },
      py::arg("est"), py::arg("ref"), py::arg("mixture"),
      "si_snr(est, ref) - si_snr(mixture, ref): gain over the unprocessed "
      "mixture channel.");

  m.def(
      "pit_si_snr",
      [](const DArray& ests, const DArray& refs) {
        if (ests.ndim() != 2 || refs.ndim() != 2) {
          throw ConfigError("expected [speakers, samples] arrays");
        }
        std::vector<std::vector<double>> e, r;
        for (py::ssize_t c = 0; c < ests.shape(0); ++c) {
          e.emplace_back(ests.data(c, 0), ests.data(c, 0) + ests.shape(1));
        }
        for (py::ssize_t c = 0; c < refs.shape(0); ++c) {
          r.emplace_back(refs.data(c, 0), refs.data(c, 0) + refs.shape(1));
        }
        const PermutationResult res = pit_si_snr(e, r);
        return py::make_tuple(res.best_permutation, res.per_pair_scores,
                              res.aggregate);
      },
      py::arg("ests"), py::arg("refs"),
      "Permutation-invariant SI-SNR: returns (permutation, per-pair dB, "
      "mean dB). permutation[i] is the estimate row assigned to reference "
      "row i.");

  m.def(
      "oracle_separate",
      [](const DArray& mixture, const std::vector<DArray>& references,
         double sample_rate, const std::string& kind) {
        const MultichannelAudio mix = to_audio(mixture, sample_rate);
        std::vector<MultichannelAudio> refs;
        for (const DArray& r : references) {
          refs.push_back(to_audio(r, sample_rate));
        }
        const OracleSeparation sep = oracle_separate(
            mix, refs, oracle_kind_from_string(kind),
            default_oracle_analysis());
        py::dict out;
        out["estimates"] = from_rows(sep.estimates);
        out["si_snr"] = sep.si_snr_per_source;
        out["si_snri"] = sep.si_snri_per_source;
        out["permutation"] = sep.permutation;
        return out;
      },
      py::arg("mixture"), py::arg("references"), py::arg("sample_rate"),
      py::arg("kind") = "irm",
      "Ideal-mask upper bound: masks the channel-1 mixture spectrum and "
      "scores against channel-1 references. kind: ibm, irm, or ipsm.");

  // ------------------------------------------------------ room simulation
  m.def(
      "image_method_rir",
      [](const std::array<double, 3>& room_dimensions, double t60,
         const std::array<double, 3>& source,
         const std::array<double, 3>& microphone, double sample_rate,
         int max_order, const std::string& wall_formula,
         double coverage_factor) {
        RoomSpec room;
        room.dimensions = to_vec3(room_dimensions);
        room.t60 = t60;
        room.source_positions = {to_vec3(source)};
        RirOptions options;
        options.max_order = max_order;
        options.coverage_factor = coverage_factor;
        options.formula = wall_formula == "sabine" ? WallFormula::kSabine
                                                   : WallFormula::kEyring;
        const ImpulseResponse rir = image_method_rir(
            room, 0, to_vec3(microphone), sample_rate, options);
        return from_vector(std::vector<double>(
            rir.mic(0), rir.mic(0) + rir.length));
      },
      py::arg("room_dimensions"), py::arg("t60"), py::arg("source"),
      py::arg("microphone"), py::arg("sample_rate"),
      py::arg("max_order") = -1, py::arg("wall_formula") = "eyring",
      py::arg("coverage_factor") = 1.25,
      "Shoebox-room impulse response via the image method with "
      "fractional-sample arrivals. max_order < 0 derives the reflection "
      "order from the decay time.");

  // ------------------------------------------------------------ inference
  m.def(
      "init_checkpoint",
      [](const std::string& path, const std::string& model_config_json,
         uint64_t seed) {
        const nlohmann::json j = nlohmann::json::parse(model_config_json);
        const ModelConfig config = model_config_from_json(j);
        Checkpoint ckpt;
        ckpt.config_json = model_config_to_json(config).dump();
        ckpt.store = build_params(config, seed);
        save_checkpoint(path, ckpt);
        return ckpt.store.num_scalars();
      },
      py::arg("path"), py::arg("model_config_json"), py::arg("seed") = 1,
      "Write a freshly initialized checkpoint for the given model "
      "configuration (JSON text); returns the parameter count.");

  m.def("separate", &separate_with_checkpoint, py::arg("checkpoint"),
        py::arg("mixture"), py::arg("sample_rate"),
        py::arg("stage1_checkpoint") = std::string(),
        "Separate a [channels, samples] mixture into [speakers, samples'] "
        "waveforms using a trained checkpoint. Cascaded refiner "
        "checkpoints also need stage1_checkpoint.");

  m.def(
      "checkpoint_config",
      [](const std::string& path) {
        return load_checkpoint(path).config_json;
      },
      py::arg("path"),
      "The model configuration echoed inside a checkpoint, as JSON text.");

  // ------------------------------------------------------------------ cli
  m.def("run_cli", &run_cli, py::arg("args"),
        py::call_guard<py::gil_scoped_release>(),
        "Run the command-line interface in-process (e.g. [\"simulate\", "
        "\"--config\", path, \"--out\", dir]); returns the exit code.");
}
