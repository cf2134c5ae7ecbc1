#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/tensor.hpp"

namespace spikedisc::audio {

static_assert(std::endian::native == std::endian::little, "waveform and tensor files are little-endian");

struct StftConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop = 256;

  void validate() const {
    if (sample_rate <= 0 || n_fft <= 0 || hop <= 0) throw ConfigError("stft config values must be positive");
  }
};

inline int stft_frames(std::size_t wave_len, const StftConfig& cfg) {
  if (wave_len < static_cast<std::size_t>(cfg.n_fft)) return 0;
  return 1 + static_cast<int>((wave_len - cfg.n_fft) / cfg.hop);
}

// Hann-windowed power spectrogram, one-sided: [frames x (n_fft/2 + 1)].
// Frames start at multiples of hop; the tail that does not fill a window is
// dropped (padding policy belongs to the dataset pipeline).
inline Tensor stft_power(const std::vector<double>& wave, const StftConfig& cfg) {
  cfg.validate();
  int frames = stft_frames(wave.size(), cfg);
  if (frames <= 0)
    throw DimensionError("waveform of " + std::to_string(wave.size()) + " samples is shorter than n_fft " +
                         std::to_string(cfg.n_fft));
  int N = cfg.n_fft;
  int bins = N / 2 + 1;

  std::vector<double> window(N);
  for (int n = 0; n < N; ++n) window[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / N);

  // Precomputed real DFT basis keeps the per-frame work two matrix products.
  std::vector<double> cos_basis(static_cast<std::size_t>(N) * bins);
  std::vector<double> sin_basis(static_cast<std::size_t>(N) * bins);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < bins; ++k) {
      double ang = 2.0 * M_PI * static_cast<double>(n) * k / N;
      cos_basis[static_cast<std::size_t>(n) * bins + k] = std::cos(ang);
      sin_basis[static_cast<std::size_t>(n) * bins + k] = std::sin(ang);
    }

  std::vector<double> framed(static_cast<std::size_t>(frames) * N);
  for (int f = 0; f < frames; ++f) {
    const double* src = wave.data() + static_cast<std::size_t>(f) * cfg.hop;
    double* dst = framed.data() + static_cast<std::size_t>(f) * N;
    for (int n = 0; n < N; ++n) dst[n] = src[n] * window[n];
  }

  std::vector<double> re(static_cast<std::size_t>(frames) * bins, 0.0);
  std::vector<double> im(static_cast<std::size_t>(frames) * bins, 0.0);
  ops::detail::gemm_nn(frames, N, bins, framed.data(), cos_basis.data(), re.data());
  ops::detail::gemm_nn(frames, N, bins, framed.data(), sin_basis.data(), im.data());

  Tensor out(Shape{frames, bins});
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = re[i] * re[i] + im[i] * im[i];
  return out;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelConfig {
  int n_mels = 64;
  double f_min = 0.0;
  double f_max = 8000.0;

  void validate(int sample_rate) const {
    if (n_mels < 1) throw ConfigError("mel filterbank needs n_mels >= 1");
    if (f_min < 0.0 || f_max <= f_min) throw ConfigError("mel filterbank needs 0 <= f_min < f_max");
    if (f_max > sample_rate / 2.0 + 1e-9)
      throw ConfigError("mel f_max " + std::to_string(f_max) + " exceeds Nyquist " + std::to_string(sample_rate / 2.0));
  }
};

// Unit-peak triangular filters with centers equally spaced on the mel scale:
// [n_mels x (n_fft/2 + 1)].
inline Tensor mel_filterbank(const MelConfig& mel, const StftConfig& stft) {
  stft.validate();
  mel.validate(stft.sample_rate);
  int bins = stft.n_fft / 2 + 1;
  std::vector<double> pts(mel.n_mels + 2);
  double m_lo = hz_to_mel(mel.f_min), m_hi = hz_to_mel(mel.f_max);
  for (int i = 0; i < mel.n_mels + 2; ++i) pts[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (mel.n_mels + 1));

  Tensor fb(Shape{mel.n_mels, bins});
  double* p = fb.data();
  for (int m = 0; m < mel.n_mels; ++m) {
    double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
    double row_sum = 0.0;
    for (int k = 0; k < bins; ++k) {
      double f = static_cast<double>(k) * stft.sample_rate / stft.n_fft;
      double up = (mid > lo) ? (f - lo) / (mid - lo) : 0.0;
      double down = (hi > mid) ? (hi - f) / (hi - mid) : 0.0;
      double w = std::max(0.0, std::min(up, down));
      p[static_cast<std::size_t>(m) * bins + k] = w;
      row_sum += w;
    }
    if (row_sum <= 0.0)
      throw ConfigError("mel filter " + std::to_string(m) + " covers no FFT bin; lower n_mels or raise n_fft");
  }
  return fb;
}

// 10*log10(max(p, 1e-10)/ref), then clamped to top_db below the maximum.
// Pass top_db <= 0 to skip the clamp.
inline Tensor power_to_db(const Tensor& power, double ref = 1.0, double top_db = 80.0) {
  if (!(ref > 0.0)) throw ContractError("power_to_db needs ref > 0");
  Tensor out(power.shape());
  const double* p = power.data();
  double* q = out.data();
  double peak = -1e300;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    q[i] = 10.0 * std::log10(std::max(p[i], 1e-10) / ref);
    peak = std::max(peak, q[i]);
  }
  if (top_db > 0.0)
    for (std::size_t i = 0; i < out.numel(); ++i) q[i] = std::max(q[i], peak - top_db);
  return out;
}

// wave -> padded/trimmed -> Hann power STFT -> mel -> dB re the clip peak.
// target_frames > 0 pins the frame count by zero-padding or truncating the
// waveform. Output is [1 x n_mels x frames], ready for the spectrogram net.
inline Tensor logmel(const std::vector<double>& wave_in, const StftConfig& stft, const MelConfig& mel,
                     int target_frames = 0) {
  std::vector<double> wave = wave_in;
  if (target_frames > 0) {
    std::size_t want = static_cast<std::size_t>(stft.n_fft) + static_cast<std::size_t>(target_frames - 1) * stft.hop;
    wave.resize(want, 0.0);
  }
  Tensor power = stft_power(wave, stft);  // [frames x bins]
  Tensor fb = mel_filterbank(mel, stft);  // [mels x bins]
  int frames = power.dim(0), bins = power.dim(1), mels = fb.dim(0);
  Tensor melpow(Shape{mels, frames});
  // melpow[m, f] = sum_k fb[m, k] * power[f, k]
  ops::detail::gemm_nt(mels, bins, frames, fb.data(), power.data(), melpow.data());
  double peak = 0.0;
  for (std::size_t i = 0; i < melpow.numel(); ++i) peak = std::max(peak, melpow.data()[i]);
  Tensor db = power_to_db(melpow, std::max(peak, 1e-10), 80.0);
  return ops::reshape(db, {1, mels, frames});
}

// Raw little-endian float32 waveform with a JSON sidecar naming the sample
// rate and length.
inline void write_wave_f32(const std::string& path, const std::vector<float>& wave, int sample_rate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write waveform file " + path);
  f.write(reinterpret_cast<const char*>(wave.data()), static_cast<std::streamsize>(wave.size() * sizeof(float)));
  nlohmann::json side{{"sample_rate", sample_rate}, {"length", wave.size()}};
  std::ofstream s(path + ".json");
  if (!s) throw ConfigError("cannot write waveform sidecar for " + path);
  s << side.dump(2) << "\n";
}

struct WaveFile {
  std::vector<double> samples;
  int sample_rate = 0;
};

inline WaveFile read_wave_f32(const std::string& path) {
  std::ifstream s(path + ".json");
  if (!s) throw ConfigError("missing waveform sidecar " + path + ".json");
  nlohmann::json side;
  try {
    s >> side;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad waveform sidecar " + path + ".json: " + e.what());
  }
  WaveFile w;
  w.sample_rate = side.value("sample_rate", 0);
  std::size_t length = side.value("length", std::size_t{0});
  if (w.sample_rate <= 0) throw ConfigError("waveform sidecar " + path + ".json lacks a valid sample_rate");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read waveform file " + path);
  f.seekg(0, std::ios::end);
  std::size_t bytes = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  if (bytes != length * sizeof(float))
    throw ConfigError("waveform " + path + " has " + std::to_string(bytes / sizeof(float)) + " samples, sidecar says " +
                      std::to_string(length));
  std::vector<float> raw(length);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  w.samples.assign(raw.begin(), raw.end());
  return w;
}

}  // namespace spikedisc::audio
