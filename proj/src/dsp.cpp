#include "edgespeech/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>

#include "edgespeech/error.hpp"

namespace edgespeech::dsp {

namespace {

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {}
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread-safe; execution with the new-array interface
// is, provided the arrays share the planner's alignment (fftw_malloc).
const PlanPair& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  FftwBuffer real(sizeof(double) * n);
  FftwBuffer cplx(sizeof(fftw_complex) * (n / 2 + 1));
  const int len = static_cast<int>(n);
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_1d(len, static_cast<double*>(real.ptr),
                                   static_cast<fftw_complex*>(cplx.ptr), FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(len, static_cast<fftw_complex*>(cplx.ptr),
                                   static_cast<double*>(real.ptr), FFTW_ESTIMATE);
  return cache.emplace(n, p).first->second;
}

bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

template <typename T>
std::vector<double> reflect_pad(std::span<const T> x, std::size_t pad) {
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size() + 2 * pad);
  for (std::size_t p = 0; p < out.size(); ++p) {
    std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p) - static_cast<std::ptrdiff_t>(pad);
    if (q < 0) q = -q;
    if (q >= len) q = 2 * (len - 1) - q;
    out[p] = static_cast<double>(x[static_cast<std::size_t>(q)]);
  }
  return out;
}

template <typename T>
Spectrogram stft_impl(std::span<const T> samples, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.frame_len;
  if (samples.size() < n) {
    fail(ErrorCode::TooShort,
         "stft needs at least " + std::to_string(n) + " samples, got " + std::to_string(samples.size()));
  }
  const std::size_t pad = n / 2;
  const auto padded = reflect_pad(samples, pad);
  const auto window = make_window(cfg.window, n);

  Spectrogram spec;
  spec.config = cfg;
  spec.signal_length = samples.size();
  spec.n_bins = n / 2 + 1;
  spec.n_frames = 1 + (padded.size() - n) / cfg.hop;
  spec.bins.resize(spec.n_frames * spec.n_bins);

  const auto frames = static_cast<std::ptrdiff_t>(spec.n_frames);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < frames; ++t) {
    std::vector<double> frame(n);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (std::size_t j = 0; j < n; ++j) frame[j] = padded[start + j] * window[j];
    const auto bins = rfft(frame, n);
    std::copy(bins.begin(), bins.end(), spec.bins.begin() + t * static_cast<std::ptrdiff_t>(spec.n_bins));
  }
  return spec;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

void StftConfig::validate() const {
  if (frame_len < 2 || !is_power_of_two(frame_len)) {
    fail(ErrorCode::InvalidConfig, "frame_len must be a power of two >= 2");
  }
  if (hop == 0 || hop > frame_len) fail(ErrorCode::InvalidConfig, "hop must be in [1, frame_len]");
}

std::vector<double> make_window(WindowKind kind, std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::Hann) {
    for (std::size_t i = 0; i < length; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(length));
    }
  }
  return w;
}

std::vector<std::complex<double>> rfft(std::span<const double> frame, std::size_t n_fft) {
  if (frame.size() > n_fft) fail(ErrorCode::InvalidConfig, "frame longer than FFT size");
  const auto& plan = plans_for(n_fft);
  FftwBuffer in(sizeof(double) * n_fft);
  FftwBuffer out(sizeof(fftw_complex) * (n_fft / 2 + 1));
  auto* real = static_cast<double*>(in.ptr);
  std::copy(frame.begin(), frame.end(), real);
  std::fill(real + frame.size(), real + n_fft, 0.0);
  auto* cplx = static_cast<fftw_complex*>(out.ptr);
  fftw_execute_dft_r2c(plan.forward, real, cplx);
  std::vector<std::complex<double>> bins(n_fft / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = {cplx[k][0], cplx[k][1]};
  return bins;
}

std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n_fft) {
  if (bins.size() != n_fft / 2 + 1) fail(ErrorCode::ShapeMismatch, "irfft expects n_fft/2 + 1 bins");
  const auto& plan = plans_for(n_fft);
  FftwBuffer in(sizeof(fftw_complex) * bins.size());
  FftwBuffer out(sizeof(double) * n_fft);
  auto* cplx = static_cast<fftw_complex*>(in.ptr);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    cplx[k][0] = bins[k].real();
    cplx[k][1] = bins[k].imag();
  }
  auto* real = static_cast<double*>(out.ptr);
  fftw_execute_dft_c2r(plan.inverse, cplx, real);
  std::vector<double> frame(real, real + n_fft);
  const double scale = 1.0 / static_cast<double>(n_fft);
  for (auto& v : frame) v *= scale;
  return frame;
}

double onesided_power(std::span<const std::complex<double>> bins, std::size_t n_fft) {
  double total = 0.0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const bool unpaired = k == 0 || (n_fft % 2 == 0 && k == n_fft / 2);
    total += (unpaired ? 1.0 : 2.0) * std::norm(bins[k]);
  }
  return total;
}

Spectrogram stft(std::span<const float> samples, const StftConfig& cfg) { return stft_impl(samples, cfg); }
Spectrogram stft(std::span<const double> samples, const StftConfig& cfg) { return stft_impl(samples, cfg); }

std::vector<double> istft(const Spectrogram& spec) {
  const auto& cfg = spec.config;
  cfg.validate();
  const std::size_t n = cfg.frame_len;
  if (spec.n_bins != n / 2 + 1 || spec.bins.size() != spec.n_frames * spec.n_bins) {
    fail(ErrorCode::ShapeMismatch, "spectrogram dimensions do not match its config");
  }
  const std::size_t pad = n / 2;
  const std::size_t padded_len = spec.signal_length + 2 * pad;
  const auto window = make_window(cfg.window, n);

  std::vector<std::vector<double>> frames(spec.n_frames);
  const auto count = static_cast<std::ptrdiff_t>(spec.n_frames);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < count; ++t) {
    const std::span<const std::complex<double>> row(spec.bins.data() + t * static_cast<std::ptrdiff_t>(spec.n_bins),
                                                     spec.n_bins);
    frames[static_cast<std::size_t>(t)] = irfft(row, n);
  }

  std::vector<double> acc(std::max(padded_len, (spec.n_frames - 1) * cfg.hop + n), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t j = 0; j < n; ++j) {
      acc[start + j] += frames[t][j] * window[j];
      wsum[start + j] += window[j] * window[j];
    }
  }

  std::vector<double> out(spec.signal_length);
  constexpr double kMinSupport = 1e-10;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = wsum[pad + i];
    if (w < kMinSupport) {
      fail(ErrorCode::NonColaConfig, "no window support at output sample " + std::to_string(i) +
                                         " (frame_len " + std::to_string(n) + ", hop " + std::to_string(cfg.hop) + ")");
    }
    out[i] = acc[pad + i] / w;
  }
  return out;
}

std::vector<double> resample(std::span<const double> samples, int source_hz, int target_hz) {
  if (source_hz <= 0 || target_hz <= 0) {
    fail(ErrorCode::InvalidRate, "rates must be positive: " + std::to_string(source_hz) + " -> " +
                                     std::to_string(target_hz));
  }
  if (source_hz == target_hz) return {samples.begin(), samples.end()};

  const long long g = std::gcd(source_hz, target_hz);
  const long long up = target_hz / g;
  const long long down = source_hz / g;
  const auto len = static_cast<long long>(samples.size());
  const long long out_len = (2 * len * up + down) / (2 * down);

  // Cutoff in cycles per input sample, slightly below the narrower Nyquist.
  constexpr double kRolloff = 0.94;
  constexpr double kZeroCrossings = 16.0;
  constexpr double kBeta = 8.6;
  const double fc = 0.5 * std::min(1.0, static_cast<double>(up) / static_cast<double>(down)) * kRolloff;
  const double half_width = kZeroCrossings / (2.0 * fc);
  const auto reach = static_cast<long long>(std::ceil(half_width));

  auto tap = [&](double tau) { return 2.0 * fc * sinc(2.0 * fc * tau) * kaiser(tau / half_width, kBeta); };

  // Polyphase table: phase p holds taps h(p/up - j) for j in [-reach, reach].
  const bool tabulate = up <= 4096;
  const auto taps_per_phase = static_cast<std::size_t>(2 * reach + 1);
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up) * taps_per_phase);
    for (long long p = 0; p < up; ++p) {
      const double frac = static_cast<double>(p) / static_cast<double>(up);
      for (long long j = -reach; j <= reach; ++j) {
        table[static_cast<std::size_t>(p) * taps_per_phase + static_cast<std::size_t>(j + reach)] = tap(frac - j);
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(out_len));
#pragma omp parallel for schedule(static)
  for (long long n = 0; n < out_len; ++n) {
    const long long base = (n * down) / up;
    const long long phase = (n * down) % up;
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double acc = 0.0;
    double weight = 0.0;
    const long long lo = std::max(-reach, -base);
    const long long hi = std::min(reach, len - 1 - base);
    for (long long j = lo; j <= hi; ++j) {
      const double h = tabulate ? table[static_cast<std::size_t>(phase) * taps_per_phase + static_cast<std::size_t>(j + reach)]
                                : tap(frac - j);
      acc += h * samples[static_cast<std::size_t>(base + j)];
      weight += h;
    }
    // Normalizing by the in-range tap sum keeps the DC gain at exactly one,
    // including near the edges where part of the kernel falls off the signal.
    out[static_cast<std::size_t>(n)] = weight != 0.0 ? acc / weight : 0.0;
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_hz) {
  std::vector<double> in(clip.samples.begin(), clip.samples.end());
  const auto out = resample(in, clip.sample_rate_hz, target_hz);
  AudioClip result;
  result.sample_rate_hz = target_hz;
  result.samples.assign(out.begin(), out.end());
  return result;
}

double energy(std::span<const float> samples) {
  double total = 0.0;
  for (float s : samples) total += static_cast<double>(s) * static_cast<double>(s);
  return total;
}

double energy(std::span<const double> samples) {
  double total = 0.0;
  for (double s : samples) total += s * s;
  return total;
}

namespace {

template <typename T>
double snr_impl(std::span<const T> clean, std::span<const T> noise) {
  if (clean.size() != noise.size()) {
    fail(ErrorCode::LengthMismatch,
         "clean has " + std::to_string(clean.size()) + " samples, noise " + std::to_string(noise.size()));
  }
  const double noise_energy = energy(noise);
  if (noise_energy == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy(clean) / noise_energy);
}

}  // namespace

double measure_snr(std::span<const float> clean, std::span<const float> residual_noise) {
  return snr_impl(clean, residual_noise);
}

double measure_snr(std::span<const double> clean, std::span<const double> residual_noise) {
  return snr_impl(clean, residual_noise);
}

}  // namespace edgespeech::dsp
