#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "edgespeech/audio_io.hpp"

namespace edgespeech::dsp {

enum class WindowKind { Hann, Rectangular };

/// Frame/hop/window for the short-time Fourier transform. The default is a
/// periodic Hann window at 75% overlap.
struct StftConfig {
  std::size_t frame_len = 512;
  std::size_t hop = 128;
  WindowKind window = WindowKind::Hann;

  void validate() const;
};

/// One-sided spectrogram, frames stored row-major: bin(t, k) for
/// k in [0, frame_len / 2].
struct Spectrogram {
  StftConfig config;
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::size_t signal_length = 0;
  std::vector<std::complex<double>> bins;

  std::complex<double>& at(std::size_t frame, std::size_t bin) { return bins[frame * n_bins + bin]; }
  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return bins[frame * n_bins + bin];
  }
};

std::vector<double> make_window(WindowKind kind, std::size_t length);

/// Real-input DFT of `frame` zero-padded to `n_fft`; returns n_fft/2 + 1 bins.
/// Backed by FFTW; plans are cached per size.
std::vector<std::complex<double>> rfft(std::span<const double> frame, std::size_t n_fft);

/// Inverse of rfft for a real signal of length n_fft (normalized by 1/n_fft).
std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n_fft);

/// Sum of squared magnitudes over the full two-sided spectrum, reconstructed
/// from one-sided bins: DC and Nyquist counted once, every other bin twice.
/// By Parseval this equals n_fft times the energy of the windowed frame.
double onesided_power(std::span<const std::complex<double>> bins, std::size_t n_fft);

/// STFT with frame_len/2 reflect padding on both sides. Frame t covers
/// padded samples [t*hop, t*hop + frame_len). Throws TooShort when the input
/// is shorter than one frame.
Spectrogram stft(std::span<const float> samples, const StftConfig& cfg = {});
Spectrogram stft(std::span<const double> samples, const StftConfig& cfg = {});

/// Weighted overlap-add inverse: each frame is windowed again and the sum is
/// divided by the accumulated squared window. Throws NonColaConfig when some
/// output sample has no window support.
std::vector<double> istft(const Spectrogram& spec);

/// Windowed-sinc (Kaiser) rational resampler. Output length is
/// round(len * target / source). Throws InvalidRate for non-positive rates.
AudioClip resample(const AudioClip& clip, int target_hz);
std::vector<double> resample(std::span<const double> samples, int source_hz, int target_hz);

double energy(std::span<const float> samples);
double energy(std::span<const double> samples);

/// 10*log10(energy(clean) / energy(residual_noise)). Returns +infinity when
/// the residual is silent. Throws LengthMismatch.
double measure_snr(std::span<const float> clean, std::span<const float> residual_noise);
double measure_snr(std::span<const double> clean, std::span<const double> residual_noise);

}  // namespace edgespeech::dsp
