#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"

namespace eegalign {

namespace detail {

// First sample index whose time is >= t_ms (tolerant of float grid jitter).
inline int sample_index_at_or_after(const EpochSet& e, double t_ms) {
  const double pos = (t_ms - e.time_origin_ms) / e.sample_period_ms();
  return static_cast<int>(std::ceil(pos - 1e-9));
}

// Maps a half-open [start_ms, end_ms) window onto sample indices.
inline std::pair<int, int> window_to_samples(const EpochSet& e, double start_ms,
                                             double end_ms) {
  require(end_ms > start_ms, ErrorKind::kRange, "window start must precede end");
  const int lo = sample_index_at_or_after(e, start_ms);
  const int hi = sample_index_at_or_after(e, end_ms);
  require(lo >= 0 && hi <= e.n_samples(), ErrorKind::kRange,
          "window outside the epoch span");
  require(hi - lo >= 1, ErrorKind::kRange, "window covers no samples");
  return {lo, hi};
}

}  // namespace detail

// Subtracts, per trial and channel, the mean over the pre-stimulus window
// [start_ms, end_ms). The window must end at or before stimulus onset.
inline EpochSet baseline_correct(const EpochSet& epochs, double start_ms,
                                 double end_ms) {
  require(start_ms >= epochs.time_origin_ms - 1e-9 && end_ms <= 1e-9,
          ErrorKind::kRange, "baseline window must lie in the pre-stimulus span");
  const auto [lo, hi] = detail::window_to_samples(epochs, start_ms, end_ms);
  EpochSet out = epochs;
  const int nc = out.n_channels();
  const int ns = out.n_samples();
  for (int t = 0; t < out.n_trials(); ++t) {
    auto m = out.trial(t);
    for (int c = 0; c < nc; ++c) {
      double acc = 0.0;
      for (int s = lo; s < hi; ++s) acc += m(c, s);
      const float mean = static_cast<float>(acc / (hi - lo));
      for (int s = 0; s < ns; ++s) m(c, s) -= mean;
    }
  }
  return out;
}

// Keeps samples in [start_ms, end_ms); time origin moves to the first
// retained sample.
inline EpochSet crop(const EpochSet& epochs, double start_ms, double end_ms) {
  const auto [lo, hi] = detail::window_to_samples(epochs, start_ms, end_ms);
  EpochSet out;
  out.participant_id = epochs.participant_id;
  out.sampling_rate_hz = epochs.sampling_rate_hz;
  out.time_origin_ms = epochs.time_of_sample(lo);
  out.channel_names = epochs.channel_names;
  out.meta = epochs.meta;
  const int kept = hi - lo;
  out.set_n_samples(kept);
  out.data.resize(static_cast<std::size_t>(epochs.n_trials()) *
                  static_cast<std::size_t>(epochs.n_channels()) *
                  static_cast<std::size_t>(kept));
  for (int t = 0; t < epochs.n_trials(); ++t) {
    auto src = epochs.trial(t);
    auto dst = out.trial(t);
    dst = src.block(0, lo, epochs.n_channels(), kept);
  }
  out.validate();
  return out;
}

namespace detail {

// Blackman-windowed sinc low-pass, unit DC gain, odd length. The symmetric
// kernel has a pure integer group delay which the convolution compensates,
// so the overall filter is zero-phase.
inline std::vector<double> design_lowpass_fir(double cutoff_norm,
                                              double transition_norm) {
  int taps = static_cast<int>(std::ceil(5.5 / transition_norm));
  if (taps % 2 == 0) ++taps;
  const int mid = taps / 2;
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double pi = 3.14159265358979323846;
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double k = n - mid;
    const double sinc =
        k == 0.0 ? 2.0 * cutoff_norm
                 : std::sin(2.0 * pi * cutoff_norm * k) / (pi * k);
    const double w = 0.42 - 0.5 * std::cos(2.0 * pi * n / (taps - 1)) +
                     0.08 * std::cos(4.0 * pi * n / (taps - 1));
    h[static_cast<std::size_t>(n)] = sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

// Zero-phase FIR with mirror padding, then take every decim-th sample.
inline void filter_decimate(const float* x, int n, const std::vector<double>& h,
                            int decim, float* y, int n_out) {
  const int mid = static_cast<int>(h.size()) / 2;
  auto mirrored = [&](int idx) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * n - 2 - idx;
    return x[idx];
  };
  for (int o = 0; o < n_out; ++o) {
    const int center = o * decim;
    double acc = 0.0;
    for (int k = 0; k < static_cast<int>(h.size()); ++k) {
      acc += h[static_cast<std::size_t>(k)] * mirrored(center + k - mid);
    }
    y[o] = static_cast<float>(acc);
  }
}

}  // namespace detail

// Anti-alias low-pass (zero-phase FIR, cutoff 0.4 * target_hz) followed by
// integer decimation. The source/target ratio must be a whole number.
inline EpochSet downsample(const EpochSet& epochs, double target_hz) {
  require(target_hz > 0.0, ErrorKind::kRange, "target rate must be positive");
  require(target_hz <= epochs.sampling_rate_hz + 1e-9, ErrorKind::kRange,
          "target rate exceeds source rate");
  const double ratio = epochs.sampling_rate_hz / target_hz;
  const int decim = static_cast<int>(std::llround(ratio));
  require(std::abs(ratio - decim) < 1e-9, ErrorKind::kUnsupportedRate,
          "source/target rate ratio must be an integer");
  if (decim == 1) return epochs;

  // Cutoff at 0.4*target leaves a 0.1*target guard band to the new Nyquist.
  const double cutoff_norm = 0.4 * target_hz / epochs.sampling_rate_hz;
  const double transition_norm = 0.1 * target_hz / epochs.sampling_rate_hz;
  const std::vector<double> h =
      detail::design_lowpass_fir(cutoff_norm, transition_norm);

  const int n_in = epochs.n_samples();
  const int n_out = (n_in + decim - 1) / decim;
  EpochSet out;
  out.participant_id = epochs.participant_id;
  out.sampling_rate_hz = target_hz;
  out.time_origin_ms = epochs.time_origin_ms;
  out.channel_names = epochs.channel_names;
  out.meta = epochs.meta;
  out.set_n_samples(n_out);
  out.data.resize(static_cast<std::size_t>(epochs.n_trials()) *
                  static_cast<std::size_t>(epochs.n_channels()) *
                  static_cast<std::size_t>(n_out));
  for (int t = 0; t < epochs.n_trials(); ++t) {
    const float* src = epochs.data.data() +
                       static_cast<std::size_t>(t) *
                           static_cast<std::size_t>(epochs.n_channels()) * n_in;
    float* dst = out.data.data() + static_cast<std::size_t>(t) *
                                       static_cast<std::size_t>(
                                           epochs.n_channels()) *
                                       n_out;
    for (int c = 0; c < epochs.n_channels(); ++c) {
      detail::filter_decimate(src + static_cast<std::size_t>(c) * n_in, n_in, h,
                              decim, dst + static_cast<std::size_t>(c) * n_out,
                              n_out);
    }
  }
  out.validate();
  return out;
}

}  // namespace eegalign
