#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"
#include "eegalign/featbank.hpp"
#include "eegalign/rng.hpp"

namespace eegalign {

// Controllable-SNR generative model: a unit concept vector per concept,
// image vectors jittered around it, trials formed by linearly mixing the
// image vector into channels, broadcast over a temporal envelope, plus
// white Gaussian noise scaled to the requested signal/noise power ratio.
struct SynthSpec {
  int n_concepts = 20;
  int images_per_concept = 5;
  int repeats = 4;
  int n_channels = 16;
  int n_samples = 64;
  double sampling_rate_hz = 250.0;
  int feat_dim = 32;
  double snr = 0.5;             // signal power / noise power; +inf = clean
  double concept_spread = 0.3;  // within-concept image jitter
  std::uint64_t seed = 0;

  void validate() const {
    require(n_concepts >= 1 && images_per_concept >= 1 && repeats >= 1,
            ErrorKind::kValidation, "counts must be at least 1");
    require(n_channels >= 1 && n_samples >= 1 && feat_dim >= 1,
            ErrorKind::kValidation, "dims must be at least 1");
    require(sampling_rate_hz > 0.0, ErrorKind::kValidation,
            "sampling rate must be positive");
    require(snr > 0.0, ErrorKind::kValidation, "snr must be positive");
    require(concept_spread >= 0.0 && concept_spread <= 1.0,
            ErrorKind::kValidation, "concept_spread must lie in [0, 1]");
  }
};

struct SynthData {
  EpochSet epochs;           // train split
  FeatureBank per_image_bank;  // visual vectors of the generated images
};

struct SynthSuiteOptions {
  int test_repeats = 20;
  int ood_images_per_concept = 13;
  double language_spread = 0.3;
};

// Full desk-scale experiment kit sharing one latent draw: train trials,
// test trials of one fresh image per concept, plus per-image visual and
// language banks for the train, test (ID) and unseen (OOD) images.
struct SynthSuite {
  EpochSet train_epochs;
  EpochSet test_epochs;
  FeatureBank train_visual, train_language;
  FeatureBank id_visual, id_language;    // per-image, one test image/concept
  FeatureBank ood_visual, ood_language;  // per-image, unseen images
};

namespace detail {

inline std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

inline Eigen::VectorXd random_unit(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.gaussian();
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : random_unit(dim, rng);
}

inline Eigen::VectorXf jittered_image_vector(const Eigen::VectorXd& concept_vec,
                                             double spread, Rng& rng) {
  const Eigen::VectorXd v =
      concept_vec + spread * random_unit(static_cast<int>(concept_vec.size()), rng);
  const double n = v.norm();
  require(n > 1e-12, ErrorKind::kNumerical, "degenerate image vector");
  return (v / n).cast<float>();
}

struct SynthWorld {
  std::vector<Eigen::VectorXd> concept_vectors;
  Eigen::MatrixXd mixing;      // [channels x feat_dim]
  Eigen::VectorXd envelope;    // [n_samples]
  double noise_sigma = 0.0;
};

inline SynthWorld make_world(const SynthSpec& spec) {
  SynthWorld w;
  Rng rng_concepts(derive_seed({spec.seed, 0xC0CEull}));
  for (int c = 0; c < spec.n_concepts; ++c) {
    w.concept_vectors.push_back(random_unit(spec.feat_dim, rng_concepts));
  }
  Rng rng_mix(derive_seed({spec.seed, 0x313ull}));
  w.mixing.resize(spec.n_channels, spec.feat_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.feat_dim));
  for (int r = 0; r < spec.n_channels; ++r) {
    for (int c = 0; c < spec.feat_dim; ++c) {
      w.mixing(r, c) = scale * rng_mix.gaussian();
    }
  }
  w.envelope.resize(spec.n_samples);
  const double pi = 3.14159265358979323846;
  for (int t = 0; t < spec.n_samples; ++t) {
    w.envelope(t) =
        spec.n_samples == 1
            ? 1.0
            : 0.5 * (1.0 - std::cos(2.0 * pi * t / (spec.n_samples - 1)));
  }
  return w;
}

// Appends `repeats` noisy renditions of one image to the epoch set.
inline void emit_trials(EpochSet& epochs, const SynthWorld& w,
                        const Eigen::VectorXf& image_vec,
                        const std::string& concept_id,
                        const std::string& image_id, int repeats, Split split,
                        Rng& noise_rng) {
  const Eigen::MatrixXd clean =
      (w.mixing * image_vec.cast<double>()) * w.envelope.transpose();
  const int nc = static_cast<int>(clean.rows());
  const int ns = static_cast<int>(clean.cols());
  for (int r = 0; r < repeats; ++r) {
    TrialMeta m;
    m.concept_id = concept_id;
    m.image_id = image_id;
    m.repeat_id = r;
    m.split = split;
    epochs.meta.push_back(std::move(m));
    for (int c = 0; c < nc; ++c) {
      for (int s = 0; s < ns; ++s) {
        const double noise =
            w.noise_sigma > 0.0 ? w.noise_sigma * noise_rng.gaussian() : 0.0;
        epochs.data.push_back(static_cast<float>(clean(c, s) + noise));
      }
    }
  }
}

}  // namespace detail

inline SynthSuite gen_synthetic_suite(const SynthSpec& spec,
                                      const SynthSuiteOptions& opts = {}) {
  spec.validate();
  require(opts.test_repeats >= 1 && opts.ood_images_per_concept >= 1,
          ErrorKind::kValidation, "suite counts must be at least 1");
  detail::SynthWorld world = detail::make_world(spec);

  // Image latents. Train/test/ood draw from independent streams so the
  // train set is identical with or without the suite extras.
  Rng rng_train_img(derive_seed({spec.seed, 0x13A6E5ull}));
  Rng rng_test_img(derive_seed({spec.seed, 0x7E57ull}));
  Rng rng_ood_img(derive_seed({spec.seed, 0x00Dull}));
  Rng rng_lang(derive_seed({spec.seed, 0x1A26ull}));

  SynthSuite suite;
  auto init_epochs = [&](EpochSet& e, const std::string& pid) {
    e.participant_id = pid;
    e.sampling_rate_hz = spec.sampling_rate_hz;
    e.time_origin_ms = 0.0;
    for (int c = 0; c < spec.n_channels; ++c) {
      e.channel_names.push_back("ch" + detail::zero_pad(c, 2));
    }
    e.set_n_samples(spec.n_samples);
  };
  init_epochs(suite.train_epochs, "synth");
  init_epochs(suite.test_epochs, "synth");

  auto init_bank = [&](FeatureBank& b, Modality m) {
    b.modality = m;
    b.source = "synthlab seed " + std::to_string(spec.seed);
    b.normalized = true;
  };
  init_bank(suite.train_visual, Modality::kVisual);
  init_bank(suite.train_language, Modality::kLanguage);
  init_bank(suite.id_visual, Modality::kVisual);
  init_bank(suite.id_language, Modality::kLanguage);
  init_bank(suite.ood_visual, Modality::kVisual);
  init_bank(suite.ood_language, Modality::kLanguage);

  // Latent image vectors for every role.
  std::vector<std::vector<Eigen::VectorXf>> train_vecs(
      static_cast<std::size_t>(spec.n_concepts));
  std::vector<Eigen::VectorXf> test_vecs;
  std::vector<std::vector<Eigen::VectorXf>> ood_vecs(
      static_cast<std::size_t>(spec.n_concepts));
  for (int c = 0; c < spec.n_concepts; ++c) {
    const Eigen::VectorXd& g = world.concept_vectors[static_cast<std::size_t>(c)];
    for (int i = 0; i < spec.images_per_concept; ++i) {
      train_vecs[static_cast<std::size_t>(c)].push_back(
          detail::jittered_image_vector(g, spec.concept_spread, rng_train_img));
    }
    test_vecs.push_back(
        detail::jittered_image_vector(g, spec.concept_spread, rng_test_img));
    for (int i = 0; i < opts.ood_images_per_concept; ++i) {
      ood_vecs[static_cast<std::size_t>(c)].push_back(
          detail::jittered_image_vector(g, spec.concept_spread, rng_ood_img));
    }
  }

  // Noise scale from the mean clean-signal power of the training images.
  double power = 0.0;
  for (int c = 0; c < spec.n_concepts; ++c) {
    for (const Eigen::VectorXf& v : train_vecs[static_cast<std::size_t>(c)]) {
      const Eigen::MatrixXd clean =
          (world.mixing * v.cast<double>()) * world.envelope.transpose();
      power += clean.squaredNorm() /
               static_cast<double>(clean.rows() * clean.cols());
    }
  }
  power /= static_cast<double>(spec.n_concepts * spec.images_per_concept);
  world.noise_sigma = std::isinf(spec.snr) ? 0.0 : std::sqrt(power / spec.snr);

  Rng rng_train_noise(derive_seed({spec.seed, 0x901Eull}));
  Rng rng_test_noise(derive_seed({spec.seed, 0x7E57901Eull}));
  auto add_bank_row = [](FeatureBank& b, const std::string& concept_id,
                         const std::string& image_id,
                         const Eigen::VectorXf& v) {
    b.items.push_back({concept_id, image_id});
    b.vectors.conservativeResize(b.vectors.rows() + 1, v.size());
    b.vectors.row(b.vectors.rows() - 1) = v.transpose();
  };

  for (int c = 0; c < spec.n_concepts; ++c) {
    const std::string concept_id = "c" + detail::zero_pad(c, 4);
    const Eigen::VectorXd& g = world.concept_vectors[static_cast<std::size_t>(c)];
    for (int i = 0; i < spec.images_per_concept; ++i) {
      const std::string image_id = "i" + detail::zero_pad(i, 3);
      const Eigen::VectorXf& v =
          train_vecs[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
      detail::emit_trials(suite.train_epochs, world, v, concept_id, image_id,
                          spec.repeats, Split::kTrain, rng_train_noise);
      add_bank_row(suite.train_visual, concept_id, image_id, v);
      add_bank_row(suite.train_language, concept_id, image_id,
                   detail::jittered_image_vector(g, opts.language_spread,
                                                 rng_lang));
    }
    const std::string test_image = "t000";
    const Eigen::VectorXf& tv = test_vecs[static_cast<std::size_t>(c)];
    detail::emit_trials(suite.test_epochs, world, tv, concept_id, test_image,
                        opts.test_repeats, Split::kTest, rng_test_noise);
    add_bank_row(suite.id_visual, concept_id, test_image, tv);
    add_bank_row(suite.id_language, concept_id, test_image,
                 detail::jittered_image_vector(g, opts.language_spread,
                                               rng_lang));
    for (int i = 0; i < opts.ood_images_per_concept; ++i) {
      const std::string image_id = "o" + detail::zero_pad(i, 3);
      const Eigen::VectorXf& ov =
          ood_vecs[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
      add_bank_row(suite.ood_visual, concept_id, image_id, ov);
      add_bank_row(suite.ood_language, concept_id, image_id,
                   detail::jittered_image_vector(g, opts.language_spread,
                                                 rng_lang));
    }
  }
  suite.train_epochs.validate();
  suite.test_epochs.validate();
  return suite;
}

// The training slice of the suite: [n_concepts * images * repeats] trials
// plus the per-image visual bank.
inline SynthData gen_synthetic(const SynthSpec& spec) {
  SynthSuiteOptions opts;
  opts.test_repeats = 1;
  opts.ood_images_per_concept = 1;
  SynthSuite suite = gen_synthetic_suite(spec, opts);
  return {std::move(suite.train_epochs), std::move(suite.train_visual)};
}

// ---------------------------------------------------------------------------

struct SnrEstimate {
  double value = 0.0;
  bool capped = false;  // residual power was zero; value is a sentinel
};

inline constexpr double kSnrCap = 1e12;

// Signal-to-noise estimate from repeated stimuli: residual power is the
// within-(concept, image) variance across repeats; signal power is the
// power of the across-repeat mean, bias-corrected by residual/r.
inline SnrEstimate snr_estimate(const EpochSet& epochs) {
  std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
  for (int i = 0; i < epochs.n_trials(); ++i) {
    const TrialMeta& m = epochs.meta[static_cast<std::size_t>(i)];
    groups[{m.concept_id, m.image_id}].push_back(i);
  }
  const double cell_count =
      static_cast<double>(epochs.n_channels()) * epochs.n_samples();
  double residual_ss = 0.0;
  double residual_dof = 0.0;
  std::vector<std::pair<double, int>> mean_power;  // (||m||^2/(C*S), repeats)
  for (const auto& [key, trials] : groups) {
    if (trials.size() < 2) continue;
    Eigen::MatrixXd mean =
        Eigen::MatrixXd::Zero(epochs.n_channels(), epochs.n_samples());
    for (int idx : trials) mean += epochs.trial(idx).cast<double>();
    mean /= static_cast<double>(trials.size());
    for (int idx : trials) {
      residual_ss += (epochs.trial(idx).cast<double>() - mean).squaredNorm();
    }
    residual_dof += static_cast<double>(trials.size() - 1) * cell_count;
    mean_power.emplace_back(mean.squaredNorm() / cell_count,
                            static_cast<int>(trials.size()));
  }
  require(!mean_power.empty(), ErrorKind::kEstimation,
          "no stimulus has two or more repeats");
  const double noise_power = residual_ss / residual_dof;
  double signal_power = 0.0;
  for (const auto& [p, r] : mean_power) {
    signal_power += std::max(0.0, p - noise_power / static_cast<double>(r));
  }
  signal_power /= static_cast<double>(mean_power.size());
  if (noise_power <= 0.0 || signal_power / noise_power > kSnrCap) {
    return {kSnrCap, true};
  }
  return {signal_power / noise_power, false};
}

}  // namespace eegalign
