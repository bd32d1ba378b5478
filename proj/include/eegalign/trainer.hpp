#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "eegalign/encoder.hpp"
#include "eegalign/error.hpp"
#include "eegalign/evaluate.hpp"
#include "eegalign/featbank.hpp"
#include "eegalign/loss.hpp"
#include "eegalign/optim.hpp"
#include "eegalign/sampling.hpp"

namespace eegalign {

enum class Regime { kIntraparticipant, kInterparticipant };

inline const char* to_string(Regime r) {
  return r == Regime::kIntraparticipant ? "intraparticipant" : "interparticipant";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "intraparticipant") return Regime::kIntraparticipant;
  if (s == "interparticipant") return Regime::kInterparticipant;
  fail(ErrorKind::kConfig, "unknown regime '" + s + "'");
}

enum class FeatureMode { kVisual, kMultimodal };

inline const char* to_string(FeatureMode m) {
  return m == FeatureMode::kVisual ? "visual" : "multimodal";
}

inline FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "visual") return FeatureMode::kVisual;
  if (s == "multimodal") return FeatureMode::kMultimodal;
  fail(ErrorKind::kConfig, "unknown feature mode '" + s + "'");
}

struct TrainConfig {
  int epochs = 40;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 0.01;
  int batch_size = 256;
  SamplerConfig sampler;
  Regime regime = Regime::kIntraparticipant;
  FeatureMode feature_mode = FeatureMode::kVisual;
  bool temperature_learnable = true;
  double temperature_min = 0.01;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  bool dedup_concepts = false;  // logged; batches keep duplicate concepts
  int val_candidates = 200;     // fixed seeded validation subset size

  void validate() const {
    require(epochs >= 1, ErrorKind::kConfig, "epochs must be at least 1");
    require(lr > 0.0, ErrorKind::kConfig, "learning rate must be positive");
    require(temperature_min > 0.0, ErrorKind::kConfig,
            "temperature_min must be positive");
    require(batch_size >= 2, ErrorKind::kConfig, "batch_size must be >= 2");
    encoder.validate();
  }
};

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"adam_betas", {c.adam_beta1, c.adam_beta2}},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"sampler",
               {{"method", to_string(c.sampler.method)},
                {"k", c.sampler.k},
                {"seed", c.sampler.seed}}},
              {"regime", to_string(c.regime)},
              {"feature_mode", to_string(c.feature_mode)},
              {"temperature_learnable", c.temperature_learnable},
              {"temperature_min", c.temperature_min},
              {"seed", c.seed},
              {"encoder", encoder_config_to_json(c.encoder)},
              {"dedup_concepts", c.dedup_concepts},
              {"val_candidates", c.val_candidates}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    if (j.contains("adam_betas")) {
      c.adam_beta1 = j.at("adam_betas").at(0).get<double>();
      c.adam_beta2 = j.at("adam_betas").at(1).get<double>();
    }
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("sampler")) {
      const json& s = j.at("sampler");
      c.sampler.method = sampler_method_from_string(
          s.value("method", std::string(to_string(c.sampler.method))));
      c.sampler.k = s.value("k", c.sampler.k);
      c.sampler.seed = s.value("seed", c.sampler.seed);
    }
    c.regime = regime_from_string(
        j.value("regime", std::string(to_string(c.regime))));
    c.feature_mode = feature_mode_from_string(
        j.value("feature_mode", std::string(to_string(c.feature_mode))));
    c.temperature_learnable =
        j.value("temperature_learnable", c.temperature_learnable);
    c.temperature_min = j.value("temperature_min", c.temperature_min);
    c.seed = j.value("seed", c.seed);
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
    c.dedup_concepts = j.value("dedup_concepts", c.dedup_concepts);
    c.val_candidates = j.value("val_candidates", c.val_candidates);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "train config: " + std::string(e.what()));
  }
  return c;
}

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double temperature = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;
};

inline void write_history_csv(const TrainHistory& h, std::ostream& os) {
  os << "epoch,train_loss,val_loss,val_top1,val_top5,temperature,wall_seconds\n";
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    const EpochRecord& r = h.records[i];
    os << i << "," << r.train_loss << "," << r.val_loss << "," << r.val_top1
       << "," << r.val_top5 << "," << r.temperature << "," << r.wall_seconds
       << "\n";
  }
}

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
};

// Worker cap from EEG_ALIGN_THREADS (>= 1). Draws are seeded per item, so
// any worker count yields identical batches.
inline int env_worker_cap() {
  const char* v = std::getenv("EEG_ALIGN_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

// Concatenates participants' sets (each already preprocessed/whitened on
// its own). Repeat ids are renumbered per participant so the pooled set
// keeps trial triples unique while IDES sampling sees the union of slots.
inline EpochSet pool_epoch_sets(const std::vector<const EpochSet*>& sets) {
  require(!sets.empty(), ErrorKind::kValidation, "no epoch sets to pool");
  if (sets.size() == 1) return *sets.front();
  const EpochSet& first = *sets.front();
  int max_repeat = 0;
  for (const EpochSet* s : sets) {
    require(s->n_channels() == first.n_channels() &&
                s->n_samples() == first.n_samples(),
            ErrorKind::kShape, "pooled sets must share channel/sample counts");
    require(s->sampling_rate_hz == first.sampling_rate_hz, ErrorKind::kShape,
            "pooled sets must share the sampling rate");
    for (const TrialMeta& m : s->meta) max_repeat = std::max(max_repeat, m.repeat_id);
  }
  const int stride = max_repeat + 1;
  EpochSet out;
  out.sampling_rate_hz = first.sampling_rate_hz;
  out.time_origin_ms = first.time_origin_ms;
  out.channel_names = first.channel_names;
  out.set_n_samples(first.n_samples());
  std::string pooled_id = "pool(";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    pooled_id += (i ? "+" : "") + sets[i]->participant_id;
    for (const TrialMeta& m : sets[i]->meta) {
      TrialMeta copy = m;
      copy.repeat_id = static_cast<int>(i) * stride + m.repeat_id;
      out.meta.push_back(std::move(copy));
    }
    out.data.insert(out.data.end(), sets[i]->data.begin(), sets[i]->data.end());
  }
  out.participant_id = pooled_id + ")";
  out.validate();
  return out;
}

namespace detail {

// Executes a batch of draws; items are independent and seeded, so the
// worker count never changes the result.
inline std::vector<Eigen::MatrixXd> assemble_batch(
    const ConceptSpace& space, const SamplerConfig& sampler, const Batch& batch,
    int n_workers, std::vector<std::vector<int>>* slot_log = nullptr) {
  std::vector<Eigen::MatrixXd> inputs(batch.size());
  std::vector<std::vector<int>> slots(batch.size());
  auto run_item = [&](std::size_t i) {
    const DrawSpec& d = batch[i];
    Rng rng(d.draw_seed);
    std::vector<int> chosen =
        sampler.method == SamplerMethod::kIdes
            ? ides_draw_indices(space, d.concept_id, sampler.k, rng)
            : average_repeats_indices(space, d.concept_id, d.image_id);
    inputs[i] = mean_of_slots(*space.epochs, chosen).cast<double>();
    slots[i] = std::move(chosen);
  };
  const int workers =
      std::max(1, std::min<int>(n_workers, static_cast<int>(batch.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) run_item(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
             i += static_cast<std::size_t>(workers)) {
          run_item(i);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  if (slot_log) *slot_log = std::move(slots);
  return inputs;
}

// Best-effort removal of duplicate concepts within a batch by swapping
// with later units; purely deterministic.
inline void dedup_batches(std::vector<Batch>& batches) {
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < batches[bi].size(); ++i) {
      if (seen.insert(batches[bi][i].concept_id).second) continue;
      bool swapped = false;
      for (std::size_t bj = bi; bj < batches.size() && !swapped; ++bj) {
        for (std::size_t j = bj == bi ? i + 1 : 0; j < batches[bj].size(); ++j) {
          if (seen.count(batches[bj][j].concept_id)) continue;
          std::swap(batches[bi][i], batches[bj][j]);
          swapped = true;
          break;
        }
      }
      if (swapped) seen.insert(batches[bi][i].concept_id);
    }
  }
}

inline Eigen::MatrixXd bank_targets(const FeatureBank& bank, const Batch& batch) {
  Eigen::MatrixXd targets(static_cast<Eigen::Index>(batch.size()), bank.dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = bank.find(batch[i].concept_id, batch[i].image_id);
    require(row.has_value(), ErrorKind::kCoverage,
            "bank lacks a vector for (" + batch[i].concept_id + ", " +
                batch[i].image_id + ")");
    targets.row(static_cast<Eigen::Index>(i)) =
        bank.vectors.row(*row).cast<double>();
  }
  return targets;
}

inline void check_bank_for_training(const FeatureBank& bank,
                                    const TrainConfig& cfg) {
  const Modality want = cfg.feature_mode == FeatureMode::kVisual
                            ? Modality::kVisual
                            : Modality::kMultimodal;
  require(bank.modality == want, ErrorKind::kConfig,
          std::string("feature_mode ") + to_string(cfg.feature_mode) +
              " needs a " + to_string(want) + " bank, got " +
              to_string(bank.modality));
  require(bank.dim() == cfg.encoder.embed_dim, ErrorKind::kConfig,
          "bank dim " + std::to_string(bank.dim()) +
              " != encoder embed_dim " + std::to_string(cfg.encoder.embed_dim));
  for (int r = 0; r < bank.n_items(); ++r) {
    require(std::abs(bank.vectors.row(r).norm() - 1.0f) <= 1e-3f,
            ErrorKind::kValidation,
            "bank row " + std::to_string(r) +
                " is not unit length; normalize the bank first");
  }
}

}  // namespace detail

struct ValidationMetrics {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

// Embeds each held-out image (mean over its repeats) and retrieves it
// among the held-out vectors of a fixed, seeded subset of at most
// n_candidates concepts; chance is 1/n_candidates.
inline ValidationMetrics validate(const EncoderParams& params,
                                  const ConceptSpace& space,
                                  const FeatureBank& val_bank,
                                  int n_candidates = 200,
                                  std::uint64_t subset_seed = 0) {
  std::vector<std::string> eligible;
  for (const std::string& c : space.concepts) {
    const auto h = space.holdout.find(c);
    if (h != space.holdout.end() && !h->second.empty()) eligible.push_back(c);
  }
  require(!eligible.empty(), ErrorKind::kValidation, "holdout is empty");

  std::vector<std::string> chosen = eligible;
  if (static_cast<int>(eligible.size()) > n_candidates) {
    Rng rng(derive_seed({subset_seed, 0x7A1Dull}));
    std::vector<int> pick = rng.sample_without_replacement(
        static_cast<int>(eligible.size()), n_candidates);
    std::sort(pick.begin(), pick.end());
    chosen.clear();
    for (int i : pick) chosen.push_back(eligible[static_cast<std::size_t>(i)]);
  }
  require(chosen.size() >= 2, ErrorKind::kValidation,
          "validation needs at least two concepts");

  std::vector<Eigen::MatrixXd> batch;
  Eigen::MatrixXd targets(static_cast<Eigen::Index>(chosen.size()),
                          val_bank.dim());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const std::string& concept_id = chosen[i];
    batch.push_back(
        detail::mean_of_slots(*space.epochs, space.holdout.at(concept_id))
            .cast<double>());
    const auto img = space.holdout_image.find(concept_id);
    std::optional<int> row;
    if (img != space.holdout_image.end() && !img->second.empty()) {
      row = val_bank.find(concept_id, img->second);
    }
    if (!row) row = val_bank.find(concept_id, std::nullopt);
    require(row.has_value(), ErrorKind::kCoverage,
            "validation bank lacks a vector for concept '" + concept_id + "'");
    targets.row(static_cast<Eigen::Index>(i)) =
        val_bank.vectors.row(*row).cast<double>();
  }
  const Eigen::MatrixXd emb = encoder_forward(params, batch);

  ValidationMetrics m;
  const double tau =
      std::max(params.temperature(), 1e-6);
  m.loss = contrastive_loss(emb, targets, tau).loss;
  const Eigen::MatrixXd sims = emb * targets.transpose();
  int top1 = 0, top5 = 0;
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    const int rank = retrieval_rank(sims.row(r), static_cast<int>(r));
    if (rank <= 1) ++top1;
    if (rank <= 5) ++top5;
  }
  m.top1 = static_cast<double>(top1) / static_cast<double>(sims.rows());
  m.top5 = static_cast<double>(top5) / static_cast<double>(sims.rows());
  return m;
}

// Contrastive alignment loop. Schedules one unit per (concept, retained
// image) per epoch, draws EEG per the sampler method, aligns embeddings to
// the unit's bank vector, and steps AdamW. Fully reproducible given the
// config seed.
inline TrainResult train(const TrainConfig& cfg,
                         const std::vector<const EpochSet*>& data,
                         const FeatureBank& bank, std::ostream* audit = nullptr,
                         int n_workers = 0) {
  cfg.validate();
  detail::check_bank_for_training(bank, cfg);
  const EpochSet pooled = pool_epoch_sets(data);
  require(pooled.n_channels() == cfg.encoder.n_channels &&
              pooled.n_samples() == cfg.encoder.n_samples,
          ErrorKind::kConfig,
          "encoder expects " + std::to_string(cfg.encoder.n_channels) + "x" +
              std::to_string(cfg.encoder.n_samples) + " trials, data is " +
              std::to_string(pooled.n_channels()) + "x" +
              std::to_string(pooled.n_samples()));
  const ConceptSpace space = build_concept_space(pooled);

  // Coverage must hold before epoch 1: every scheduling unit needs a
  // target vector.
  for (const std::string& concept_id : space.concepts) {
    const auto it = space.images.find(concept_id);
    if (it == space.images.end()) continue;
    for (const std::string& image_id : it->second) {
      require(bank.find(concept_id, image_id).has_value(), ErrorKind::kCoverage,
              "bank lacks a vector for (" + concept_id + ", " + image_id + ")");
    }
  }

  if (n_workers <= 0) n_workers = env_worker_cap();
  EncoderParams params = encoder_init(cfg.encoder);
  AdamW opt(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay);
  const double max_temperature_log = std::log(1.0 / cfg.temperature_min);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Batch> batches =
        make_epoch_schedule(space, cfg.sampler, cfg.batch_size, epoch);
    if (cfg.dedup_concepts) detail::dedup_batches(batches);
    double loss_sum = 0.0;
    int batches_used = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      if (batch.size() < 2) continue;  // remainder too small to contrast
      std::vector<std::vector<int>> slot_log;
      const std::vector<Eigen::MatrixXd> inputs = detail::assemble_batch(
          space, cfg.sampler, batch, n_workers, audit ? &slot_log : nullptr);
      if (audit) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
          write_draw_audit(*audit, epoch, static_cast<int>(bi), batch[i],
                           slot_log[i]);
        }
      }
      const Eigen::MatrixXd targets = detail::bank_targets(bank, batch);

      Rng dropout_rng(derive_seed({cfg.seed, 0xD201ull,
                                   static_cast<std::uint64_t>(epoch), bi}));
      EncoderTape tape;
      const Eigen::MatrixXd emb = encoder_forward(
          params, inputs, ForwardMode::kTrain, &dropout_rng, &tape);
      const double tau =
          std::max(params.temperature(), cfg.temperature_min);
      const ContrastiveResult fwd = contrastive_loss(emb, targets, tau);
      require(std::isfinite(fwd.loss), ErrorKind::kNumerical,
              "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(bi) + " (temperature " + std::to_string(tau) +
                  ")");
      loss_sum += fwd.loss;
      ++batches_used;

      const ContrastiveGradients lg =
          contrastive_loss_backward(emb, targets, tau, fwd);
      EncoderGradients grads = encoder_backward(params, tape, lg.d_eeg);
      grads["temperature_log"] = Eigen::MatrixXd::Constant(
          1, 1, cfg.temperature_learnable ? lg.d_log_inv_temp : 0.0);
      opt.step(params, grads);
      if (params.temperature_log() > max_temperature_log) {
        params.set_temperature_log(max_temperature_log);
      }
    }

    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(std::max(1, batches_used));
    const ValidationMetrics vm =
        validate(params, space, bank, cfg.val_candidates,
                 derive_seed({cfg.seed, 0x7A1Dull}));
    rec.val_loss = vm.loss;
    rec.val_top1 = vm.top1;
    rec.val_top5 = vm.top5;
    rec.temperature = params.temperature();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.history.records.push_back(rec);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace eegalign
