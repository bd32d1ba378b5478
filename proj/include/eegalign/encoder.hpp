#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eegalign/binio.hpp"
#include "eegalign/error.hpp"
#include "eegalign/rng.hpp"

namespace eegalign {

enum class Arch { kConvProjector, kAttentionProjector };

inline const char* to_string(Arch a) {
  return a == Arch::kConvProjector ? "conv_projector" : "attention_projector";
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "conv_projector") return Arch::kConvProjector;
  if (s == "attention_projector") return Arch::kAttentionProjector;
  fail(ErrorKind::kConfig, "unknown arch '" + s + "'");
}

// Architecture description. Widths below are the defaults for the full
// 63x250 input; reduced configs are used throughout the tests.
struct EncoderConfig {
  int n_channels = 63;
  int n_samples = 250;
  int embed_dim = 1024;  // must match the bound feature-bank dim
  Arch arch = Arch::kConvProjector;
  int temporal_filters = 40;
  int temporal_kernel = 25;
  int spatial_filters = 40;
  int pool_window = 51;
  int pool_stride = 5;
  int attn_dim = 32;  // attention_projector only
  double dropout = 0.5;
  std::uint64_t init_seed = 0;

  int conv_t_out() const { return n_samples - temporal_kernel + 1; }
  int pool_out() const {
    return (conv_t_out() - pool_window) / pool_stride + 1;
  }
  int flat_dim() const { return spatial_filters * pool_out(); }

  void validate() const {
    require(n_channels > 0 && n_samples > 0 && embed_dim > 0,
            ErrorKind::kConfig, "channel/sample/embed dims must be positive");
    require(temporal_kernel >= 1 && temporal_kernel <= n_samples,
            ErrorKind::kConfig, "temporal kernel exceeds the sample count");
    require(pool_window >= 1 && pool_stride >= 1 &&
                pool_window <= conv_t_out(),
            ErrorKind::kConfig, "pooling window exceeds the conv output");
    require(pool_out() >= 1, ErrorKind::kConfig, "pooling collapses to nothing");
    require(temporal_filters > 0 && spatial_filters > 0 && attn_dim > 0,
            ErrorKind::kConfig, "filter counts must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::kConfig,
            "dropout must lie in [0, 1)");
  }
};

inline json encoder_config_to_json(const EncoderConfig& c) {
  return json{{"n_channels", c.n_channels},
              {"n_samples", c.n_samples},
              {"embed_dim", c.embed_dim},
              {"arch", to_string(c.arch)},
              {"temporal_filters", c.temporal_filters},
              {"temporal_kernel", c.temporal_kernel},
              {"spatial_filters", c.spatial_filters},
              {"pool_window", c.pool_window},
              {"pool_stride", c.pool_stride},
              {"attn_dim", c.attn_dim},
              {"dropout", c.dropout},
              {"init_seed", c.init_seed}};
}

inline EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  try {
    c.n_channels = j.at("n_channels").get<int>();
    c.n_samples = j.at("n_samples").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.arch = arch_from_string(j.at("arch").get<std::string>());
    c.temporal_filters = j.at("temporal_filters").get<int>();
    c.temporal_kernel = j.at("temporal_kernel").get<int>();
    c.spatial_filters = j.at("spatial_filters").get<int>();
    c.pool_window = j.at("pool_window").get<int>();
    c.pool_stride = j.at("pool_stride").get<int>();
    c.attn_dim = j.at("attn_dim").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "encoder config: " + std::string(e.what()));
  }
  return c;
}

// Named parameter tensors. temperature_log holds ln(1/tau) and is shared
// with the trainer's contrastive loss.
struct EncoderParams {
  EncoderConfig config;
  std::map<std::string, Eigen::MatrixXd> tensors;

  double temperature_log() const { return tensors.at("temperature_log")(0, 0); }
  void set_temperature_log(double v) { tensors.at("temperature_log")(0, 0) = v; }
  double temperature() const { return std::exp(-temperature_log()); }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }
};

using EncoderGradients = std::map<std::string, Eigen::MatrixXd>;

namespace detail {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / 1.4142135623730951));
}
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / 1.4142135623730951));
  const double pdf = std::exp(-0.5 * x * x) / 2.5066282746310002;
  return cdf + x * pdf;
}
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad_from_out(double x, double y) {
  return x > 0.0 ? 1.0 : y + 1.0;
}

inline Eigen::MatrixXd he_init(Eigen::Index rows, Eigen::Index cols,
                               double fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / fan_in);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.gaussian();
  }
  return m;
}

}  // namespace detail

// Deterministic initialization from config.init_seed. Weight tensors are
// He-scaled Gaussians, biases start at zero, temperature at ln(1/0.07).
inline EncoderParams encoder_init(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  Rng rng(derive_seed({config.init_seed, 0xE4C0DE2ull}));
  const int c_in = config.n_channels;
  const int t_in = config.n_samples;
  const int f1 = config.temporal_filters;
  const int f2 = config.spatial_filters;
  const int d = config.embed_dim;
  auto& t = p.tensors;
  if (config.arch == Arch::kAttentionProjector) {
    t["attn.wq"] = detail::he_init(config.attn_dim, t_in, t_in, rng);
    t["attn.wk"] = detail::he_init(config.attn_dim, t_in, t_in, rng);
    t["attn.wv"] = detail::he_init(config.attn_dim, t_in, t_in, rng);
    t["attn.wo"] = detail::he_init(t_in, config.attn_dim, config.attn_dim, rng);
  }
  t["tconv.w"] = detail::he_init(f1, config.temporal_kernel,
                                 config.temporal_kernel, rng);
  t["tconv.b"] = Eigen::MatrixXd::Zero(f1, 1);
  t["sconv.w"] = detail::he_init(f2, f1 * c_in, f1 * c_in, rng);
  t["sconv.b"] = Eigen::MatrixXd::Zero(f2, 1);
  t["head.w"] = detail::he_init(d, config.flat_dim(), config.flat_dim(), rng);
  t["head.b"] = Eigen::MatrixXd::Zero(d, 1);
  t["proj.w1"] = detail::he_init(d, d, d, rng);
  t["proj.b1"] = Eigen::MatrixXd::Zero(d, 1);
  t["proj.w2"] = detail::he_init(d, d, d, rng);
  t["proj.b2"] = Eigen::MatrixXd::Zero(d, 1);
  t["temperature_log"] =
      Eigen::MatrixXd::Constant(1, 1, std::log(1.0 / 0.07));
  return p;
}

enum class ForwardMode { kEval, kTrain };

// Per-sample intermediates kept for the backward pass.
struct EncoderTape {
  ForwardMode mode = ForwardMode::kEval;
  struct Sample {
    Eigen::MatrixXd x;       // input [C x T]
    Eigen::MatrixXd q, k, v; // attention projections [C x da]
    Eigen::MatrixXd attn_p;  // softmax rows [C x C]
    Eigen::MatrixXd attn_a;  // attended values [C x da]
    Eigen::MatrixXd x2;      // attention residual output [C x T]
    Eigen::MatrixXd y;       // temporal conv maps [F1*C x T']
    Eigen::MatrixXd z0;      // spatial conv pre-activation [F2 x T']
    Eigen::MatrixXd z;       // post-ELU [F2 x T']
    Eigen::VectorXd flat;    // pooled+flattened [F2*T2]
    Eigen::VectorXd u0;      // head output [d]
    Eigen::VectorXd h;       // projector linear 1 [d]
    Eigen::VectorXd a;       // gelu(h) [d]
    Eigen::VectorXd resid;   // h + dropout(W2 a + b2) [d]
    Eigen::VectorXd drop_mask;  // dropout keep/scale factors [d]
    double resid_norm = 0.0;
    Eigen::VectorXd embedding;  // unit vector [d]
  };
  std::vector<Sample> samples;
};

namespace detail {

// Temporal conv over samples, shared across channels, then a spatial conv
// collapsing (filter, channel) planes, ELU, average pooling, flatten,
// linear head and a residual two-layer projector with dropout.
inline void conv_stack_forward(const EncoderParams& p,
                               const Eigen::MatrixXd& x, ForwardMode mode,
                               Rng* rng, EncoderTape::Sample& s) {
  const EncoderConfig& cfg = p.config;
  const int c_in = cfg.n_channels;
  const int kt = cfg.temporal_kernel;
  const int f1 = cfg.temporal_filters;
  const int f2 = cfg.spatial_filters;
  const int t_out = cfg.conv_t_out();
  const Eigen::MatrixXd& wt = p.tensors.at("tconv.w");
  const Eigen::MatrixXd& bt = p.tensors.at("tconv.b");

  s.y.resize(f1 * c_in, t_out);
  Eigen::MatrixXd patches(kt, t_out);
  for (int c = 0; c < c_in; ++c) {
    for (int k = 0; k < kt; ++k) {
      patches.row(k) = x.row(c).segment(k, t_out);
    }
    const Eigen::MatrixXd out = wt * patches;  // [F1 x T']
    for (int f = 0; f < f1; ++f) {
      s.y.row(f * c_in + c) = out.row(f).array() + bt(f, 0);
    }
  }

  s.z0 = p.tensors.at("sconv.w") * s.y;
  s.z0.colwise() += Eigen::VectorXd(p.tensors.at("sconv.b"));
  s.z = s.z0.unaryExpr([](double v) { return elu(v); });

  const int t2 = cfg.pool_out();
  s.flat.resize(cfg.flat_dim());
  for (int g = 0; g < f2; ++g) {
    for (int u = 0; u < t2; ++u) {
      s.flat(g * t2 + u) =
          s.z.row(g).segment(u * cfg.pool_stride, cfg.pool_window).mean();
    }
  }

  s.u0 = p.tensors.at("head.w") * s.flat + p.tensors.at("head.b").col(0);
  s.h = p.tensors.at("proj.w1") * s.u0 + p.tensors.at("proj.b1").col(0);
  s.a = s.h.unaryExpr([](double v) { return gelu(v); });
  Eigen::VectorXd a2 =
      p.tensors.at("proj.w2") * s.a + p.tensors.at("proj.b2").col(0);

  s.drop_mask = Eigen::VectorXd::Ones(a2.size());
  if (mode == ForwardMode::kTrain && cfg.dropout > 0.0) {
    const double keep = 1.0 - cfg.dropout;
    for (Eigen::Index i = 0; i < a2.size(); ++i) {
      s.drop_mask(i) = rng->next_double() < cfg.dropout ? 0.0 : 1.0 / keep;
    }
  }
  s.resid = s.h + a2.cwiseProduct(s.drop_mask);

  s.resid_norm = s.resid.norm();
  require(s.resid_norm > 0.0 && std::isfinite(s.resid_norm),
          ErrorKind::kNumerical, "encoder produced a degenerate embedding");
  s.embedding = s.resid / s.resid_norm;
}

inline void attention_forward(const EncoderParams& p, const Eigen::MatrixXd& x,
                              EncoderTape::Sample& s) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.attn_dim));
  s.q = x * p.tensors.at("attn.wq").transpose();
  s.k = x * p.tensors.at("attn.wk").transpose();
  s.v = x * p.tensors.at("attn.wv").transpose();
  Eigen::MatrixXd scores = (s.q * s.k.transpose()) * scale;
  s.attn_p.resize(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    Eigen::ArrayXd e = (scores.row(r).array() - mx).exp();
    s.attn_p.row(r) = (e / e.sum()).matrix();
  }
  s.attn_a = s.attn_p * s.v;
  s.x2 = x + s.attn_a * p.tensors.at("attn.wo").transpose();
}

}  // namespace detail

// Maps a batch of [C x T] trials to unit-norm embeddings [B x d]. Eval mode
// is deterministic; train mode draws dropout masks from rng. Pass a tape to
// enable a subsequent backward pass.
inline Eigen::MatrixXd encoder_forward(const EncoderParams& p,
                                       const std::vector<Eigen::MatrixXd>& batch,
                                       ForwardMode mode = ForwardMode::kEval,
                                       Rng* rng = nullptr,
                                       EncoderTape* tape = nullptr) {
  const EncoderConfig& cfg = p.config;
  require(mode == ForwardMode::kEval || cfg.dropout == 0.0 || rng != nullptr,
          ErrorKind::kConfig, "train-mode forward with dropout needs an rng");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), cfg.embed_dim);
  EncoderTape local;
  EncoderTape& t = tape ? *tape : local;
  t.mode = mode;
  t.samples.assign(batch.size(), {});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::MatrixXd& x = batch[i];
    require(x.rows() == cfg.n_channels && x.cols() == cfg.n_samples,
            ErrorKind::kShape,
            "trial " + std::to_string(i) + " is " + std::to_string(x.rows()) +
                "x" + std::to_string(x.cols()) + ", encoder expects " +
                std::to_string(cfg.n_channels) + "x" +
                std::to_string(cfg.n_samples));
    require(x.allFinite(), ErrorKind::kValidation,
            "trial " + std::to_string(i) + " contains non-finite values");
    EncoderTape::Sample& s = t.samples[i];
    s.x = x;
    if (cfg.arch == Arch::kAttentionProjector) {
      detail::attention_forward(p, x, s);
      detail::conv_stack_forward(p, s.x2, mode, rng, s);
    } else {
      detail::conv_stack_forward(p, x, mode, rng, s);
    }
    out.row(static_cast<Eigen::Index>(i)) = s.embedding.transpose();
  }
  return out;
}

namespace detail {

inline void conv_stack_backward(const EncoderParams& p,
                                const EncoderTape::Sample& s,
                                const Eigen::VectorXd& d_embedding,
                                EncoderGradients& g, Eigen::MatrixXd& d_x) {
  const EncoderConfig& cfg = p.config;
  const int c_in = cfg.n_channels;
  const int kt = cfg.temporal_kernel;
  const int f1 = cfg.temporal_filters;
  const int f2 = cfg.spatial_filters;
  const int t_out = cfg.conv_t_out();
  const int t2 = cfg.pool_out();

  // L2 normalization: d_resid = (I - e e^T) d_e / ||resid||
  const Eigen::VectorXd d_resid =
      (d_embedding - s.embedding * (s.embedding.dot(d_embedding))) /
      s.resid_norm;

  // Residual projector.
  const Eigen::VectorXd d_a2 = d_resid.cwiseProduct(s.drop_mask);
  g["proj.w2"] += d_a2 * s.a.transpose();
  g["proj.b2"] += d_a2;
  Eigen::VectorXd d_h = p.tensors.at("proj.w2").transpose() * d_a2;
  for (Eigen::Index i = 0; i < d_h.size(); ++i) d_h(i) *= gelu_grad(s.h(i));
  d_h += d_resid;  // skip connection
  g["proj.w1"] += d_h * s.u0.transpose();
  g["proj.b1"] += d_h;
  const Eigen::VectorXd d_u0 = p.tensors.at("proj.w1").transpose() * d_h;

  // Head.
  g["head.w"] += d_u0 * s.flat.transpose();
  g["head.b"] += d_u0;
  const Eigen::VectorXd d_flat = p.tensors.at("head.w").transpose() * d_u0;

  // Average pooling (overlapping windows accumulate).
  Eigen::MatrixXd d_z = Eigen::MatrixXd::Zero(f2, t_out);
  const double inv_p = 1.0 / cfg.pool_window;
  for (int gch = 0; gch < f2; ++gch) {
    for (int u = 0; u < t2; ++u) {
      const double dv = d_flat(gch * t2 + u) * inv_p;
      d_z.row(gch)
          .segment(u * cfg.pool_stride, cfg.pool_window)
          .array() += dv;
    }
  }

  // ELU.
  Eigen::MatrixXd d_z0 = d_z;
  for (Eigen::Index r = 0; r < d_z0.rows(); ++r) {
    for (Eigen::Index c = 0; c < d_z0.cols(); ++c) {
      d_z0(r, c) *= elu_grad_from_out(s.z0(r, c), s.z(r, c));
    }
  }

  // Spatial conv.
  g["sconv.w"] += d_z0 * s.y.transpose();
  g["sconv.b"] += d_z0.rowwise().sum();
  const Eigen::MatrixXd d_y = p.tensors.at("sconv.w").transpose() * d_z0;

  // Temporal conv.
  const Eigen::MatrixXd& wt = p.tensors.at("tconv.w");
  const Eigen::MatrixXd& x = cfg.arch == Arch::kAttentionProjector ? s.x2 : s.x;
  d_x = Eigen::MatrixXd::Zero(c_in, cfg.n_samples);
  Eigen::MatrixXd patches(kt, t_out);
  Eigen::MatrixXd d_out(f1, t_out);
  for (int c = 0; c < c_in; ++c) {
    for (int k = 0; k < kt; ++k) patches.row(k) = x.row(c).segment(k, t_out);
    for (int f = 0; f < f1; ++f) d_out.row(f) = d_y.row(f * c_in + c);
    g["tconv.w"] += d_out * patches.transpose();
    g["tconv.b"] += d_out.rowwise().sum();
    const Eigen::MatrixXd d_patches = wt.transpose() * d_out;  // [kt x T']
    for (int k = 0; k < kt; ++k) {
      d_x.row(c).segment(k, t_out) += d_patches.row(k);
    }
  }
}

inline void attention_backward(const EncoderParams& p,
                               const EncoderTape::Sample& s,
                               const Eigen::MatrixXd& d_x2,
                               EncoderGradients& g, Eigen::MatrixXd& d_x) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.config.attn_dim));
  const Eigen::MatrixXd& wo = p.tensors.at("attn.wo");
  d_x = d_x2;  // residual path
  const Eigen::MatrixXd d_a = d_x2 * wo;                    // [C x da]
  g["attn.wo"] += d_x2.transpose() * s.attn_a;              // [T x da]
  const Eigen::MatrixXd d_p = d_a * s.v.transpose();        // [C x C]
  const Eigen::MatrixXd d_v = s.attn_p.transpose() * d_a;   // [C x da]
  Eigen::MatrixXd d_scores(d_p.rows(), d_p.cols());
  for (Eigen::Index r = 0; r < d_p.rows(); ++r) {
    const double dot = d_p.row(r).dot(s.attn_p.row(r));
    const Eigen::RowVectorXd shifted = (d_p.row(r).array() - dot).matrix();
    d_scores.row(r) = s.attn_p.row(r).cwiseProduct(shifted);
  }
  const Eigen::MatrixXd d_q = d_scores * s.k * scale;
  const Eigen::MatrixXd d_k = d_scores.transpose() * s.q * scale;
  g["attn.wq"] += d_q.transpose() * s.x;
  g["attn.wk"] += d_k.transpose() * s.x;
  g["attn.wv"] += d_v.transpose() * s.x;
  d_x += d_q * p.tensors.at("attn.wq") + d_k * p.tensors.at("attn.wk") +
         d_v * p.tensors.at("attn.wv");
}

}  // namespace detail

// Backpropagates d_embeddings [B x d] through the tape. Returns parameter
// gradients; per-sample input gradients land in d_input when non-null.
inline EncoderGradients encoder_backward(
    const EncoderParams& p, const EncoderTape& tape,
    const Eigen::MatrixXd& d_embeddings,
    std::vector<Eigen::MatrixXd>* d_input = nullptr) {
  require(d_embeddings.rows() == static_cast<Eigen::Index>(tape.samples.size()),
          ErrorKind::kShape, "gradient batch size disagrees with the tape");
  EncoderGradients g;
  for (const auto& [name, t] : p.tensors) {
    g[name] = Eigen::MatrixXd::Zero(t.rows(), t.cols());
  }
  if (d_input) d_input->assign(tape.samples.size(), {});
  for (std::size_t i = 0; i < tape.samples.size(); ++i) {
    const EncoderTape::Sample& s = tape.samples[i];
    Eigen::MatrixXd d_stage_in;
    detail::conv_stack_backward(
        p, s, d_embeddings.row(static_cast<Eigen::Index>(i)).transpose(), g,
        d_stage_in);
    if (p.config.arch == Arch::kAttentionProjector) {
      Eigen::MatrixXd d_x;
      detail::attention_backward(p, s, d_stage_in, g, d_x);
      if (d_input) (*d_input)[i] = std::move(d_x);
    } else if (d_input) {
      (*d_input)[i] = std::move(d_stage_in);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json (config + named-tensor index) + params.f32le.

inline void save_checkpoint(const EncoderParams& p, const fs::path& dir,
                            const json& provenance = json::object()) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = encoder_config_to_json(p.config);
  manifest["provenance"] = provenance;
  json index = json::array();
  std::vector<float> blob;
  std::size_t offset = 0;
  for (const auto& [name, t] : p.tensors) {
    index.push_back({{"name", name},
                     {"rows", t.rows()},
                     {"cols", t.cols()},
                     {"offset", offset}});
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        blob.push_back(static_cast<float>(t(r, c)));
      }
    }
    offset += static_cast<std::size_t>(t.size());
  }
  manifest["tensors"] = std::move(index);
  write_json_file(dir / "manifest.json", manifest);
  write_f32le(dir / "params.f32le", blob.data(), blob.size());
}

inline EncoderParams load_checkpoint(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  EncoderParams p;
  const std::vector<float> blob = read_f32le(dir / "params.f32le");
  try {
    require(manifest.at("format_version").get<int>() == 1, ErrorKind::kFormat,
            "unsupported checkpoint format_version");
    p.config = encoder_config_from_json(manifest.at("config"));
    for (const json& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      require(offset + static_cast<std::size_t>(rows * cols) <= blob.size(),
              ErrorKind::kCorruption, "params.f32le shorter than the index");
      Eigen::MatrixXd t(rows, cols);
      std::size_t pos = offset;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = blob[pos++];
      }
      p.tensors[name] = std::move(t);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "checkpoint manifest: " + std::string(e.what()));
  }
  require(p.tensors.count("temperature_log") == 1, ErrorKind::kFormat,
          "checkpoint lacks temperature_log");
  return p;
}

}  // namespace eegalign
