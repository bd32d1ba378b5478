#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eegalign/binio.hpp"
#include "eegalign/encoder.hpp"
#include "eegalign/error.hpp"
#include "eegalign/featbank.hpp"
#include "eegalign/sampling.hpp"
#include "eegalign/stats.hpp"

namespace eegalign {

enum class BankKind { kId, kOod };

inline const char* to_string(BankKind k) { return k == BankKind::kId ? "ID" : "OOD"; }

// Retrieval outcome for one participant against one candidate bank.
struct EvalReport {
  std::string participant_id;
  std::string regime;
  std::string feature_mode;
  std::string sampler;
  BankKind bank_kind = BankKind::kOod;
  double top1 = 0.0;
  double top5 = 0.0;
  int n_candidates = 0;
  std::map<std::string, int> per_concept_rank;  // 1-based
};

// Rank of the true candidate among all candidates by descending cosine
// similarity. Ties break by bank item order: an equal-scoring candidate
// that appears earlier in the bank outranks the true one.
inline int retrieval_rank(const Eigen::RowVectorXd& sims, int true_index) {
  int rank = 1;
  for (Eigen::Index j = 0; j < sims.size(); ++j) {
    if (j == true_index) continue;
    if (sims(j) > sims(true_index) ||
        (sims(j) == sims(true_index) && j < true_index)) {
      ++rank;
    }
  }
  return rank;
}

// Fraction of rows whose true concept ranks within the top k candidates.
inline double topk_accuracy(const Eigen::MatrixXd& embeddings,
                            const FeatureBank& bank,
                            const std::vector<std::string>& true_ids, int k) {
  require(k >= 1, ErrorKind::kValidation, "k must be at least 1");
  require(embeddings.rows() == static_cast<Eigen::Index>(true_ids.size()),
          ErrorKind::kShape, "one true id per embedding row required");
  require(bank.normalized, ErrorKind::kValidation,
          "candidate bank must be normalized");
  const Eigen::MatrixXd candidates = bank.vectors.cast<double>();
  int hits = 0;
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    const auto idx = bank.find(true_ids[static_cast<std::size_t>(r)], std::nullopt);
    require(idx.has_value(), ErrorKind::kLookup,
            "concept '" + true_ids[static_cast<std::size_t>(r)] +
                "' is not in the candidate bank");
    const Eigen::RowVectorXd sims =
        embeddings.row(r) * candidates.transpose();
    if (retrieval_rank(sims, *idx) <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(embeddings.rows());
}

// Evaluation context labels copied into reports.
struct EvalContext {
  std::string regime = "intraparticipant";
  std::string feature_mode = "visual";
  std::string sampler = "ides";
};

// Test-time pipeline: average all repeats per test concept, embed, and
// rank against a candidate bank for k in {1, 5}.
inline EvalReport evaluate_against_bank(const EncoderParams& params,
                                        const EpochSet& test_epochs,
                                        const FeatureBank& bank, BankKind kind,
                                        const EvalContext& ctx) {
  require(bank.normalized, ErrorKind::kValidation,
          "candidate bank must be normalized");
  const auto aggregated = test_aggregate(test_epochs);
  std::vector<std::string> concepts;
  std::vector<Eigen::MatrixXd> batch;
  for (const auto& [concept_id, tensor] : aggregated) {
    require(bank.find(concept_id, std::nullopt).has_value(),
            ErrorKind::kCoverage,
            "test concept '" + concept_id + "' is missing from the " +
                std::string(to_string(kind)) + " bank");
    concepts.push_back(concept_id);
    batch.push_back(tensor.cast<double>());
  }
  const Eigen::MatrixXd embeddings = encoder_forward(params, batch);
  const Eigen::MatrixXd candidates = bank.vectors.cast<double>();

  EvalReport report;
  report.participant_id = test_epochs.participant_id;
  report.regime = ctx.regime;
  report.feature_mode = ctx.feature_mode;
  report.sampler = ctx.sampler;
  report.bank_kind = kind;
  report.n_candidates = bank.n_items();
  int top1 = 0, top5 = 0;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const int true_idx = *bank.find(concepts[i], std::nullopt);
    const Eigen::RowVectorXd sims =
        embeddings.row(static_cast<Eigen::Index>(i)) * candidates.transpose();
    const int rank = retrieval_rank(sims, true_idx);
    report.per_concept_rank[concepts[i]] = rank;
    if (rank <= 1) ++top1;
    if (rank <= 5) ++top5;
  }
  report.top1 = static_cast<double>(top1) / static_cast<double>(concepts.size());
  report.top5 = static_cast<double>(top5) / static_cast<double>(concepts.size());
  return report;
}

// ID and OOD reports for one participant's test set.
inline std::pair<EvalReport, EvalReport> evaluate_participant(
    const EncoderParams& params, const EpochSet& test_epochs,
    const FeatureBank& id_bank, const FeatureBank& ood_bank,
    const EvalContext& ctx = {}) {
  return {evaluate_against_bank(params, test_epochs, id_bank, BankKind::kId, ctx),
          evaluate_against_bank(params, test_epochs, ood_bank, BankKind::kOod,
                                ctx)};
}

inline json eval_report_to_json(const EvalReport& r) {
  json ranks = json::object();
  for (const auto& [concept_id, rank] : r.per_concept_rank) ranks[concept_id] = rank;
  return json{{"participant_id", r.participant_id},
              {"regime", r.regime},
              {"feature_mode", r.feature_mode},
              {"sampler", r.sampler},
              {"bank_kind", to_string(r.bank_kind)},
              {"top1", r.top1},
              {"top5", r.top5},
              {"n_candidates", r.n_candidates},
              {"per_concept_rank", std::move(ranks)}};
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.participant_id = j.at("participant_id").get<std::string>();
    r.regime = j.at("regime").get<std::string>();
    r.feature_mode = j.at("feature_mode").get<std::string>();
    r.sampler = j.at("sampler").get<std::string>();
    r.bank_kind =
        j.at("bank_kind").get<std::string>() == "ID" ? BankKind::kId : BankKind::kOod;
    r.top1 = j.at("top1").get<double>();
    r.top5 = j.at("top5").get<double>();
    r.n_candidates = j.at("n_candidates").get<int>();
    for (const auto& [key, value] : j.at("per_concept_rank").items()) {
      r.per_concept_rank[key] = value.get<int>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "eval report: " + std::string(e.what()));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Paired comparisons (sampling-effect / multimodal-effect analyses).

struct PairedReport {
  struct Pair {
    std::string label;
    double accuracy_a = 0.0;
    double accuracy_b = 0.0;
  };
  std::vector<Pair> pairs;
  double mean_gain = 0.0;              // mean(b - a)
  double wilcoxon_w = 0.0;
  std::optional<double> p_value;       // empty when the test is degenerate
  int n = 0;                           // pairs after zero-difference removal
};

// Matches each report in runs_a with exactly one report in runs_b sharing
// pair_key(report), then runs the signed-rank test over the top-1 pairs.
inline PairedReport paired_comparison(
    const std::vector<EvalReport>& runs_a, const std::vector<EvalReport>& runs_b,
    const std::function<std::string(const EvalReport&)>& pair_key) {
  std::map<std::string, const EvalReport*> b_by_key;
  for (const EvalReport& r : runs_b) {
    const std::string key = pair_key(r);
    require(b_by_key.emplace(key, &r).second, ErrorKind::kPairing,
            "duplicate pair key '" + key + "' in runs_b");
  }
  PairedReport out;
  std::vector<double> a_vals, b_vals;
  std::map<std::string, bool> used;
  for (const EvalReport& r : runs_a) {
    const std::string key = pair_key(r);
    const auto it = b_by_key.find(key);
    require(it != b_by_key.end(), ErrorKind::kPairing,
            "no match in runs_b for pair key '" + key + "'");
    require(!used[key], ErrorKind::kPairing,
            "duplicate pair key '" + key + "' in runs_a");
    used[key] = true;
    out.pairs.push_back({key, r.top1, it->second->top1});
    a_vals.push_back(r.top1);
    b_vals.push_back(it->second->top1);
  }
  require(!out.pairs.empty(), ErrorKind::kPairing, "no pairs to compare");
  double gain = 0.0;
  for (const auto& p : out.pairs) gain += p.accuracy_b - p.accuracy_a;
  out.mean_gain = gain / static_cast<double>(out.pairs.size());
  try {
    const WilcoxonResult w = wilcoxon_signed_rank(a_vals, b_vals);
    out.wilcoxon_w = w.w;
    out.p_value = w.p_two_sided;
    out.n = w.n;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateInput &&
        e.kind() != ErrorKind::kValidation) {
      throw;
    }
    out.p_value = std::nullopt;  // degenerate: reported as p = none
    out.n = 0;
  }
  return out;
}

inline json paired_report_to_json(const PairedReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"label", p.label},
                     {"accuracy_a", p.accuracy_a},
                     {"accuracy_b", p.accuracy_b}});
  }
  json j{{"pairs", std::move(pairs)},
         {"mean_gain", r.mean_gain},
         {"wilcoxon_W", r.wilcoxon_w},
         {"n", r.n}};
  if (r.p_value) {
    j["p_value"] = *r.p_value;
  } else {
    j["p_value"] = nullptr;
  }
  return j;
}

// Scatter-ready CSV: one row per pair plus the identity-line reference.
inline void write_pairs_csv(const PairedReport& r, std::ostream& os) {
  os << "label,acc_a,acc_b\n";
  for (const auto& p : r.pairs) {
    os << p.label << "," << p.accuracy_a << "," << p.accuracy_b << "\n";
  }
}

}  // namespace eegalign
