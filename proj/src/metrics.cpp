#include "stbt/metrics.hpp"

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace stbt {

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_length += o.hyp_length;
  ref_length += o.ref_length;
  return *this;
}

BleuStats bleu_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats st;
  st.hyp_length = hyp.size();
  st.ref_length = ref.size();
  for (int n = 1; n <= kBleuOrder; ++n) {
    if (hyp.size() < static_cast<std::size_t>(n)) break;
    std::map<std::vector<std::string_view>, std::uint64_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
    std::map<std::vector<std::string_view>, std::uint64_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) st.matches[n - 1] += std::min(c, it->second);
      st.totals[n - 1] += c;
    }
  }
  return st;
}

double bleu(const BleuStats& st) {
  if (st.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (st.totals[n] == 0) continue;
    const double total = static_cast<double>(st.totals[n]);
    const double p = st.matches[n] > 0 ? static_cast<double>(st.matches[n]) / total : 1.0 / (2.0 * total);
    log_sum += std::log(p);
    ++orders;
  }
  const double c = static_cast<double>(st.hyp_length), r = static_cast<double>(st.ref_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

double bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs) {
  if (hyps.size() != refs.size())
    throw UsageError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " + std::to_string(refs.size()) +
                     " references");
  if (hyps.empty()) throw UsageError("bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i]);
  return bleu(total);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["bleu"] = bleu;
  j["sentences"] = sentences;
  j["decode"] = std::string(to_string(mode));
  j["lambda1"] = weights.lambda1;
  j["lambda2"] = weights.lambda2;
  j["model"] = model_hash;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_text() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", bleu);
  std::string out = "BLEU = " + std::string(buf) + " (" + std::to_string(sentences) + " sentences, " +
                    std::string(to_string(mode)) + " decoding";
  if (mode == DecodeMode::Rerank) {
    std::snprintf(buf, sizeof buf, ", lambda1 %.4f, lambda2 %.4f", weights.lambda1, weights.lambda2);
    out += buf;
  }
  return out + ")\n";
}

EvalReport evaluate_system(const Ensemble& forward, std::span<const SentencePair> test, DecodeMode mode,
                           const RerankContext* ctx, const Detok& detok, unsigned workers) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  std::vector<Sentence> sources;
  sources.reserve(test.size());
  for (const auto& p : test) sources.push_back(p.source);
  EvalReport report;
  report.mode = mode;
  report.sentences = test.size();
  if (mode == DecodeMode::Rerank && ctx) report.weights = ctx->weights;
  report.model_hash = forward.hash();
  for (auto& h : decode_all(forward, sources, mode, ctx, workers)) report.hypotheses.push_back(detok(h));
  for (const auto& p : test) report.references.push_back(detok(p.target));
  report.bleu = bleu(report.hypotheses, report.references);
  return report;
}

}  // namespace stbt
