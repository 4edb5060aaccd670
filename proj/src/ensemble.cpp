#include "stbt/ensemble.hpp"

#include <cmath>

namespace stbt {

Ensemble::Ensemble(std::vector<std::shared_ptr<const LexModel>> members) : members_(std::move(members)) {
  if (members_.empty()) throw UsageError("an ensemble needs at least one member");
  for (const auto& m : members_) {
    if (!m) throw UsageError("null ensemble member");
    raw_.push_back(m.get());
  }
  for (const auto* m : raw_) {
    if (m->direction() != raw_.front()->direction()) throw UsageError("ensemble members must share a direction");
    if (!m->same_vocabulary(*raw_.front())) throw UsageError("ensemble members must share symbol inventories");
  }
}

Ensemble Ensemble::single(LexModel m) { return Ensemble({std::make_shared<const LexModel>(std::move(m))}); }

double Ensemble::step_logprob(std::string_view source, std::string_view target) const {
  return detail::lexical_logprob(view(), source, target);
}

NBestList Ensemble::nbest(const Sentence& x, int n) const { return detail::beam_search(view(), x, n); }

double Ensemble::channel_score(const Sentence& x, const Sentence& y) const {
  return detail::ibm1_logprob(view(), x, y);
}

double Ensemble::pair_logprob(const Sentence& x, const Sentence& y) const {
  return detail::viterbi_score(view(), x, y);
}

std::vector<std::string> Ensemble::manifest() const {
  std::vector<std::string> out;
  for (const auto* m : raw_) out.push_back(m->hash());
  return out;
}

std::string Ensemble::hash() const { return sha256_hex(join(manifest(), "\n")); }

double ensemble_step_logprob(std::span<const double> member_logprobs) {
  if (member_logprobs.empty()) throw UsageError("an ensemble needs at least one member");
  std::vector<double> p;
  p.reserve(member_logprobs.size());
  for (double lp : member_logprobs) p.push_back(std::exp(lp));
  return std::log(sorted_sum(p) / static_cast<double>(member_logprobs.size()));
}

NBestList ensemble_nbest(const Ensemble& e, const Sentence& x, int n) { return e.nbest(x, n); }

}  // namespace stbt
