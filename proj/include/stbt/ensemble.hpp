#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stbt/tm.hpp"

namespace stbt {

/// k models decoding and scoring as one unit by averaging probabilities.
/// The first member supplies the LM and decoder settings.
class Ensemble {
 public:
  explicit Ensemble(std::vector<std::shared_ptr<const LexModel>> members);
  static Ensemble single(LexModel m);

  std::size_t size() const { return members_.size(); }
  const LexModel& member(std::size_t i) const { return *members_[i]; }
  const LexModel& lead() const { return *members_.front(); }
  const std::vector<std::shared_ptr<const LexModel>>& members() const { return members_; }
  Direction direction() const { return lead().direction(); }

  /// ln of the member-averaged t(target | source).
  double step_logprob(std::string_view source, std::string_view target) const;
  NBestList nbest(const Sentence& x, int n) const;
  /// IBM1 marginal with averaged t-tables; members translate y into x.
  double channel_score(const Sentence& x, const Sentence& y) const;
  double pair_logprob(const Sentence& x, const Sentence& y) const;

  /// Ordered member hashes.
  std::vector<std::string> manifest() const;
  std::string hash() const;

 private:
  detail::Members view() const { return raw_; }

  std::vector<std::shared_ptr<const LexModel>> members_;
  std::vector<const LexModel*> raw_;
};

/// ln((1/k) Σ_i exp(member_logprobs[i])).
double ensemble_step_logprob(std::span<const double> member_logprobs);
NBestList ensemble_nbest(const Ensemble& e, const Sentence& x, int n);

}  // namespace stbt
