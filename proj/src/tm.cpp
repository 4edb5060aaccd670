#include "stbt/tm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace stbt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t pack(int row, int target) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row)) << 32) | static_cast<std::uint32_t>(target);
}

std::string_view next_line(std::string_view text, std::size_t& pos) {
  if (pos >= text.size()) throw DataError("lexical model: unexpected end of file");
  std::size_t end = text.find('\n', pos);
  if (end == std::string_view::npos) end = text.size();
  std::string_view line = text.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

std::string_view field(std::string_view line, std::string_view name) {
  if (line.substr(0, name.size()) != name || line.size() <= name.size() || line[name.size()] != ' ')
    throw DataError("lexical model: expected '" + std::string(name) + "', got '" + std::string(line) + "'");
  return line.substr(name.size() + 1);
}

void check_settings(const DecoderSettings& s) {
  if (s.beam < 1) throw UsageError("beam must be >= 1");
  if (s.window < 0 || s.window > 30) throw UsageError("window must lie in [0, 30]");
  if (s.max_candidates < 1) throw UsageError("max_candidates must be >= 1");
  if (!(s.floor > 0.0 && s.floor < 1.0)) throw UsageError("floor probability must lie in (0, 1)");
  if (!(s.lm_weight >= 0.0) || !std::isfinite(s.lm_weight)) throw UsageError("lm_weight must be a finite value >= 0");
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::Forward ? "forward" : "backward"; }

Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::Forward;
  if (s == "backward") return Direction::Backward;
  throw DataError("unknown direction '" + std::string(s) + "'");
}

// ---- LexModel ---------------------------------------------------------------

std::shared_ptr<const LexModel::Vocab> LexModel::make_vocab(std::vector<std::string> source,
                                                            std::vector<std::string> target) {
  auto v = std::make_shared<Vocab>();
  std::sort(source.begin(), source.end());
  source.erase(std::unique(source.begin(), source.end()), source.end());
  std::sort(target.begin(), target.end());
  target.erase(std::unique(target.begin(), target.end()), target.end());
  v->source = std::move(source);
  v->target = std::move(target);
  for (std::size_t i = 0; i < v->source.size(); ++i) v->source_index.emplace(v->source[i], static_cast<int>(i));
  for (std::size_t i = 0; i < v->target.size(); ++i) v->target_index.emplace(v->target[i], static_cast<int>(i));
  return v;
}

void LexModel::index_row(Row& row) {
  row.by_prob.resize(row.target.size());
  std::iota(row.by_prob.begin(), row.by_prob.end(), 0);
  std::stable_sort(row.by_prob.begin(), row.by_prob.end(), [&](int a, int b) { return row.prob[a] > row.prob[b]; });
}

void LexModel::bind_lm() {
  lm_ids_.clear();
  if (!lm_) return;
  lm_ids_.reserve(vocab_->target.size());
  for (const auto& tok : vocab_->target) lm_ids_.push_back(lm_->id(tok));
}

LexModel LexModel::from_table(Direction direction, std::span<const TableEntry> entries, DecoderSettings settings,
                              std::shared_ptr<const NGramLM> lm) {
  check_settings(settings);
  std::vector<std::string> src, tgt;
  for (const auto& e : entries) {
    if (e.source != kNullToken) src.push_back(e.source);
    tgt.push_back(e.target);
    if (!(e.prob >= 0.0 && e.prob <= 1.0)) throw UsageError("table probabilities must lie in [0, 1]");
  }
  LexModel m;
  m.direction_ = direction;
  m.settings_ = settings;
  m.vocab_ = make_vocab(std::move(src), std::move(tgt));
  auto rows = std::make_shared<std::vector<Row>>(m.vocab_->source.size() + 1);
  std::map<std::pair<int, int>, double> cells;
  for (const auto& e : entries) {
    const int r = e.source == kNullToken ? m.null_row() : m.vocab_->source_index.at(e.source);
    const int c = m.vocab_->target_index.at(e.target);
    if (!cells.emplace(std::make_pair(r, c), e.prob).second)
      throw UsageError("duplicate table entry " + e.source + " -> " + e.target);
  }
  for (const auto& [rc, p] : cells) {
    (*rows)[rc.first].target.push_back(rc.second);
    (*rows)[rc.first].prob.push_back(p);
  }
  for (auto& r : *rows) index_row(r);
  m.rows_ = std::move(rows);
  m.lm_ = std::move(lm);
  m.bind_lm();
  return m;
}

LexModel LexModel::with_settings(DecoderSettings settings) const {
  check_settings(settings);
  LexModel m = *this;
  m.settings_ = settings;
  return m;
}

LexModel LexModel::with_lm(std::shared_ptr<const NGramLM> lm) const {
  LexModel m = *this;
  m.lm_ = std::move(lm);
  m.bind_lm();
  return m;
}

double LexModel::lookup(int row, int target) const {
  const Row& r = (*rows_)[row];
  auto it = std::lower_bound(r.target.begin(), r.target.end(), target);
  if (it == r.target.end() || *it != target) return -1.0;
  return r.prob[static_cast<std::size_t>(it - r.target.begin())];
}

std::optional<double> LexModel::t(std::string_view source, std::string_view target) const {
  int row;
  if (source == kNullToken) {
    row = null_row();
  } else {
    auto it = vocab_->source_index.find(std::string(source));
    if (it == vocab_->source_index.end()) return std::nullopt;
    row = it->second;
  }
  auto jt = vocab_->target_index.find(std::string(target));
  if (jt == vocab_->target_index.end()) return std::nullopt;
  const double p = lookup(row, jt->second);
  if (p < 0.0) return std::nullopt;
  return p;
}

double LexModel::row_sum(std::string_view source) const {
  int row;
  if (source == kNullToken) {
    row = null_row();
  } else {
    auto it = vocab_->source_index.find(std::string(source));
    if (it == vocab_->source_index.end()) return 0.0;
    row = it->second;
  }
  double s = 0.0;
  for (double p : (*rows_)[row].prob) s += p;
  return s;
}

bool LexModel::same_vocabulary(const LexModel& other) const {
  return vocab_ == other.vocab_ || (vocab_->source == other.vocab_->source && vocab_->target == other.vocab_->target);
}

void LexModel::set_tag_bias(const std::string& tag, const std::string& target, double bias) {
  if (!is_tag(tag)) throw UsageError("'" + tag + "' is not a tag");
  auto it = vocab_->target_index.find(target);
  if (it == vocab_->target_index.end()) throw UsageError("unknown target symbol '" + target + "'");
  tag_bias_[tag][it->second] = bias;
}

std::string LexModel::serialize() const {
  std::string out = "lexmodel v1\n";
  out += "direction " + std::string(to_string(direction_)) + "\n";
  out += "beam " + std::to_string(settings_.beam) + "\n";
  out += "window " + std::to_string(settings_.window) + "\n";
  out += "lm_weight " + format_double(settings_.lm_weight) + "\n";
  out += "max_candidates " + std::to_string(settings_.max_candidates) + "\n";
  out += "floor " + format_double(settings_.floor) + "\n";
  out += "lm " + lm_hash() + "\n";
  out += "source " + std::to_string(vocab_->source.size()) + "\n";
  for (const auto& s : vocab_->source) out += s + "\n";
  out += "target " + std::to_string(vocab_->target.size()) + "\n";
  for (const auto& s : vocab_->target) out += s + "\n";
  out += "rows " + std::to_string(rows_->size()) + "\n";
  for (const auto& r : *rows_) {
    out += std::to_string(r.target.size());
    for (std::size_t i = 0; i < r.target.size(); ++i)
      out += " " + std::to_string(r.target[i]) + ":" + format_double(r.prob[i]);
    out += "\n";
  }
  std::vector<std::string> bias;
  for (const auto& [tag, m] : tag_bias_)
    for (const auto& [id, b] : m) bias.push_back(tag + " " + vocab_->target[id] + " " + format_double(b));
  std::sort(bias.begin(), bias.end());
  out += "bias " + std::to_string(bias.size()) + "\n";
  for (const auto& b : bias) out += b + "\n";
  return out;
}

std::string LexModel::referenced_lm(std::string_view text) {
  std::size_t pos = 0;
  for (int i = 0; i < 8; ++i) {
    const auto line = next_line(text, pos);
    if (line.substr(0, 3) == "lm ") return std::string(line.substr(3));
  }
  throw DataError("lexical model: missing lm reference");
}

LexModel LexModel::parse(std::string_view text, std::shared_ptr<const NGramLM> lm) {
  std::size_t pos = 0;
  if (next_line(text, pos) != "lexmodel v1") throw DataError("lexical model: unsupported header");
  LexModel m;
  m.direction_ = parse_direction(field(next_line(text, pos), "direction"));
  m.settings_.beam = std::stoi(std::string(field(next_line(text, pos), "beam")));
  m.settings_.window = std::stoi(std::string(field(next_line(text, pos), "window")));
  m.settings_.lm_weight = parse_double(field(next_line(text, pos), "lm_weight"));
  m.settings_.max_candidates = std::stoi(std::string(field(next_line(text, pos), "max_candidates")));
  m.settings_.floor = parse_double(field(next_line(text, pos), "floor"));
  check_settings(m.settings_);
  const std::string lm_ref(field(next_line(text, pos), "lm"));
  if (lm_ref == "none") {
    if (lm) throw DataError("lexical model references no language model");
  } else if (!lm || lm->hash() != lm_ref) {
    throw DataError("lexical model: language model hash mismatch (expected " + lm_ref + ")");
  }
  std::vector<std::string> src, tgt;
  const auto ns = std::stoull(std::string(field(next_line(text, pos), "source")));
  for (std::size_t i = 0; i < ns; ++i) src.emplace_back(next_line(text, pos));
  const auto nt = std::stoull(std::string(field(next_line(text, pos), "target")));
  for (std::size_t i = 0; i < nt; ++i) tgt.emplace_back(next_line(text, pos));
  m.vocab_ = make_vocab(std::move(src), std::move(tgt));
  if (m.vocab_->source.size() != ns || m.vocab_->target.size() != nt)
    throw DataError("lexical model: vocabulary is not sorted and unique");
  const auto nr = std::stoull(std::string(field(next_line(text, pos), "rows")));
  if (nr != ns + 1) throw DataError("lexical model: row count mismatch");
  auto rows = std::make_shared<std::vector<Row>>(nr);
  for (auto& r : *rows) {
    const Sentence parts = split_ws(next_line(text, pos));
    if (parts.empty() || std::stoull(parts[0]) != parts.size() - 1) throw DataError("lexical model: bad row");
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const std::size_t colon = parts[i].find(':');
      if (colon == std::string::npos) throw DataError("lexical model: bad row entry");
      const int id = std::stoi(parts[i].substr(0, colon));
      if (id < 0 || static_cast<std::size_t>(id) >= nt) throw DataError("lexical model: target id out of range");
      r.target.push_back(id);
      r.prob.push_back(parse_double(std::string_view(parts[i]).substr(colon + 1)));
    }
    index_row(r);
  }
  m.rows_ = std::move(rows);
  const auto nb = std::stoull(std::string(field(next_line(text, pos), "bias")));
  m.lm_ = std::move(lm);
  m.bind_lm();
  for (std::size_t i = 0; i < nb; ++i) {
    const Sentence parts = split_ws(next_line(text, pos));
    if (parts.size() != 3) throw DataError("lexical model: bad bias record");
    m.set_tag_bias(parts[0], parts[1], parse_double(parts[2]));
  }
  return m;
}

void save(const LexModel& m, const std::filesystem::path& path) { write_file(path, m.serialize()); }

LexModel load_lexmodel(const std::filesystem::path& path, std::shared_ptr<const NGramLM> lm) {
  return LexModel::parse(read_file(path), std::move(lm));
}

// ---- EM training ------------------------------------------------------------

Ibm1Trainer::Ibm1Trainer(const DataMix& mix) {
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<Sentence> sources;
  mix.for_each_weighted([&](const SentencePair& p, std::size_t w) {
    Sentence src = strip_tag(p.source);
    if (src.empty() || p.target.empty()) return;
    std::string key = join(src) + "\t" + join(p.target);
    auto [it, inserted] = seen.emplace(std::move(key), targets_.size());
    if (inserted) {
      sources.push_back(std::move(src));
      targets_.push_back(p.target);
      weights_.push_back(w);
    } else {
      weights_[it->second] += w;
    }
  });
  if (targets_.empty()) throw DataError("EM training: no parallel data");
  std::vector<std::string> sv, tv;
  for (const auto& s : sources) sv.insert(sv.end(), s.begin(), s.end());
  for (const auto& s : targets_) tv.insert(tv.end(), s.begin(), s.end());
  vocab_ = LexModel::make_vocab(std::move(sv), std::move(tv));
  src_.reserve(sources.size());
  tgt_.reserve(targets_.size());
  for (std::size_t p = 0; p < sources.size(); ++p) {
    std::vector<int> s, t;
    for (const auto& tok : sources[p]) s.push_back(vocab_->source_index.at(tok));
    for (const auto& tok : targets_[p]) t.push_back(vocab_->target_index.at(tok));
    src_.push_back(std::move(s));
    tgt_.push_back(std::move(t));
  }
  index_params(true);
}

Ibm1Trainer::Ibm1Trainer(const LexModel& init, std::span<const SentencePair> pairs)
    : vocab_(init.vocab_), init_(&init), base_rows_(init.rows_) {
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& p : pairs) {
    std::vector<int> s, t;
    Sentence kept_target;
    for (const auto& tok : strip_tag(p.source)) {
      auto it = vocab_->source_index.find(tok);
      if (it != vocab_->source_index.end()) s.push_back(it->second);
    }
    for (const auto& tok : p.target) {
      auto it = vocab_->target_index.find(tok);
      if (it != vocab_->target_index.end()) {
        t.push_back(it->second);
        kept_target.push_back(tok);
      }
    }
    if (s.empty() || t.empty()) continue;
    std::string key = join(strip_tag(p.source)) + "\t" + join(p.target);
    auto [it, inserted] = seen.emplace(std::move(key), tgt_.size());
    if (!inserted) {
      ++weights_[it->second];
      continue;
    }
    src_.push_back(std::move(s));
    tgt_.push_back(std::move(t));
    targets_.push_back(std::move(kept_target));
    weights_.push_back(1);
  }
  if (tgt_.empty()) throw DataError("EM continuation: no usable in-vocabulary pairs");
  index_params(false);
}

void Ibm1Trainer::index_params(bool uniform) {
  const int null_row = static_cast<int>(vocab_->source.size());
  std::unordered_map<std::uint64_t, int> param_of;
  offsets_.clear();
  param_ids_.clear();
  for (std::size_t p = 0; p < src_.size(); ++p) {
    offsets_.push_back(param_ids_.size());
    for (int y : tgt_[p]) {
      for (std::size_t i = 0; i <= src_[p].size(); ++i) {
        const int row = i == 0 ? null_row : src_[p][i - 1];
        auto [it, inserted] = param_of.emplace(pack(row, y), static_cast<int>(param_row_.size()));
        if (inserted) {
          param_row_.push_back(row);
          param_target_.push_back(y);
        }
        param_ids_.push_back(it->second);
      }
    }
  }
  t_.assign(param_row_.size(), 0.0);
  if (uniform) {
    std::fill(t_.begin(), t_.end(), 1.0 / static_cast<double>(vocab_->target.size()));
  } else {
    for (std::size_t k = 0; k < t_.size(); ++k) {
      const double p = init_->lookup(param_row_[k], param_target_[k]);
      t_[k] = p < 0.0 ? init_->settings().floor : p;
    }
  }
}

double Ibm1Trainer::expectation(std::vector<double>* counts) const {
  double ll = 0.0;
  for (std::size_t p = 0; p < src_.size(); ++p) {
    const double w = static_cast<double>(weights_[p]);
    const std::size_t width = src_[p].size() + 1;
    const double norm = static_cast<double>(width);
    const int* ids = param_ids_.data() + offsets_[p];
    for (std::size_t j = 0; j < tgt_[p].size(); ++j, ids += width) {
      double s = 0.0;
      for (std::size_t i = 0; i < width; ++i) s += t_[ids[i]];
      if (!(s > 0.0)) {
        ll = kNegInf;
        continue;
      }
      ll += w * std::log(s / norm);
      if (counts) {
        const double scale = w / s;
        for (std::size_t i = 0; i < width; ++i) (*counts)[ids[i]] += t_[ids[i]] * scale;
      }
    }
  }
  return ll;
}

double Ibm1Trainer::log_likelihood() const { return expectation(nullptr); }

double Ibm1Trainer::step() {
  std::vector<double> counts(t_.size(), 0.0);
  const double ll = expectation(&counts);
  std::vector<double> totals(vocab_->source.size() + 1, 0.0);
  for (std::size_t k = 0; k < counts.size(); ++k) totals[param_row_[k]] += counts[k];
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (totals[param_row_[k]] > 0.0) t_[k] = counts[k] / totals[param_row_[k]];
  ++iterations_;
  return ll;
}

LexModel Ibm1Trainer::model(Direction direction, const DecoderSettings& settings,
                            std::shared_ptr<const NGramLM> lm) const {
  check_settings(settings);
  const std::size_t nrows = vocab_->source.size() + 1;
  auto rows = base_rows_ ? std::make_shared<std::vector<LexModel::Row>>(*base_rows_)
                         : std::make_shared<std::vector<LexModel::Row>>(nrows);
  std::vector<std::vector<std::pair<int, double>>> fresh(nrows);
  for (std::size_t k = 0; k < t_.size(); ++k) fresh[param_row_[k]].emplace_back(param_target_[k], t_[k]);
  for (std::size_t r = 0; r < nrows; ++r) {
    if (fresh[r].empty()) continue;
    std::sort(fresh[r].begin(), fresh[r].end());
    LexModel::Row row;
    for (const auto& [id, p] : fresh[r]) {
      row.target.push_back(id);
      row.prob.push_back(p);
    }
    LexModel::index_row(row);
    (*rows)[r] = std::move(row);
  }
  LexModel m;
  m.direction_ = direction;
  m.settings_ = settings;
  m.vocab_ = vocab_;
  m.rows_ = std::move(rows);
  m.lm_ = std::move(lm);
  m.bind_lm();
  if (init_) m.tag_bias_ = init_->tag_bias_;
  return m;
}

LexModel em_train(const DataMix& mix, const TrainOptions& options, std::vector<double>* ll_trace) {
  if (options.iterations < 1) throw UsageError("EM iterations must be >= 1");
  Ibm1Trainer trainer(mix);
  for (int it = 0; it < options.iterations; ++it) {
    const double ll = trainer.step();
    if (ll_trace) ll_trace->push_back(ll);
  }
  if (ll_trace) ll_trace->push_back(trainer.log_likelihood());
  auto lm = std::make_shared<const NGramLM>(
      NGramLM::train(trainer.targets(), options.lm_order, options.lm_k, trainer.target_weights()));
  return trainer.model(options.direction, options.decoder, std::move(lm));
}

// ---- decoding and scoring ---------------------------------------------------

namespace detail {

namespace {

void check_members(Members members) {
  if (members.empty()) throw UsageError("at least one model is required");
  for (const LexModel* m : members) {
    if (!m->same_vocabulary(*members[0])) throw UsageError("ensemble members must share symbol inventories");
    if (m->direction() != members[0]->direction()) throw UsageError("ensemble members must share a direction");
  }
}

int source_row(const LexModel& m, std::string_view tok) {
  if (tok == kNullToken) return m.null_row();
  auto it = m.vocab().source_index.find(std::string(tok));
  return it == m.vocab().source_index.end() ? -1 : it->second;
}

int target_id(const LexModel& m, std::string_view tok) {
  auto it = m.vocab().target_index.find(std::string(tok));
  return it == m.vocab().target_index.end() ? -1 : it->second;
}

double member_t(const LexModel& m, int row, int target) {
  const double p = (row < 0 || target < 0) ? -1.0 : m.lookup(row, target);
  return p < 0.0 ? m.settings().floor : p;
}

// Member-averaged t(target | row); each member uses its floor for absent
// entries, unknown rows and unknown targets. Values are summed in ascending
// order, so the average is bitwise independent of member order.
double mean_t(Members members, int row, int target) {
  if (members.size() == 1) return member_t(*members[0], row, target);
  std::vector<double> p;
  p.reserve(members.size());
  for (const LexModel* m : members) p.push_back(member_t(*m, row, target));
  return sorted_sum(p) / static_cast<double>(members.size());
}

double step_score(double lex, double lm_logprob, double lm_weight, double bias) {
  return lex + lm_weight * lm_logprob + bias;
}

// Per-sentence decoding context shared by the beam search and the Viterbi
// scorer so that both produce identical step scores.
struct Context {
  Members members;
  const LexModel& lead;
  std::string tag;
  Sentence x;
  std::vector<int> rows;  // per source position, -1 if unknown
  int num_targets = 0;
  std::vector<std::string> extra;  // tokens outside the target vocabulary
  const std::unordered_map<int, double>* bias = nullptr;
  const NGramLM* lm = nullptr;

  Context(Members ms, const Sentence& input) : members(ms), lead(*ms[0]) {
    tag = std::string(leading_tag(input));
    x = strip_tag(input);
    num_targets = static_cast<int>(lead.vocab().target.size());
    for (const auto& tok : x) rows.push_back(source_row(lead, tok));
    if (!tag.empty()) {
      auto it = lead.tag_bias().find(tag);
      if (it != lead.tag_bias().end()) bias = &it->second;
    }
    lm = lead.lm().get();
  }

  int intern(const std::string& tok) {
    const int id = target_id(lead, tok);
    if (id >= 0) return id;
    for (std::size_t i = 0; i < extra.size(); ++i)
      if (extra[i] == tok) return num_targets + static_cast<int>(i);
    extra.push_back(tok);
    return num_targets + static_cast<int>(extra.size()) - 1;
  }

  const std::string& token(int id) const {
    return id < num_targets ? lead.vocab().target[id] : extra[id - num_targets];
  }

  int lm_id(int id) const { return id < num_targets ? lead.lm_ids()[id] : lm->id(extra[id - num_targets]); }

  double lex(int row, int id) const { return std::log(mean_t(members, row, id < num_targets ? id : -1)); }

  double bias_of(int id) const {
    if (!bias) return 0.0;
    auto it = bias->find(id);
    return it == bias->end() ? 0.0 : it->second;
  }

  // ln P_lm(id | out), 0 without an LM
  double lm_logprob(const std::vector<int>& out, int id) const {
    if (!lm) return 0.0;
    const int order = lm->order();
    int hist[NGramLM::kMaxOrder];
    const std::size_t keep = std::min<std::size_t>(out.size(), static_cast<std::size_t>(order - 1));
    for (std::size_t k = 0; k < keep; ++k) hist[k] = lm_id(out[out.size() - keep + k]);
    return std::log(lm->prob(std::span<const int>(hist, keep), lm_id(id)));
  }

  bool token_less(const std::vector<int>& a, const std::vector<int>& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [&](int p, int q) {
      if (p < num_targets && q < num_targets) return p < q;
      return token(p) < token(q);
    });
  }
};

struct Hyp {
  double score = 0.0;
  std::uint64_t mask = 0;  // bit r: source position (step - window + r) consumed
  std::vector<int> out;
};

// Best score of a fixed output over every admissible alignment; -inf when
// none exists. The decoder rescoring and pair_logprob both use it, so a
// hypothesis gets one score however it was found.
double best_alignment(Context& ctx, const std::vector<int>& ids) {
  const DecoderSettings& st = ctx.lead.settings();
  const int len = static_cast<int>(ctx.x.size());
  const int w = st.window;
  std::vector<double> lm_terms(len);
  std::vector<int> prefix;
  for (int i = 0; i < len; ++i) {
    lm_terms[i] = ctx.lm_logprob(prefix, ids[i]);
    prefix.push_back(ids[i]);
  }
  std::map<std::uint64_t, double> states{{(std::uint64_t{1} << w) - 1, 0.0}};
  for (int i = 0; i < len; ++i) {
    std::map<std::uint64_t, double> next;
    for (const auto& [mask0, score] : states) {
      for (int j = std::max(0, i - w); j <= std::min(len - 1, i + w); ++j) {
        const int r = j - (i - w);
        if (mask0 >> r & 1) continue;
        const std::uint64_t mask = mask0 | (std::uint64_t{1} << r);
        if (!(mask & 1)) continue;
        const double lex = ctx.lex(ctx.rows[j], ids[i]);
        if (!std::isfinite(lex)) continue;
        const double v = score + step_score(lex, lm_terms[i], st.lm_weight, ctx.bias_of(ids[i]));
        auto [it, inserted] = next.emplace(mask >> 1, v);
        if (!inserted && v > it->second) it->second = v;
      }
    }
    states.swap(next);
  }
  double best = kNegInf;
  for (const auto& [mask, v] : states) best = std::max(best, v);
  return best;
}

}  // namespace

NBestList beam_search(Members members, const Sentence& x, int n) {
  check_members(members);
  if (n < 1) throw UsageError("n-best size must be >= 1");
  Context ctx(members, x);
  if (ctx.x.empty()) throw DataError("cannot translate an empty sentence");
  const DecoderSettings& st = ctx.lead.settings();
  const int len = static_cast<int>(ctx.x.size());
  const int w = st.window;

  // (target id, lexical log-probability) options per source position
  std::vector<std::vector<std::pair<int, double>>> options(len);
  for (int j = 0; j < len; ++j) {
    const int row = ctx.rows[j];
    std::vector<int> ids;
    if (row < 0) {
      ids.push_back(ctx.intern(ctx.x[j]));
    } else {
      for (const LexModel* m : members) {
        const auto& r = m->rows()[row];
        const std::size_t keep = std::min<std::size_t>(r.by_prob.size(), static_cast<std::size_t>(st.max_candidates));
        for (std::size_t c = 0; c < keep; ++c) ids.push_back(r.target[r.by_prob[c]]);
      }
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
    for (int id : ids) {
      const double lex = ctx.lex(row, id);
      if (std::isfinite(lex)) options[j].emplace_back(id, lex);
    }
  }

  std::vector<Hyp> beam(1);
  beam[0].mask = (std::uint64_t{1} << w) - 1;  // positions before 0 count as consumed
  std::vector<Hyp> cand;
  std::vector<std::pair<int, double>> lm_cache;
  for (int i = 0; i < len; ++i) {
    cand.clear();
    for (const Hyp& h : beam) {
      lm_cache.clear();
      for (int j = std::max(0, i - w); j <= std::min(len - 1, i + w); ++j) {
        const int r = j - (i - w);
        if (h.mask >> r & 1) continue;
        const std::uint64_t mask = h.mask | (std::uint64_t{1} << r);
        if (!(mask & 1)) continue;  // position i - w would become unreachable
        for (const auto& [id, lex] : options[j]) {
          double lmlp = 0.0;
          auto cached = std::find_if(lm_cache.begin(), lm_cache.end(), [&](const auto& e) { return e.first == id; });
          if (cached != lm_cache.end()) {
            lmlp = cached->second;
          } else {
            lmlp = ctx.lm_logprob(h.out, id);
            lm_cache.emplace_back(id, lmlp);
          }
          Hyp next;
          next.score = h.score + step_score(lex, lmlp, st.lm_weight, ctx.bias_of(id));
          next.mask = mask >> 1;
          next.out.reserve(h.out.size() + 1);
          next.out = h.out;
          next.out.push_back(id);
          cand.push_back(std::move(next));
        }
      }
    }
    // identical outputs with identical coverage: keep the best alignment
    std::sort(cand.begin(), cand.end(), [](const Hyp& a, const Hyp& b) {
      if (a.mask != b.mask) return a.mask < b.mask;
      if (a.out != b.out) return a.out < b.out;
      return a.score > b.score;
    });
    cand.erase(std::unique(cand.begin(), cand.end(),
                           [](const Hyp& a, const Hyp& b) { return a.mask == b.mask && a.out == b.out; }),
               cand.end());
    std::sort(cand.begin(), cand.end(), [&](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return ctx.token_less(a.out, b.out);
    });
    // every completion survives the last step, so the ranked set and its top
    // entry do not depend on n
    if (i < len - 1 && cand.size() > static_cast<std::size_t>(st.beam)) cand.resize(static_cast<std::size_t>(st.beam));
    beam.swap(cand);
  }

  // A narrow beam may have kept a weaker alignment of an output than the best
  // one; rescoring makes fwd the output's best-alignment score.
  for (Hyp& h : beam) h.score = best_alignment(ctx, h.out);
  std::sort(beam.begin(), beam.end(), [&](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return ctx.token_less(a.out, b.out);
  });

  NBestList list;
  list.source = x;
  for (const Hyp& h : beam) {
    if (list.entries.size() == static_cast<std::size_t>(n)) break;
    NBestEntry e;
    for (int id : h.out) e.hypothesis.push_back(ctx.token(id));
    e.fwd = h.score;
    list.entries.push_back(std::move(e));
  }
  return list;
}

double viterbi_score(Members members, const Sentence& x, const Sentence& y) {
  check_members(members);
  Context ctx(members, x);
  const Sentence target = strip_tag(y);
  if (ctx.x.size() != target.size())
    throw DataError("pair_logprob: hypothesis length " + std::to_string(target.size()) +
                    " differs from source length " + std::to_string(ctx.x.size()));
  std::vector<int> ids;
  for (const auto& tok : target) ids.push_back(ctx.intern(tok));
  const double best = best_alignment(ctx, ids);
  if (!std::isfinite(best)) throw DataError("pair_logprob: no admissible alignment");
  return best;
}

double ibm1_logprob(Members members, const Sentence& x, const Sentence& y) {
  check_members(members);
  const LexModel& lead = *members[0];
  const Sentence xs = strip_tag(x), ys = strip_tag(y);
  std::vector<int> rows{lead.null_row()};
  for (const auto& tok : ys) rows.push_back(source_row(lead, tok));
  const double norm = static_cast<double>(rows.size());
  double total = 0.0;
  for (const auto& tok : xs) {
    const int id = target_id(lead, tok);
    double s = 0.0;
    for (int r : rows) s += mean_t(members, r, id);
    total += std::log(s / norm);
  }
  return total;
}

double lexical_logprob(Members members, std::string_view source, std::string_view target) {
  check_members(members);
  return std::log(mean_t(members, source_row(*members[0], source), target_id(*members[0], target)));
}

}  // namespace detail

NBestList translate_nbest(const LexModel& m, const Sentence& x, int n) {
  const LexModel* members[] = {&m};
  return detail::beam_search(members, x, n);
}

double channel_score(const LexModel& m, const Sentence& x, const Sentence& y) {
  const LexModel* members[] = {&m};
  return detail::ibm1_logprob(members, x, y);
}

double pair_logprob(const LexModel& m, const Sentence& x, const Sentence& y) {
  const LexModel* members[] = {&m};
  return detail::viterbi_score(members, x, y);
}

}  // namespace stbt
