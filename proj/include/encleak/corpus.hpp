// Copyright 2026 The encleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Text ingestion, tokenization, synthetic corpus generation, MLM masking and
// attack-set partitioning.

#ifndef ENCLEAK_CORPUS_HPP_
#define ENCLEAK_CORPUS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "encleak/rng.hpp"

namespace encleak {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct SpanLabel {
  int start = 0;
  int end = 0;  // inclusive, content-token indices
  bool operator==(const SpanLabel&) const = default;
};

// Task label: absent, category index, per-token IOB2 tags, or answer span.
using TaskLabel =
    std::variant<std::monostate, int, std::vector<std::string>, SpanLabel>;

struct TextExample {
  std::string id;      // stable "<dataset>:<index>" identifier, for audit
  std::string text;    // non-empty after whitespace trim
  TaskLabel label;
  std::string source;  // originating corpus name

  bool has_label() const { return !std::holds_alternative<std::monostate>(label); }
};

inline bool same_content(const TextExample& a, const TextExample& b) {
  return a.text == b.text && a.label == b.label && a.source == b.source;
}

enum class DatasetRole {
  PreTraining,
  FineTuning,
  LocalMember,
  LocalNonMember,
  EvalMember,
  EvalNonMember,
};

inline std::string role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::PreTraining: return "pretraining";
    case DatasetRole::FineTuning: return "finetuning";
    case DatasetRole::LocalMember: return "local-member";
    case DatasetRole::LocalNonMember: return "local-nonmember";
    case DatasetRole::EvalMember: return "eval-member";
    case DatasetRole::EvalNonMember: return "eval-nonmember";
  }
  return "unknown";
}

inline DatasetRole parse_role(std::string_view s) {
  if (s == "pretraining") return DatasetRole::PreTraining;
  if (s == "finetuning") return DatasetRole::FineTuning;
  if (s == "local-member") return DatasetRole::LocalMember;
  if (s == "local-nonmember") return DatasetRole::LocalNonMember;
  if (s == "eval-member") return DatasetRole::EvalMember;
  if (s == "eval-nonmember") return DatasetRole::EvalNonMember;
  throw std::invalid_argument("unknown role tag: " + std::string(s));
}

struct Dataset {
  std::string name;
  DatasetRole role = DatasetRole::PreTraining;
  std::vector<TextExample> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  std::unordered_set<std::string> text_set() const {
    std::unordered_set<std::string> s;
    s.reserve(examples.size());
    for (const auto& e : examples) s.insert(e.text);
    return s;
  }
};

// Drops examples whose text is in `taboo` or already seen earlier in the
// dataset; keeps order.
inline Dataset dedupe(const Dataset& d,
                      const std::unordered_set<std::string>& taboo = {}) {
  Dataset out;
  out.name = d.name;
  out.role = d.role;
  std::unordered_set<std::string> seen;
  for (const auto& e : d.examples) {
    if (taboo.count(e.text) || seen.count(e.text)) continue;
    seen.insert(e.text);
    out.examples.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenization & vocabulary
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  Vocab() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) add(t);
  }

  int add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  int encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& decode(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
      throw std::out_of_range("token id out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // One token per line; line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : id_to_token_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    int idx = 0;
    while (std::getline(in, line)) {
      if (idx < kNumSpecials) {
        if (line != v.id_to_token_[static_cast<std::size_t>(idx)])
          throw std::runtime_error("vocab file corrupt: bad special token at line " +
                                   std::to_string(idx + 1));
      } else {
        v.add(line);
      }
      ++idx;
    }
    if (idx < kNumSpecials) throw std::runtime_error("vocab file corrupt: too short");
    return v;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Most frequent tokens first, ties broken lexicographically; deterministic
// for a fixed corpus.
inline Vocab build_vocab(const Dataset& corpus, int max_vocab) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  if (max_vocab < Vocab::kNumSpecials + 1) throw std::invalid_argument("vocab too small");
  std::map<std::string, std::int64_t> freq;  // ordered map: lexicographic ties for free
  for (const auto& e : corpus.examples)
    for (auto& t : tokenize(e.text)) ++freq[t];
  std::vector<std::pair<std::string, std::int64_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  const int budget = max_vocab - Vocab::kNumSpecials;
  for (int i = 0; i < budget && i < static_cast<int>(items.size()); ++i)
    v.add(items[static_cast<std::size_t>(i)].first);
  return v;
}

// ---------------------------------------------------------------------------
// Token sequences
// ---------------------------------------------------------------------------

struct TokenSequence {
  std::vector<int> ids;    // length L; position 0 is CLS, last real token SEP
  std::vector<int> mask;   // 1 for real tokens (incl. CLS/SEP), 0 for PAD
  int original_length = 0; // token count before truncation

  int length() const { return static_cast<int>(ids.size()); }
  int real_length() const {
    int n = 0;
    for (int m : mask) n += m;
    return n;
  }
};

inline TokenSequence encode_text(std::string_view text, const Vocab& vocab, int max_len) {
  if (max_len < 3) throw std::invalid_argument("sequence length must be at least 3");
  auto tokens = tokenize(text);
  TokenSequence seq;
  seq.original_length = static_cast<int>(tokens.size());
  const int keep = std::min<int>(static_cast<int>(tokens.size()), max_len - 2);
  seq.ids.reserve(static_cast<std::size_t>(max_len));
  seq.ids.push_back(Vocab::kCls);
  for (int i = 0; i < keep; ++i) seq.ids.push_back(vocab.encode(tokens[static_cast<std::size_t>(i)]));
  seq.ids.push_back(Vocab::kSep);
  seq.mask.assign(seq.ids.size(), 1);
  while (static_cast<int>(seq.ids.size()) < max_len) {
    seq.ids.push_back(Vocab::kPad);
    seq.mask.push_back(0);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

enum class CorpusStyle { A, B };

inline std::string style_name(CorpusStyle s) { return s == CorpusStyle::A ? "A" : "B"; }

inline CorpusStyle parse_style(std::string_view s) {
  if (s == "A" || s == "a") return CorpusStyle::A;
  if (s == "B" || s == "b") return CorpusStyle::B;
  throw std::invalid_argument("unknown corpus style: " + std::string(s));
}

struct GeneratorSpec {
  std::uint64_t seed = 0;
  int n_sentences = 0;
  int vocab_pool_size = 120;
  int min_len = 6;
  int max_len = 12;
  CorpusStyle style = CorpusStyle::A;
  std::string name;  // dataset name; derived from parameters when empty
};

namespace detail {

// Pseudo-word pool shared by both styles: a fixed function of the pool size
// only, so corpora from different seeds (and styles) draw on the same
// vocabulary.
inline std::vector<std::string> make_word_pool(int pool_size) {
  static constexpr std::array<const char*, 14> kOnsets = {
      "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static constexpr std::array<const char*, 5> kVowels = {"a", "e", "i", "o", "u"};
  Rng rng(derive_seed(0x77aadd11, "word-pool"));
  std::vector<std::string> pool;
  std::unordered_set<std::string> seen;
  pool.reserve(static_cast<std::size_t>(pool_size));
  while (static_cast<int>(pool.size()) < pool_size) {
    const int syllables = 2 + static_cast<int>(rng.below(2));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += kOnsets[rng.below(kOnsets.size())];
      w += kVowels[rng.below(kVowels.size())];
    }
    if (seen.insert(w).second) pool.push_back(std::move(w));
  }
  return pool;
}

// Row-stochastic transition table. Style B tilts its mass toward the upper
// half of the pool, so the two styles have visibly different unigram
// distributions while sharing one vocabulary.
struct MarkovTable {
  std::vector<double> initial;            // pool_size
  std::vector<std::vector<double>> rows;  // pool_size x pool_size
};

inline MarkovTable make_markov_table(CorpusStyle style, int pool_size) {
  Rng rng(derive_seed(0x5132cafe, style == CorpusStyle::A ? "markov.A" : "markov.B"));
  auto pref = [&](int j) {
    if (style == CorpusStyle::A) return 1.0;
    return j >= pool_size / 2 ? 3.0 : 0.5;
  };
  MarkovTable t;
  t.initial.resize(static_cast<std::size_t>(pool_size));
  double z = 0;
  for (int j = 0; j < pool_size; ++j) {
    t.initial[static_cast<std::size_t>(j)] = std::exp(1.2 * rng.uniform()) * pref(j);
    z += t.initial[static_cast<std::size_t>(j)];
  }
  for (auto& p : t.initial) p /= z;
  t.rows.resize(static_cast<std::size_t>(pool_size));
  for (int i = 0; i < pool_size; ++i) {
    auto& row = t.rows[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(pool_size));
    double rz = 0;
    for (int j = 0; j < pool_size; ++j) {
      row[static_cast<std::size_t>(j)] = std::exp(1.2 * rng.uniform()) * pref(j);
      rz += row[static_cast<std::size_t>(j)];
    }
    for (auto& p : row) p /= rz;
  }
  return t;
}

inline int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Sample restricted to a contiguous index block [lo, hi); renormalizes.
inline int sample_categorical_block(const std::vector<double>& probs, int lo, int hi,
                                    Rng& rng) {
  double z = 0;
  for (int j = lo; j < hi; ++j) z += probs[static_cast<std::size_t>(j)];
  double u = rng.uniform() * z;
  double acc = 0;
  for (int j = lo; j < hi; ++j) {
    acc += probs[static_cast<std::size_t>(j)];
    if (u < acc) return j;
  }
  return hi - 1;
}

inline std::vector<int> markov_sentence_ids(const MarkovTable& table, int len, Rng& rng,
                                            int block_lo = -1, int block_hi = -1) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(len));
  const bool restricted = block_lo >= 0;
  int cur = restricted ? sample_categorical_block(table.initial, block_lo, block_hi, rng)
                       : sample_categorical(table.initial, rng);
  out.push_back(cur);
  for (int k = 1; k < len; ++k) {
    const auto& row = table.rows[static_cast<std::size_t>(cur)];
    cur = restricted ? sample_categorical_block(row, block_lo, block_hi, rng)
                     : sample_categorical(row, rng);
    out.push_back(cur);
  }
  return out;
}

inline std::string join_words(const std::vector<std::string>& pool,
                              const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += pool[static_cast<std::size_t>(ids[i])];
  }
  return s;
}

inline std::string default_corpus_name(const GeneratorSpec& spec) {
  std::ostringstream os;
  os << "synth-" << style_name(spec.style) << "-s" << spec.seed;
  return os.str();
}

}  // namespace detail

inline std::vector<std::string> generator_word_pool(const GeneratorSpec& spec) {
  return detail::make_word_pool(spec.vocab_pool_size);
}

// Seeded Markov-chain sentences over a shared word pool; pure in `spec`.
inline Dataset generate_synthetic_corpus(const GeneratorSpec& spec) {
  if (spec.n_sentences < 1) throw std::invalid_argument("n_sentences must be >= 1");
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw std::invalid_argument("bad length range");
  const auto pool = detail::make_word_pool(spec.vocab_pool_size);
  const auto table = detail::make_markov_table(spec.style, spec.vocab_pool_size);
  Rng rng(derive_seed(spec.seed, spec.style == CorpusStyle::A ? "gen.A" : "gen.B"));
  Dataset d;
  d.name = spec.name.empty() ? detail::default_corpus_name(spec) : spec.name;
  d.role = DatasetRole::PreTraining;
  d.examples.reserve(static_cast<std::size_t>(spec.n_sentences));
  for (int i = 0; i < spec.n_sentences; ++i) {
    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    const auto ids = detail::markov_sentence_ids(table, len, rng);
    TextExample e;
    e.id = d.name + ":" + std::to_string(i);
    e.text = detail::join_words(pool, ids);
    e.source = d.name;
    d.examples.push_back(std::move(e));
  }
  return d;
}

// Topic-labelled classification corpus: each sentence is drawn from one of
// n_categories contiguous blocks of the shared pool; the block index is the
// label.
inline Dataset generate_classification_corpus(const GeneratorSpec& spec, int n_categories) {
  if (n_categories < 2) throw std::invalid_argument("n_categories must be >= 2");
  if (spec.vocab_pool_size / n_categories < 4)
    throw std::invalid_argument("pool too small for topic blocks");
  const auto pool = detail::make_word_pool(spec.vocab_pool_size);
  const auto table = detail::make_markov_table(spec.style, spec.vocab_pool_size);
  Rng rng(derive_seed(spec.seed, "gen.classification"));
  const int block = spec.vocab_pool_size / n_categories;
  Dataset d;
  d.name = spec.name.empty() ? detail::default_corpus_name(spec) + "-cls" : spec.name;
  d.role = DatasetRole::FineTuning;
  for (int i = 0; i < spec.n_sentences; ++i) {
    const int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_categories)));
    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    const int lo = topic * block;
    const int hi = topic == n_categories - 1 ? spec.vocab_pool_size : lo + block;
    const auto ids = detail::markov_sentence_ids(table, len, rng, lo, hi);
    TextExample e;
    e.id = d.name + ":" + std::to_string(i);
    e.text = detail::join_words(pool, ids);
    e.label = topic;
    e.source = d.name;
    d.examples.push_back(std::move(e));
  }
  return d;
}

inline const std::array<std::string, 9>& iob2_tags() {
  static const std::array<std::string, 9> kTags = {
      "O",     "B-PER", "I-PER", "B-ORG", "I-ORG",
      "B-LOC", "I-LOC", "B-MISC", "I-MISC"};
  return kTags;
}

inline int tag_index(const std::string& tag) {
  const auto& tags = iob2_tags();
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == tag) return static_cast<int>(i);
  throw std::invalid_argument("unknown IOB2 tag: " + tag);
}

// Token-tagging corpus: entity phrases are injected from a reserved slice of
// the pool (six words per entity type), everything else is tagged O.
inline Dataset generate_tagging_corpus(const GeneratorSpec& spec) {
  constexpr int kTypes = 4;
  constexpr int kWordsPerType = 6;
  const int reserve = kTypes * kWordsPerType;
  if (spec.vocab_pool_size < reserve + 8)
    throw std::invalid_argument("pool too small for entity words");
  const auto pool = detail::make_word_pool(spec.vocab_pool_size);
  const auto table = detail::make_markov_table(spec.style, spec.vocab_pool_size);
  Rng rng(derive_seed(spec.seed, "gen.tagging"));
  const int entity_base = spec.vocab_pool_size - reserve;
  Dataset d;
  d.name = spec.name.empty() ? detail::default_corpus_name(spec) + "-ner" : spec.name;
  d.role = DatasetRole::FineTuning;
  for (int i = 0; i < spec.n_sentences; ++i) {
    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    // Base sentence stays below the reserved slice.
    auto ids = detail::markov_sentence_ids(table, len, rng, 0, entity_base);
    std::vector<std::string> tags(ids.size(), "O");
    const int n_entities = 1 + static_cast<int>(rng.below(2));
    for (int k = 0; k < n_entities; ++k) {
      const int type = static_cast<int>(rng.below(kTypes));
      const int span = 1 + static_cast<int>(rng.below(2));
      const int pos = static_cast<int>(rng.below(ids.size() + 1));
      std::vector<int> ent;
      std::vector<std::string> ent_tags;
      for (int t = 0; t < span; ++t) {
        ent.push_back(entity_base + type * kWordsPerType +
                      static_cast<int>(rng.below(kWordsPerType)));
        const auto& names = iob2_tags();
        ent_tags.push_back(t == 0 ? names[static_cast<std::size_t>(1 + 2 * type)]
                                  : names[static_cast<std::size_t>(2 + 2 * type)]);
      }
      ids.insert(ids.begin() + pos, ent.begin(), ent.end());
      tags.insert(tags.begin() + pos, ent_tags.begin(), ent_tags.end());
    }
    TextExample e;
    e.id = d.name + ":" + std::to_string(i);
    e.text = detail::join_words(pool, ids);
    e.label = tags;
    e.source = d.name;
    d.examples.push_back(std::move(e));
  }
  return d;
}

// Span-extraction corpus: a marker phrase from the reserved slice is inserted
// at a random position; the label is its content-token span.
inline Dataset generate_qa_corpus(const GeneratorSpec& spec) {
  constexpr int kMarkerWords = 24;
  if (spec.vocab_pool_size < kMarkerWords + 8)
    throw std::invalid_argument("pool too small for marker words");
  const auto pool = detail::make_word_pool(spec.vocab_pool_size);
  const auto table = detail::make_markov_table(spec.style, spec.vocab_pool_size);
  Rng rng(derive_seed(spec.seed, "gen.qa"));
  const int marker_base = spec.vocab_pool_size - kMarkerWords;
  Dataset d;
  d.name = spec.name.empty() ? detail::default_corpus_name(spec) + "-qa" : spec.name;
  d.role = DatasetRole::FineTuning;
  for (int i = 0; i < spec.n_sentences; ++i) {
    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    auto ids = detail::markov_sentence_ids(table, len, rng, 0, marker_base);
    const int span = 1 + static_cast<int>(rng.below(2));
    const int pos = static_cast<int>(rng.below(ids.size() + 1));
    std::vector<int> marker;
    for (int t = 0; t < span; ++t)
      marker.push_back(marker_base + static_cast<int>(rng.below(kMarkerWords)));
    ids.insert(ids.begin() + pos, marker.begin(), marker.end());
    TextExample e;
    e.id = d.name + ":" + std::to_string(i);
    e.text = detail::join_words(pool, ids);
    e.label = SpanLabel{pos, pos + span - 1};
    e.source = d.name;
    d.examples.push_back(std::move(e));
  }
  return d;
}

// ---------------------------------------------------------------------------
// MLM masking
// ---------------------------------------------------------------------------

struct MaskedBatch {
  static constexpr int kIgnore = -1;
  std::vector<std::vector<int>> input_ids;
  std::vector<std::vector<int>> target_ids;  // kIgnore at unmasked positions
  std::vector<std::vector<int>> masks;       // attention masks

  std::size_t size() const { return input_ids.size(); }
};

// BERT-style 80/10/10 masking; every sequence gets at least one selected
// position (forced uniformly when the independent draws select none).
inline MaskedBatch make_mlm_batch(const std::vector<TokenSequence>& sequences,
                                  double mask_prob, std::uint64_t rng_seed,
                                  int vocab_size) {
  if (!(mask_prob > 0.0 && mask_prob < 1.0))
    throw std::invalid_argument("mask_prob must be in (0, 1)");
  Rng rng(derive_seed(rng_seed, "mlm.mask"));
  MaskedBatch batch;
  batch.input_ids.reserve(sequences.size());
  batch.target_ids.reserve(sequences.size());
  batch.masks.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<int> eligible;
    for (std::size_t p = 0; p < seq.ids.size(); ++p) {
      if (seq.mask[p] == 1 && seq.ids[p] != Vocab::kCls && seq.ids[p] != Vocab::kSep)
        eligible.push_back(static_cast<int>(p));
    }
    if (eligible.empty()) throw std::invalid_argument("nothing to mask");
    std::vector<int> input = seq.ids;
    std::vector<int> target(seq.ids.size(), MaskedBatch::kIgnore);
    std::vector<int> selected;
    for (int p : eligible)
      if (rng.bernoulli(mask_prob)) selected.push_back(p);
    if (selected.empty())
      selected.push_back(eligible[rng.below(eligible.size())]);
    for (int p : selected) {
      const auto up = static_cast<std::size_t>(p);
      target[up] = seq.ids[up];
      const double r = rng.uniform();
      if (r < 0.8) {
        input[up] = Vocab::kMask;
      } else if (r < 0.9) {
        input[up] = Vocab::kNumSpecials +
                    static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(vocab_size - Vocab::kNumSpecials)));
      }  // else: keep original token
    }
    batch.input_ids.push_back(std::move(input));
    batch.target_ids.push_back(std::move(target));
    batch.masks.push_back(seq.mask);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Attack-set partitioning
// ---------------------------------------------------------------------------

struct SplitRatio {
  int train = 5;
  int eval = 1;
};

inline SplitRatio parse_ratio(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("ratio must look like 'a:b'");
  SplitRatio r;
  r.train = std::stoi(std::string(s.substr(0, colon)));
  r.eval = std::stoi(std::string(s.substr(colon + 1)));
  if (r.train <= 0 || r.eval <= 0)
    throw std::invalid_argument("ratio parts must be positive");
  return r;
}

struct AttackSplit {
  Dataset member_train;
  Dataset nonmember_train;
  Dataset member_eval;   // balanced against nonmember_eval, exactly 1:1
  Dataset nonmember_eval;
};

namespace detail {

struct ClassSplit {
  std::vector<std::size_t> train, eval;
};

inline ClassSplit split_indices(std::size_t n, SplitRatio ratio, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  const std::size_t train_n =
      n * static_cast<std::size_t>(ratio.train) /
      static_cast<std::size_t>(ratio.train + ratio.eval);
  if (train_n == 0 || train_n == n) throw std::invalid_argument("degenerate split");
  ClassSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_n));
  s.eval.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_n), idx.end());
  return s;
}

inline Dataset take(const Dataset& src, const std::vector<std::size_t>& idx,
                    const std::string& name, DatasetRole role) {
  Dataset d;
  d.name = name;
  d.role = role;
  d.examples.reserve(idx.size());
  for (auto i : idx) d.examples.push_back(src.examples[i]);
  return d;
}

}  // namespace detail

// Shuffled per-class split at `ratio`; the eval side is rebalanced to exactly
// 1:1 member:non-member by truncating the larger (already shuffled) side.
inline AttackSplit partition_attack_data(const Dataset& s_pre, const Dataset& s_non,
                                         SplitRatio ratio, std::uint64_t rng_seed) {
  if (s_pre.empty() || s_non.empty())
    throw std::invalid_argument("attack sets must be non-empty");
  Rng member_rng(derive_seed(rng_seed, "partition.member"));
  Rng nonmember_rng(derive_seed(rng_seed, "partition.nonmember"));
  auto ms = detail::split_indices(s_pre.size(), ratio, member_rng);
  auto ns = detail::split_indices(s_non.size(), ratio, nonmember_rng);
  const std::size_t eval_n = std::min(ms.eval.size(), ns.eval.size());
  ms.eval.resize(eval_n);
  ns.eval.resize(eval_n);
  AttackSplit split;
  split.member_train = detail::take(s_pre, ms.train, s_pre.name + "-train", DatasetRole::LocalMember);
  split.nonmember_train = detail::take(s_non, ns.train, s_non.name + "-train", DatasetRole::LocalNonMember);
  split.member_eval = detail::take(s_pre, ms.eval, s_pre.name + "-eval", DatasetRole::EvalMember);
  split.nonmember_eval = detail::take(s_non, ns.eval, s_non.name + "-eval", DatasetRole::EvalNonMember);
  return split;
}

// ---------------------------------------------------------------------------
// JSONL I/O
// ---------------------------------------------------------------------------

namespace detail {

inline TaskLabel parse_label(const json& j, int line_no) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number_integer()) return static_cast<int>(j.get<std::int64_t>());
  if (j.is_array()) {
    std::vector<std::string> tags;
    for (const auto& t : j) {
      if (!t.is_string())
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad label");
      tags.push_back(t.get<std::string>());
    }
    return tags;
  }
  if (j.is_object()) {
    if (!j.contains("start") || !j.contains("end"))
      throw std::runtime_error("line " + std::to_string(line_no) + ": bad label");
    SpanLabel s{j["start"].get<int>(), j["end"].get<int>()};
    if (s.start < 0 || s.end < s.start)
      throw std::runtime_error("line " + std::to_string(line_no) + ": bad span");
    return s;
  }
  throw std::runtime_error("line " + std::to_string(line_no) + ": bad label");
}

inline json label_to_json(const TaskLabel& label) {
  if (std::holds_alternative<std::monostate>(label)) return nullptr;
  if (const int* c = std::get_if<int>(&label)) return *c;
  if (const auto* tags = std::get_if<std::vector<std::string>>(&label)) return *tags;
  const auto& span = std::get<SpanLabel>(label);
  return json{{"start", span.start}, {"end", span.end}};
}

}  // namespace detail

inline Dataset load_jsonl(const std::string& path, const std::string& name,
                          DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  Dataset d;
  d.name = name;
  d.role = role;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (!j.contains("text"))
      throw std::runtime_error("line " + std::to_string(line_no) + ": missing field text");
    TextExample e;
    e.text = trim(j["text"].get<std::string>());
    if (e.text.empty())
      throw std::runtime_error("line " + std::to_string(line_no) + ": empty text");
    e.label = detail::parse_label(j.contains("label") ? j["label"] : json(nullptr), line_no);
    e.source = j.value("source", name);
    e.id = name + ":" + std::to_string(d.examples.size());
    d.examples.push_back(std::move(e));
  }
  return d;
}

inline void save_jsonl(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& e : d.examples) {
    json j{{"text", e.text},
           {"label", detail::label_to_json(e.label)},
           {"source", e.source}};
    out << j.dump() << '\n';
  }
}

struct PairedParaphrases {
  Dataset members;      // original pre-training sentences
  Dataset paraphrases;  // aligned rewrites, same index order
};

// {"member_text": ..., "paraphrase_text": ...} per line.
inline PairedParaphrases load_paired_paraphrases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pairs file: " + path);
  PairedParaphrases pairs;
  pairs.members.name = "pairs-member";
  pairs.members.role = DatasetRole::EvalMember;
  pairs.paraphrases.name = "pairs-paraphrase";
  pairs.paraphrases.role = DatasetRole::EvalNonMember;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": invalid JSON");
    }
    for (const char* field : {"member_text", "paraphrase_text"})
      if (!j.contains(field))
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": missing field " + field);
    const auto idx = pairs.members.size();
    TextExample m;
    m.id = "pairs:" + std::to_string(idx) + ":m";
    m.text = trim(j["member_text"].get<std::string>());
    m.source = pairs.members.name;
    TextExample p;
    p.id = "pairs:" + std::to_string(idx) + ":p";
    p.text = trim(j["paraphrase_text"].get<std::string>());
    p.source = pairs.paraphrases.name;
    if (m.text.empty() || p.text.empty())
      throw std::runtime_error("line " + std::to_string(line_no) + ": empty text");
    pairs.members.examples.push_back(std::move(m));
    pairs.paraphrases.examples.push_back(std::move(p));
  }
  return pairs;
}

inline void save_paired_paraphrases(const PairedParaphrases& pairs,
                                    const std::string& path) {
  if (pairs.members.size() != pairs.paraphrases.size())
    throw std::invalid_argument("pairs are not aligned");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pairs file: " + path);
  for (std::size_t i = 0; i < pairs.members.size(); ++i) {
    json j{{"member_text", pairs.members.examples[i].text},
           {"paraphrase_text", pairs.paraphrases.examples[i].text}};
    out << j.dump() << '\n';
  }
}

}  // namespace encleak

#endif  // ENCLEAK_CORPUS_HPP_
