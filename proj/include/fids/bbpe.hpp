#pragma once

// Byte-level byte-pair encoding. The base alphabet is all 256 byte values,
// so any input round-trips losslessly. Ids: PAD=0, CLS=1, SEP=2, UNK=3,
// bytes at 4..259, merged tokens from 260 upward in training order.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace fids {

struct TokenizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kPadId = 0;
constexpr std::uint32_t kClsId = 1;
constexpr std::uint32_t kSepId = 2;
constexpr std::uint32_t kUnkId = 3;
constexpr std::uint32_t kByteOffset = 4;
constexpr std::uint32_t kBaseVocab = 260;

struct MergeRule {
  std::uint32_t left;
  std::uint32_t right;
  std::uint32_t result;
};

struct TokenizerModel {
  std::vector<MergeRule> merges;
  std::size_t target_vocab_size = kBaseVocab;

  std::size_t vocab_size() const { return kBaseVocab + merges.size(); }
};

struct Encoding {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> mask;  // 1 for real tokens, 0 for PAD
};

namespace detail {

inline std::vector<std::uint32_t> to_byte_tokens(const std::string& text) {
  std::vector<std::uint32_t> ids;
  ids.reserve(text.size());
  for (unsigned char ch : text) ids.push_back(kByteOffset + ch);
  return ids;
}

// One exhaustive left-to-right pass of a single merge rule.
inline void apply_merge(std::vector<std::uint32_t>& ids, const MergeRule& m) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < ids.size();) {
    if (i + 1 < ids.size() && ids[i] == m.left && ids[i + 1] == m.right) {
      ids[out++] = m.result;
      i += 2;
    } else {
      ids[out++] = ids[i++];
    }
  }
  ids.resize(out);
}

}  // namespace detail

// Greedy BPE training: repeatedly merge the most frequent adjacent pair
// until the vocabulary reaches the target size or no pair occurs twice.
// Ties break by lexicographic (left_id, right_id).
inline TokenizerModel train_vocab(const std::vector<std::string>& corpus,
                                  std::size_t target_vocab_size) {
  if (corpus.empty()) throw TokenizerError("train_vocab: empty corpus");
  if (target_vocab_size < kBaseVocab)
    throw TokenizerError("train_vocab: target vocab " + std::to_string(target_vocab_size) +
                         " below byte floor " + std::to_string(kBaseVocab));
  TokenizerModel model;
  model.target_vocab_size = target_vocab_size;

  std::vector<std::vector<std::uint32_t>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) seqs.push_back(detail::to_byte_tokens(s));

  while (model.vocab_size() < target_vocab_size) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> counts;
    for (const auto& seq : seqs)
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
    std::pair<std::uint32_t, std::uint32_t> best{};
    std::size_t best_count = 0;
    // std::map iterates in key order, so the first maximum is the
    // lexicographically smallest pair.
    for (const auto& [pair, n] : counts) {
      if (n > best_count) {
        best = pair;
        best_count = n;
      }
    }
    if (best_count < 2) break;
    const MergeRule rule{best.first, best.second,
                         static_cast<std::uint32_t>(model.vocab_size())};
    model.merges.push_back(rule);
    for (auto& seq : seqs) detail::apply_merge(seq, rule);
  }
  return model;
}

// Byte-tokenize, apply merges in training order, prepend CLS, then pad or
// truncate to max_len.
inline Encoding encode(const std::string& text, const TokenizerModel& model,
                       std::size_t max_len) {
  if (max_len < 2) throw TokenizerError("encode: max_len must be >= 2");
  auto ids = detail::to_byte_tokens(text);
  if (!ids.empty()) {
    std::unordered_set<std::uint32_t> present(ids.begin(), ids.end());
    for (const auto& m : model.merges) {
      if (!present.count(m.left) || !present.count(m.right)) continue;
      detail::apply_merge(ids, m);
      present.insert(m.result);
    }
  }
  Encoding enc;
  enc.ids.reserve(max_len);
  enc.ids.push_back(kClsId);
  for (auto id : ids) {
    if (enc.ids.size() == max_len) break;
    enc.ids.push_back(id);
  }
  enc.mask.assign(enc.ids.size(), 1);
  while (enc.ids.size() < max_len) {
    enc.ids.push_back(kPadId);
    enc.mask.push_back(0);
  }
  return enc;
}

// Inverse of encode minus specials and padding. Ids outside the vocabulary
// decode to the UTF-8 replacement character.
inline std::string decode(const std::vector<std::uint32_t>& ids, const TokenizerModel& model) {
  // Expansion table: merged id -> byte string.
  std::vector<std::string> table(model.vocab_size());
  for (std::uint32_t b = 0; b < 256; ++b) table[kByteOffset + b] = std::string(1, char(b));
  for (const auto& m : model.merges) table[m.result] = table[m.left] + table[m.right];
  std::string out;
  for (auto id : ids) {
    if (id == kPadId || id == kClsId || id == kSepId) continue;
    if (id == kUnkId || id >= model.vocab_size() || (id < kByteOffset))
      out += "\xEF\xBF\xBD";
    else
      out += table[id];
  }
  return out;
}

// Text serialization: line 1 "bbpe-v1 <vocab_size>", one merge per line.
inline std::string serialize_tokenizer(const TokenizerModel& model) {
  std::ostringstream oss;
  oss << "bbpe-v1 " << model.vocab_size() << "\n";
  for (const auto& m : model.merges) oss << m.left << " " << m.right << " " << m.result << "\n";
  return oss.str();
}

inline TokenizerModel parse_tokenizer(std::istream& in) {
  std::string magic;
  std::size_t vocab = 0;
  if (!(in >> magic >> vocab) || magic != "bbpe-v1")
    throw TokenizerError("tokenizer file: bad header");
  TokenizerModel model;
  model.target_vocab_size = vocab;
  std::uint32_t l, r, id;
  while (in >> l >> r >> id) {
    if (id != kBaseVocab + model.merges.size() || l >= id || r >= id)
      throw TokenizerError("tokenizer file: invalid merge line for id " + std::to_string(id));
    model.merges.push_back({l, r, id});
  }
  if (model.vocab_size() != vocab)
    throw TokenizerError("tokenizer file: merge count does not match declared vocab size");
  return model;
}

inline void save_tokenizer(const TokenizerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TokenizerError("cannot write " + path);
  out << serialize_tokenizer(model);
}

inline TokenizerModel load_tokenizer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizerError("cannot read " + path);
  return parse_tokenizer(in);
}

}  // namespace fids
