#pragma once

// Flow-dataset pipeline: CSV ingestion, privacy hashing, stratified
// splitting, tokenized example construction and the synthetic desk-scale
// generator.

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fids/bbpe.hpp"
#include "fids/rng.hpp"
#include "nlohmann/json.hpp"

namespace fids {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FlowRecord {
  std::vector<std::pair<std::string, std::string>> fields;  // header order
  std::string label;
};

struct LabeledExample {
  std::vector<std::uint32_t> token_ids;
  std::vector<std::uint8_t> mask;
  std::size_t label_id = 0;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<std::size_t> train_counts;  // parallel to class_names
  std::vector<std::size_t> test_counts;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::string source_digest;

  nlohmann::json to_json() const {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t i = 0; i < class_names.size(); ++i)
      per_class[class_names[i]] = {{"train", train_counts[i]}, {"test", test_counts[i]}};
    return {{"class_names", class_names},
            {"counts", per_class},
            {"seed", seed},
            {"train_fraction", train_fraction},
            {"source_sha256", source_digest}};
  }
};

inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (!EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr))
    throw DataError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

inline std::string sha256_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_DigestFinal_ex(ctx, digest, &digest_len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace detail {

// RFC-4180 CSV: quoted fields, "" escapes, CR/LF line ends.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (field_started || !field.empty() || !row.empty()) {
      end_field();
      rows.push_back(std::move(row));
      row.clear();
    }
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
      field_started = true;  // next field exists even if empty
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      // swallow; LF (if any) ends the row
      if (in.peek() != '\n') end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  end_row();
  return rows;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

inline bool default_dropped(const std::string& column) {
  return column == "Timestamp" || lower(column).find("time") != std::string::npos;
}

// Group record indices by label, in first-appearance order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_class(
    const std::vector<FlowRecord>& records) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = pos.find(records[i].label);
    if (it == pos.end()) {
      pos[records[i].label] = groups.size();
      groups.push_back({records[i].label, {i}});
    } else {
      groups[it->second].second.push_back(i);
    }
  }
  return groups;
}

}  // namespace detail

struct LoadOptions {
  std::string label_column = "Attack_type";
  std::vector<std::string> extra_drop_columns;
  double fraction = 1.0;  // seeded stratified subsample when < 1
  std::uint64_t seed = 0;
};

inline std::vector<FlowRecord> load_csv(const std::string& path, const LoadOptions& opt = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  auto rows = detail::parse_csv(in);
  if (rows.empty()) throw DataError(path + ": no header row");
  const auto& header = rows[0];
  std::ptrdiff_t label_idx = -1;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == opt.label_column) {
      label_idx = static_cast<std::ptrdiff_t>(i);
      continue;
    }
    if (detail::default_dropped(header[i])) continue;
    if (std::find(opt.extra_drop_columns.begin(), opt.extra_drop_columns.end(), header[i]) !=
        opt.extra_drop_columns.end())
      continue;
    keep.push_back(i);
  }
  if (label_idx < 0)
    throw DataError(path + ": label column '" + opt.label_column + "' not found");

  std::vector<FlowRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw DataError(path + ": line " + std::to_string(r + 1) + " has " +
                      std::to_string(rows[r].size()) + " fields, expected " +
                      std::to_string(header.size()));
    FlowRecord rec;
    rec.fields.reserve(keep.size());
    for (auto i : keep) rec.fields.push_back({header[i], rows[r][i]});
    rec.label = rows[r][static_cast<std::size_t>(label_idx)];
    records.push_back(std::move(rec));
  }

  if (opt.fraction < 1.0) {
    if (opt.fraction <= 0.0) throw DataError("fraction must be in (0, 1]");
    std::vector<std::uint8_t> selected(records.size(), 0);
    for (auto& [label, idx] : detail::group_by_class(records)) {
      Rng rng(mix_seed(opt.seed, std::hash<std::string>{}(label)));
      rng.shuffle(idx);
      const auto take = static_cast<std::size_t>(
          std::llround(opt.fraction * static_cast<double>(idx.size())));
      for (std::size_t i = 0; i < take && i < idx.size(); ++i) selected[idx[i]] = 1;
    }
    std::vector<FlowRecord> sub;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (selected[i]) sub.push_back(std::move(records[i]));
    records = std::move(sub);
  }
  return records;
}

// Privacy hashing: each field becomes the first 8 lowercase hex characters
// of SHA-256("name=value"); field digests join with single spaces.
inline std::string hash_encode(const FlowRecord& record) {
  if (record.fields.empty()) throw DataError("hash_encode: record has no fields");
  std::string out;
  out.reserve(record.fields.size() * 9);
  for (const auto& [name, value] : record.fields) {
    if (!out.empty()) out.push_back(' ');
    out += sha256_hex(name + "=" + value).substr(0, 8);
  }
  return out;
}

struct SplitResult {
  std::vector<FlowRecord> train;
  std::vector<FlowRecord> test;
  DatasetManifest manifest;
};

// Stratified split: per class, floor(train_fraction * n) to train after a
// seeded in-class shuffle, remainder to test.
inline SplitResult split_train_test(const std::vector<FlowRecord>& records,
                                    double train_fraction = 0.8, std::uint64_t seed = 0) {
  if (records.empty()) throw DataError("split_train_test: no records");
  SplitResult res;
  res.manifest.seed = seed;
  res.manifest.train_fraction = train_fraction;
  for (auto& [label, idx] : detail::group_by_class(records)) {
    auto shuffled = idx;
    Rng rng(mix_seed(seed, std::hash<std::string>{}(label)));
    rng.shuffle(shuffled);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(idx.size()) + 1e-9));
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      (i < n_train ? res.train : res.test).push_back(records[shuffled[i]]);
    res.manifest.class_names.push_back(label);
    res.manifest.train_counts.push_back(n_train);
    res.manifest.test_counts.push_back(idx.size() - n_train);
  }
  return res;
}

inline std::size_t class_id(const std::vector<std::string>& class_names,
                            const std::string& label) {
  auto it = std::find(class_names.begin(), class_names.end(), label);
  if (it == class_names.end()) throw DataError("unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - class_names.begin());
}

inline std::vector<LabeledExample> build_examples(const std::vector<FlowRecord>& records,
                                                  const TokenizerModel& tokenizer,
                                                  const std::vector<std::string>& class_names,
                                                  std::size_t seq_len) {
  std::vector<LabeledExample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    LabeledExample ex;
    ex.label_id = class_id(class_names, rec.label);
    auto enc = encode(hash_encode(rec), tokenizer, seq_len);
    ex.token_ids = std::move(enc.ids);
    ex.mask = std::move(enc.mask);
    out.push_back(std::move(ex));
  }
  return out;
}

struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t num_fields = 12;
  std::size_t rows_per_class = 500;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

// Each class owns a signature value per field; a row reproduces the
// signature, flipping each field to a uniformly random vocabulary value
// with probability `noise`. noise=0 is separable by construction, noise=1
// carries no label signal.
inline void generate_synthetic(const SyntheticSpec& spec, std::ostream& out) {
  if (spec.num_classes < 2 || spec.num_fields < 2)
    throw DataError("generate_synthetic: need >= 2 classes and >= 2 fields");
  if (spec.noise < 0.0 || spec.noise > 1.0)
    throw DataError("generate_synthetic: noise must be in [0,1]");
  constexpr std::size_t kFieldVocab = 16;
  Rng rng(mix_seed(spec.seed, 0x73796e7468ULL));
  std::vector<std::vector<std::size_t>> sig(spec.num_classes,
                                            std::vector<std::size_t>(spec.num_fields));
  for (auto& row : sig)
    for (auto& v : row) v = rng.uniform_below(kFieldVocab);

  for (std::size_t f = 0; f < spec.num_fields; ++f) out << "f" << f << ",";
  out << "Attack_type\n";
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t r = 0; r < spec.rows_per_class; ++r) {
      for (std::size_t f = 0; f < spec.num_fields; ++f) {
        std::size_t v = sig[c][f];
        if (rng.uniform() < spec.noise) v = rng.uniform_below(kFieldVocab);
        out << "v" << (v < 10 ? "0" : "") << v << ",";
      }
      out << "class_" << c << "\n";
    }
  }
}

inline void generate_synthetic_file(const SyntheticSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  generate_synthetic(spec, out);
}

}  // namespace fids
