#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "fids/bbpe.hpp"
#include "fids/rng.hpp"

using namespace fids;

TEST_CASE("special token ids are fixed") {
  CHECK(kPadId == 0);
  CHECK(kClsId == 1);
  CHECK(kSepId == 2);
  CHECK(kUnkId == 3);
  CHECK(kByteOffset == 4);
  CHECK(kBaseVocab == 260);
}

TEST_CASE("base model encodes bytes shifted by the special block") {
  TokenizerModel base;  // no merges
  auto enc = encode("ab", base, 8);
  CHECK(enc.ids == std::vector<std::uint32_t>{kClsId, 'a' + 4, 'b' + 4, 0, 0, 0, 0, 0});
  CHECK(enc.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0, 0, 0});
}

TEST_CASE("training learns the most frequent pair first") {
  // "aaab" x3: pair (a,a) occurs 6 times, (a,b) 3 times.
  std::vector<std::string> corpus(3, "aaab");
  auto model = train_vocab(corpus, kBaseVocab + 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0].left == 'a' + 4);
  CHECK(model.merges[0].right == 'a' + 4);
  CHECK(model.merges[0].result == 260);
}

TEST_CASE("frequency ties break toward the smaller pair") {
  // "ab" and "cd" both occur twice and never overlap.
  std::vector<std::string> corpus = {"ab", "cd", "ab", "cd"};
  auto model = train_vocab(corpus, kBaseVocab + 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0].left == 'a' + 4);
  CHECK(model.merges[0].right == 'b' + 4);
}

TEST_CASE("training stops when no pair repeats") {
  std::vector<std::string> corpus = {"abcdef"};
  auto model = train_vocab(corpus, 10000);
  // Every adjacent pair occurs once only after the singleton merges run out.
  CHECK(model.vocab_size() < 10000);
  for (const auto& m : model.merges) {
    CHECK(m.result >= kBaseVocab);
    CHECK(m.left < m.result);
    CHECK(m.right < m.result);
  }
}

TEST_CASE("training rejects bad inputs") {
  CHECK_THROWS_AS(train_vocab({}, 300), TokenizerError);
  CHECK_THROWS_AS(train_vocab({"abc"}, 259), TokenizerError);
}

TEST_CASE("encode applies merges recursively") {
  // Corpus of repeated "abab" trains (a,b)->260 then (260,260)->261.
  std::vector<std::string> corpus(5, "abab");
  auto model = train_vocab(corpus, kBaseVocab + 2);
  REQUIRE(model.merges.size() == 2);
  CHECK(model.merges[1].left == 260);
  CHECK(model.merges[1].right == 260);
  auto enc = encode("abab", model, 4);
  CHECK(enc.ids == std::vector<std::uint32_t>{kClsId, 261, 0, 0});
}

TEST_CASE("round trip over arbitrary bytes") {
  Rng rng(99);
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) {
    std::string s;
    for (int j = 0; j < 30; ++j) s += char(rng.uniform_below(256));
    corpus.push_back(s);
  }
  auto model = train_vocab(corpus, 300);
  for (const auto& s : corpus) {
    auto enc = encode(s, model, 128);
    CHECK(decode(enc.ids, model) == s);
  }
}

TEST_CASE("truncation keeps CLS plus a max_len-1 prefix") {
  TokenizerModel base;
  auto enc = encode("abcdef", base, 4);
  CHECK(enc.ids == std::vector<std::uint32_t>{kClsId, 'a' + 4, 'b' + 4, 'c' + 4});
  CHECK(enc.mask == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(decode(enc.ids, base) == "abc");
  CHECK_THROWS_AS(encode("x", base, 1), TokenizerError);
}

TEST_CASE("empty string encodes to CLS plus padding") {
  TokenizerModel base;
  auto enc = encode("", base, 3);
  CHECK(enc.ids == std::vector<std::uint32_t>{kClsId, kPadId, kPadId});
  CHECK(enc.mask == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(decode(enc.ids, base).empty());
}

TEST_CASE("decode maps unknown and reserved ids to the replacement character") {
  TokenizerModel base;
  CHECK(decode({kUnkId}, base) == "\xEF\xBF\xBD");
  CHECK(decode({9999}, base) == "\xEF\xBF\xBD");
}

TEST_CASE("serialization round trips") {
  std::vector<std::string> corpus(6, "the quick brown fox the quick");
  auto model = train_vocab(corpus, 280);
  REQUIRE(!model.merges.empty());

  const std::string text = serialize_tokenizer(model);
  CHECK(text.rfind("bbpe-v1 " + std::to_string(model.vocab_size()), 0) == 0);

  std::istringstream in(text);
  auto back = parse_tokenizer(in);
  REQUIRE(back.merges.size() == model.merges.size());
  for (std::size_t i = 0; i < model.merges.size(); ++i) {
    CHECK(back.merges[i].left == model.merges[i].left);
    CHECK(back.merges[i].right == model.merges[i].right);
    CHECK(back.merges[i].result == model.merges[i].result);
  }
  auto a = encode("the quick brown fox", model, 32);
  auto b = encode("the quick brown fox", back, 32);
  CHECK(a.ids == b.ids);
}

TEST_CASE("parser rejects malformed files") {
  {
    std::istringstream in("nope 260\n");
    CHECK_THROWS_AS(parse_tokenizer(in), TokenizerError);
  }
  {
    // Merge id out of sequence.
    std::istringstream in("bbpe-v1 261\n5 6 300\n");
    CHECK_THROWS_AS(parse_tokenizer(in), TokenizerError);
  }
  {
    // Declared vocab disagrees with merge count.
    std::istringstream in("bbpe-v1 262\n5 6 260\n");
    CHECK_THROWS_AS(parse_tokenizer(in), TokenizerError);
  }
  {
    // Rule referencing an id not yet defined.
    std::istringstream in("bbpe-v1 261\n261 6 260\n");
    CHECK_THROWS_AS(parse_tokenizer(in), TokenizerError);
  }
}

TEST_CASE("training is deterministic") {
  std::vector<std::string> corpus = {"proto=tcp dur=12", "proto=udp dur=7", "proto=tcp dur=3"};
  auto a = train_vocab(corpus, 290);
  auto b = train_vocab(corpus, 290);
  REQUIRE(a.merges.size() == b.merges.size());
  for (std::size_t i = 0; i < a.merges.size(); ++i) {
    CHECK(a.merges[i].left == b.merges[i].left);
    CHECK(a.merges[i].right == b.merges[i].right);
  }
}
