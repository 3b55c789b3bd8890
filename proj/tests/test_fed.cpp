#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "fids/fed.hpp"
#include "fids/flow.hpp"

using namespace fids;

namespace {

ModelConfig mini() {
  ModelConfig c;
  c.num_layers = 1;
  c.hidden = 8;
  c.heads = 2;
  c.intermediate = 32;
  c.seq_len = 40;
  c.vocab = 260;
  c.num_classes = 2;
  c.dropout = 0.1;
  return c;
}

// Small separable dataset through the real pipeline (hashing included).
std::vector<LabeledExample> mini_examples(std::size_t rows_per_class, double noise,
                                          std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.num_fields = 4;
  spec.rows_per_class = rows_per_class;
  spec.noise = noise;
  spec.seed = seed;
  std::ostringstream csv;
  generate_synthetic(spec, csv);
  const std::string path = "fed_test_synth.csv";
  {
    std::ofstream out(path, std::ios::binary);
    out << csv.str();
  }
  auto records = load_csv(path);
  std::remove(path.c_str());
  TokenizerModel base;
  return build_examples(records, base, {"class_0", "class_1"}, 40);
}

template <typename T>
bool bitwise_equal(const ModelWeights<T>& a, const ModelWeights<T>& b) {
  if (a.names != b.names) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (a.tensors[i].values() != b.tensors[i].values()) return false;
  return true;
}

}  // namespace

TEST_CASE("fedavg weights by sample count") {
  ModelWeights<float> wa, wb;
  wa.names = wb.names = {"w"};
  wa.tensors.push_back(Tensor<float>::from_values({2}, {0.0f, 4.0f}, true));
  wb.tensors.push_back(Tensor<float>::from_values({2}, {8.0f, 0.0f}, true));
  std::vector<ClientUpdate<float>> ups(2);
  ups[0] = {0, wa, 1, 0.0};
  ups[1] = {1, wb, 3, 0.0};
  auto avg = fedavg(ups);
  CHECK(avg.tensors[0].values()[0] == Catch::Approx(6.0));  // (1*0 + 3*8)/4
  CHECK(avg.tensors[0].values()[1] == Catch::Approx(1.0));  // (1*4 + 3*0)/4
}

TEST_CASE("fedavg is independent of update ordering") {
  ModelWeights<float> wa, wb, wc;
  wa.names = wb.names = wc.names = {"w"};
  wa.tensors.push_back(Tensor<float>::from_values({1}, {1.0f}));
  wb.tensors.push_back(Tensor<float>::from_values({1}, {2.0f}));
  wc.tensors.push_back(Tensor<float>::from_values({1}, {7.0f}));
  std::vector<ClientUpdate<float>> fwd(3), rev(3);
  fwd[0] = {0, wa, 5, 0};
  fwd[1] = {1, wb, 6, 0};
  fwd[2] = {2, wc, 7, 0};
  rev[0] = fwd[2];
  rev[1] = fwd[0];
  rev[2] = fwd[1];
  CHECK(fedavg(fwd).tensors[0].values() == fedavg(rev).tensors[0].values());
}

TEST_CASE("fedavg with a single client returns its weights bit-exactly") {
  ModelWeights<float> w;
  w.names = {"w"};
  w.tensors.push_back(
      Tensor<float>::from_values({3}, {0.1f, -2.7182817f, 3.1415927f}));
  std::vector<ClientUpdate<float>> ups(1);
  ups[0] = {0, w, 17, 0.5};
  CHECK(fedavg(ups).tensors[0].values() == w.tensors[0].values());
}

TEST_CASE("fedavg rejects degenerate updates") {
  CHECK_THROWS_AS(fedavg(std::vector<ClientUpdate<float>>{}), FedError);

  ModelWeights<float> wa, wb;
  wa.names = wb.names = {"w"};
  wa.tensors.push_back(Tensor<float>::from_values({2}, {1, 2}));
  wb.tensors.push_back(Tensor<float>::from_values({3}, {1, 2, 3}));
  std::vector<ClientUpdate<float>> ups(2);
  ups[0] = {0, wa, 1, 0};
  ups[1] = {1, wb, 1, 0};
  CHECK_THROWS_AS(fedavg(ups), FedError);

  ups[1] = {1, wa, 0, 0};
  CHECK_THROWS_AS(fedavg(ups), FedError);
}

TEST_CASE("one-client federation reproduces centralized training bit-exactly") {
  auto cfg = mini();
  auto examples = mini_examples(16, 0.1, 4);

  RoundConfig rc;
  rc.rounds = 3;
  rc.local_epochs = 2;
  rc.seed = 9;
  rc.train.batch_size = 8;
  rc.train.adam.lr = 1e-3;

  PartitionPlan plan;
  plan.num_clients = 1;
  plan.shards.resize(1);
  for (std::size_t i = 0; i < examples.size(); ++i) plan.shards[0].push_back(i);

  auto fed = run_simulation<float>(cfg, rc, plan, examples, examples);

  auto central = init_model<float>(cfg, rc.seed);
  AdamState<float> adam(rc.train.adam, central.tensors);
  std::vector<std::size_t> shard = plan.shards[0];
  train_epochs(central, adam, cfg, examples, shard, rc.rounds * rc.local_epochs,
               client_stream_seed(rc.seed, 0), 0, rc.train);

  CHECK(bitwise_equal(fed.global, central));
}

TEST_CASE("simulation is reproducible and worker-count independent") {
  auto cfg = mini();
  auto examples = mini_examples(10, 0.2, 6);
  auto plan = split_iid(examples.size(), 3, 5);

  RoundConfig rc;
  rc.rounds = 2;
  rc.local_epochs = 1;
  rc.seed = 21;
  rc.train.batch_size = 8;
  rc.train.adam.lr = 1e-3;

  rc.workers = 1;
  auto serial = run_simulation<float>(cfg, rc, plan, examples, examples);
  rc.workers = 3;
  auto parallel = run_simulation<float>(cfg, rc, plan, examples, examples);
  CHECK(bitwise_equal(serial.global, parallel.global));
  REQUIRE(serial.reports.size() == parallel.reports.size());
  for (std::size_t i = 0; i < serial.reports.size(); ++i)
    CHECK(serial.reports[i].acc_global == parallel.reports[i].acc_global);
}

TEST_CASE("round reports cover round 0 through R with client losses") {
  auto cfg = mini();
  auto examples = mini_examples(8, 0.2, 2);
  auto plan = split_iid(examples.size(), 2, 1);

  RoundConfig rc;
  rc.rounds = 2;
  rc.seed = 1;
  rc.train.batch_size = 8;

  std::size_t seen = 0;
  auto res = run_simulation<float>(cfg, rc, plan, examples, examples,
                                   [&](const RoundReport&) { ++seen; });
  REQUIRE(res.reports.size() == 3);
  CHECK(seen == 3);
  CHECK(res.reports[0].round == 0);
  CHECK(res.reports[0].loss_by_client.empty());
  CHECK(res.reports[2].round == 2);
  CHECK(res.reports[2].loss_by_client.size() == 2);

  auto j = res.reports[2].to_json();
  CHECK(j["round"] == 2);
  CHECK(j["loss_by_client"].size() == 2);
  CHECK(j.contains("acc_global"));
  CHECK(j.contains("seconds"));
}

TEST_CASE("federated training learns a separable dataset") {
  auto cfg = mini();
  auto all = mini_examples(36, 0.05, 7);
  std::vector<LabeledExample> train, test;
  for (std::size_t i = 0; i < all.size(); ++i)
    (i % 3 == 0 ? test : train).push_back(all[i]);
  auto plan = split_iid(train.size(), 3, 3);

  RoundConfig rc;
  rc.rounds = 10;
  rc.local_epochs = 3;
  rc.seed = 13;
  rc.train.batch_size = 8;
  rc.train.adam.lr = 5e-3;

  auto res = run_simulation<float>(cfg, rc, plan, train, test);
  CHECK(res.reports.back().acc_global > res.reports.front().acc_global);
  CHECK(res.reports.back().acc_global >= 0.9);
}

TEST_CASE("empty shard is rejected") {
  auto cfg = mini();
  auto examples = mini_examples(4, 0.0, 1);
  PartitionPlan plan;
  plan.num_clients = 2;
  plan.shards = {{0, 1, 2, 3, 4, 5, 6, 7}, {}};
  RoundConfig rc;
  rc.rounds = 1;
  rc.seed = 0;
  CHECK_THROWS_AS(run_simulation<float>(cfg, rc, plan, examples, examples), FedError);
}
