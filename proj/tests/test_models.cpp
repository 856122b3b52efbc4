#include "beamfuse/models.hpp"

#include "beamfuse/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

using namespace beamfuse;

namespace {

FusionSpec toy_spec() {
  FusionSpec spec;
  spec.sub6_dim = 4;
  spec.mmwave_dim = 3;
  spec.num_beams = 2;
  spec.mmwave_blocks = 1;
  spec.sub6_blocks = 2;
  spec.head_layers = 2;
  spec.width_mmwave = 6;
  spec.width_sub6 = 8;
  spec.dropout_rate = 0.1;
  return spec;
}

/// Forty users in two linearly separable classes with a known rate table:
/// the labelled beam is worth 1.0, the other 0.4.
FeatureSet toy_features() {
  std::mt19937_64 eng(17);
  const int users = 40;
  FeatureSet fs;
  fs.sub6.resize(users, 4);
  fs.mmwave.resize(users, 3);
  fs.labels = RowMatrixXf::Zero(users, 2);
  fs.rates.resize(users, 2);
  fs.num_users = users;
  fs.omega_sub6 = fs.omega_mmwave = 1.0;
  for (int u = 0; u < users; ++u) {
    const int label = u % 2;
    const float sign = label == 0 ? 1.0f : -1.0f;
    for (int j = 0; j < 4; ++j) fs.sub6(u, j) = sign + 0.1f * static_cast<float>(gaussian(eng));
    for (int j = 0; j < 3; ++j) fs.mmwave(u, j) = sign + 0.1f * static_cast<float>(gaussian(eng));
    fs.labels(u, label) = 1.0f;
    fs.label_index.push_back(label);
    fs.user_of_row.push_back(u);
    fs.rates(u, label) = 1.0f;
    fs.rates(u, 1 - label) = 0.4f;
  }
  return fs;
}

int count_dense(const LayerStack<float>& stack) {
  int n = 0;
  for (const Layer<float>& l : stack.layers) n += std::holds_alternative<Dense<float>>(l);
  return n;
}

std::vector<float> snapshot(std::vector<ParamRef<float>>& params) {
  std::vector<float> flat;
  for (const ParamRef<float>& p : params) flat.insert(flat.end(), p.value, p.value + p.size);
  return flat;
}

}  // namespace

TEST_CASE("model names round trip") {
  for (ModelKind kind : {ModelKind::Fusion, ModelKind::Shallow, ModelKind::Sub6Only,
                         ModelKind::MmwaveOnly}) {
    CHECK(model_kind_from_name(model_kind_name(kind)) == kind);
  }
  CHECK(model_kind_name(ModelKind::Sub6Only) == "sub6");
  CHECK_THROWS_WITH_AS(model_kind_from_name("resnet"), doctest::Contains("resnet"),
                       std::invalid_argument);
}

TEST_CASE("the fused architecture has the pinned layer structure") {
  FusionSpec spec = toy_spec();
  spec.sub6_blocks = 6;
  spec.mmwave_blocks = 4;
  spec.head_layers = 3;
  Network<float> net = build_fusionnet<float>(spec);
  CHECK(count_dense(net.sub6_branch) == 6);
  CHECK(count_dense(net.mmwave_branch) == 4);
  CHECK(count_dense(net.head) == 3);
  // Every hidden dense is followed by normalization; the final one is bare.
  CHECK(std::holds_alternative<Dense<float>>(net.head.layers.back()));
  CHECK(std::holds_alternative<BatchNorm<float>>(net.sub6_branch.layers[1]));

  FusionSpec shallow_branches = toy_spec();
  shallow_branches.sub6_blocks = 1;
  shallow_branches.mmwave_blocks = 1;
  CHECK_THROWS_WITH_AS(build_fusionnet<float>(shallow_branches), doctest::Contains("deeper"),
                       std::invalid_argument);
  CHECK_THROWS_AS(build_comparison<float>(ModelKind::Fusion, toy_spec()), std::invalid_argument);
}

TEST_CASE("forward produces one finite logit row per sample for every kind") {
  std::mt19937_64 eng(3), rng(4);
  MatrixX<float> sub6(4, 4), mmwave(4, 3);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) sub6(i, j) = static_cast<float>(gaussian(eng));
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i) mmwave(i, j) = static_cast<float>(gaussian(eng));
  for (ModelKind kind : {ModelKind::Fusion, ModelKind::Shallow, ModelKind::Sub6Only,
                         ModelKind::MmwaveOnly}) {
    Network<float> net = build_model<float>(kind, toy_spec());
    init_network(net, 9);
    const MatrixX<float> logits = net.forward(sub6, mmwave, false, rng);
    CHECK(logits.rows() == 4);
    CHECK(logits.cols() == 2);
    CHECK(logits.allFinite());
  }
}

TEST_CASE("width lists and the cost model agree with hand sums") {
  FusionSpec spec;
  spec.sub6_dim = 4;
  spec.mmwave_dim = 3;
  spec.num_beams = 2;
  spec.mmwave_blocks = 1;
  spec.sub6_blocks = 2;
  spec.head_layers = 2;
  spec.width_sub6 = 5;
  spec.width_mmwave = 6;

  const auto fusion = model_width_lists(ModelKind::Fusion, spec);
  CHECK(fusion[0] == std::vector<int>{4, 5, 5});
  CHECK(fusion[1] == std::vector<int>{3, 6});
  CHECK(fusion[2] == std::vector<int>{11, 2, 2});
  CHECK(network_flops(build_fusionnet<float>(spec)) == 45 + 18 + 26);

  CHECK(network_flops(build_comparison<float>(ModelKind::Sub6Only, spec)) == 55);
  CHECK(network_flops(build_comparison<float>(ModelKind::Shallow, spec)) == 70);
  CHECK(network_flops(build_comparison<float>(ModelKind::MmwaveOnly, spec)) == 30);
  CHECK(model_width_lists(ModelKind::Shallow, spec)[2] == std::vector<int>{7, 5, 5, 2});
}

TEST_CASE("the sub-6-only network holds about half the fused parameters") {
  FusionSpec spec;
  spec.sub6_dim = 2 * 4 * 32;
  spec.mmwave_dim = 2 * 4 * 512;
  spec.num_beams = 64;
  long long fused = 0, sub6_only = 0;
  {
    Network<float> net = build_fusionnet<float>(spec);
    auto params = net.params();
    fused = count_parameters(params);
  }
  {
    Network<float> net = build_comparison<float>(ModelKind::Sub6Only, spec);
    auto params = net.params();
    sub6_only = count_parameters(params);
  }
  const double ratio = static_cast<double>(sub6_only) / static_cast<double>(fused);
  CHECK(ratio > 0.4);
  CHECK(ratio < 0.6);
}

TEST_CASE("training separates a linearly separable toy problem") {
  const FeatureSet fs = toy_features();
  const DatasetSplit split = split_dataset(fs, 0.8, 23);
  Network<float> net = build_fusionnet<float>(toy_spec());
  init_network(net, 5);

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 40;
  cfg.base_lr = 3e-3;
  cfg.seed = 77;
  const TrainHistory history = train(net, fs, split, cfg);

  REQUIRE(history.records.size() == 40);
  const LrSchedule schedule{cfg.base_lr, cfg.epochs};
  for (int e = 0; e < 40; ++e) {
    CHECK(history.records[e].epoch == e);
    CHECK(history.records[e].lr == lr_at(schedule, e));
  }
  double early = 0.0, late = 0.0;
  for (int e = 0; e < 5; ++e) early += history.records[e].loss;
  for (int e = 35; e < 40; ++e) late += history.records[e].loss;
  CHECK(late < early);
  CHECK(history.records.back().val_top1 == 1.0);

  const Metrics val = evaluate(net, fs, split.val_rows);
  CHECK(val.top1 == history.records.back().val_top1);
  CHECK(val.top3 == 1.0);  // two classes: the top three always cover the label
  CHECK(val.num_samples == 8);
  CHECK(val.rate_ratio_mean ==
        doctest::Approx(val.top1 + 0.4 * (1.0 - val.top1)).epsilon(1e-6));

  // Evaluation is side-effect free, so a second pass reproduces the numbers.
  const Metrics again = evaluate(net, fs, split.val_rows);
  CHECK(again.top1 == val.top1);
  CHECK(again.rate_ratio_mean == val.rate_ratio_mean);

  CHECK_THROWS_AS(evaluate(net, fs, std::span<const int>{}), std::invalid_argument);
}

TEST_CASE("zero training epochs leave the parameters untouched") {
  const FeatureSet fs = toy_features();
  const DatasetSplit split = split_dataset(fs, 0.8, 23);
  Network<float> net = build_fusionnet<float>(toy_spec());
  init_network(net, 5);
  auto params = net.params();
  const std::vector<float> before = snapshot(params);

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 0;
  const TrainHistory history = train(net, fs, split, cfg);
  CHECK(history.records.empty());
  CHECK(snapshot(params) == before);

  cfg.batch_size = 1;
  CHECK_THROWS_AS(train(net, fs, split, cfg), std::invalid_argument);
  cfg.batch_size = 8;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train(net, fs, split, cfg), std::invalid_argument);
}

TEST_CASE("training is bitwise repeatable for a fixed seed") {
  const FeatureSet fs = toy_features();
  const DatasetSplit split = split_dataset(fs, 0.8, 23);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 6;
  cfg.base_lr = 3e-3;
  cfg.seed = 31;

  std::vector<float> runs[2];
  double losses[2];
  for (int r = 0; r < 2; ++r) {
    Network<float> net = build_fusionnet<float>(toy_spec());
    init_network(net, 5);
    const TrainHistory history = train(net, fs, split, cfg);
    auto params = net.params();
    runs[r] = snapshot(params);
    losses[r] = history.records.back().loss;
  }
  CHECK(runs[0] == runs[1]);
  CHECK(losses[0] == losses[1]);
}

TEST_CASE("a divergent learning rate raises instead of returning garbage") {
  const FeatureSet fs = toy_features();
  const DatasetSplit split = split_dataset(fs, 0.8, 23);
  FusionSpec spec = toy_spec();
  spec.dropout_rate = 0.0;
  Network<float> net = build_comparison<float>(ModelKind::MmwaveOnly, spec);
  init_network(net, 5);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 5;
  cfg.base_lr = 1e20;
  CHECK_THROWS_WITH_AS(train(net, fs, split, cfg), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("evaluation counts exact and top-3 hits from the logit order") {
  // Frozen zero weights turn the network into its final bias, giving every
  // sample the same logits 0.1, 0.5, 0.2, 0.15 and the prediction beam 1.
  FusionSpec spec;
  spec.sub6_dim = 2;
  spec.mmwave_dim = 3;
  spec.num_beams = 4;
  spec.mmwave_blocks = 1;
  spec.width_mmwave = 5;
  Network<float> net = build_comparison<float>(ModelKind::MmwaveOnly, spec);
  auto& logits_layer = std::get<Dense<float>>(net.head.layers.back());
  logits_layer.bias << 0.1f, 0.5f, 0.2f, 0.15f;

  std::mt19937_64 eng(41);
  FeatureSet fs;
  fs.num_users = 4;
  fs.sub6 = RowMatrixXf::Zero(4, 2);
  fs.mmwave.resize(4, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i) fs.mmwave(i, j) = static_cast<float>(gaussian(eng));
  fs.labels = RowMatrixXf::Zero(4, 4);
  fs.rates.resize(4, 4);
  for (int u = 0; u < 4; ++u) {
    fs.labels(u, u) = 1.0f;
    fs.label_index.push_back(u);
    fs.user_of_row.push_back(u);
    fs.rates.row(u) << 1.0f, 2.0f, 4.0f, 8.0f;
  }

  const std::vector<int> rows{0, 1, 2, 3};
  const Metrics m = evaluate(net, fs, rows);
  CHECK(m.top1 == 0.25);
  CHECK(m.top3 == 0.75);  // labels 1, 2, 3 sit in the top three logits
  CHECK(m.rate_ratio_mean == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.per_class_total == std::vector<long long>{1, 1, 1, 1});
  CHECK(m.per_class_correct == std::vector<long long>{0, 1, 0, 0});

  // The channel-based overload recomputes the ratio by exhaustive search.
  const Codebook cb = dft_codebook(4);
  std::vector<ChannelMatrix> channels;
  for (int u = 0; u < 4; ++u) {
    CMatrix h(4, 2);
    for (Eigen::Index c = 0; c < 2; ++c)
      for (Eigen::Index r = 0; r < 4; ++r) h(r, c) = complex_gaussian(eng);
    channels.push_back({h, ChannelDomain::SpatialFrequency});
  }
  const Metrics mc = evaluate(net, fs, rows, cb, channels, 2.0);
  double want = 0.0;
  for (int u = 0; u < 4; ++u) want += rate_ratio(channels[u], {1, 4}, cb, 2.0);
  want /= 4.0;
  CHECK(mc.rate_ratio_mean == doctest::Approx(want).epsilon(1e-12));
  CHECK(mc.top1 == m.top1);
}

TEST_CASE("softmax rows are proper probability distributions") {
  std::mt19937_64 eng(51);
  MatrixX<float> logits(5, 7);
  for (int j = 0; j < 7; ++j)
    for (int i = 0; i < 5; ++i) logits(i, j) = static_cast<float>(3.0 * gaussian(eng));
  const MatrixX<float> p = softmax_rows(logits);
  for (int i = 0; i < 5; ++i) {
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.row(i).minCoeff() > 0.0f);
    Eigen::Index want = 0, got = 0;
    logits.row(i).maxCoeff(&want);
    p.row(i).maxCoeff(&got);
    CHECK(want == got);
  }
}

TEST_CASE("assemble_rows gathers dataset rows in the requested order") {
  RowMatrixXf src(3, 2);
  src << 1, 2, 3, 4, 5, 6;
  const std::vector<int> rows{2, 0};
  const MatrixX<float> batch = assemble_rows(src, rows);
  CHECK(batch.rows() == 2);
  CHECK(batch(0, 0) == 5.0f);
  CHECK(batch(0, 1) == 6.0f);
  CHECK(batch(1, 0) == 1.0f);
  CHECK(batch(1, 1) == 2.0f);
}

TEST_CASE("checkpoints restore the architecture and every tensor bitwise") {
  beamfuse::testing::TempDir tmp("checkpoint");
  const FeatureSet fs = toy_features();
  const DatasetSplit split = split_dataset(fs, 0.8, 23);
  Network<float> net = build_fusionnet<float>(toy_spec());
  init_network(net, 5);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.base_lr = 3e-3;
  cfg.seed = 13;
  train(net, fs, split, cfg);  // populate parameters and running statistics
  save_checkpoint(net, cfg, tmp.path());

  LoadedCheckpoint loaded = load_checkpoint(tmp.path());
  CHECK(loaded.net.kind == net.kind);
  CHECK(loaded.net.spec.sub6_dim == net.spec.sub6_dim);
  CHECK(loaded.net.spec.width_sub6 == net.spec.width_sub6);
  CHECK(loaded.net.spec.dropout_rate == net.spec.dropout_rate);
  CHECK(loaded.config.batch_size == 8);
  CHECK(loaded.config.epochs == 3);
  CHECK(loaded.config.base_lr == 3e-3);
  CHECK(loaded.config.seed == 13);

  auto want_params = net.params();
  auto got_params = loaded.net.params();
  REQUIRE(want_params.size() == got_params.size());
  for (std::size_t i = 0; i < want_params.size(); ++i) {
    CHECK(want_params[i].name == got_params[i].name);
    CHECK(std::equal(want_params[i].value, want_params[i].value + want_params[i].size,
                     got_params[i].value));
  }
  auto want_state = net.state();
  auto got_state = loaded.net.state();
  REQUIRE(want_state.size() == got_state.size());
  for (std::size_t i = 0; i < want_state.size(); ++i)
    CHECK(std::equal(want_state[i].value, want_state[i].value + want_state[i].size,
                     got_state[i].value));

  // The restored network predicts identically.
  const Metrics a = evaluate(net, fs, split.val_rows);
  const Metrics b = evaluate(loaded.net, fs, split.val_rows);
  CHECK(a.top1 == b.top1);

  SUBCASE("truncated parameter file") {
    std::filesystem::resize_file(tmp / "params.f32", 16);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path()), doctest::Contains("size mismatch"),
                         std::runtime_error);
  }
  SUBCASE("tensor table mismatch") {
    const auto path = tmp / "checkpoint.json";
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("sub6.0.weight");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 13, "sub6.0.weigh2");
    std::ofstream out(path);
    out << text;
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path()), doctest::Contains("tensor mismatch"),
                         std::runtime_error);
  }
}

TEST_CASE("history files use the fixed four-column format") {
  beamfuse::testing::TempDir tmp("history");
  TrainHistory history;
  history.records.push_back({0, 0.5, 0.25, 1e-3});
  history.records.push_back({1, 0.4, 0.5, 1e-4});
  const auto path = tmp / "history.csv";
  write_history_csv(path, history);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "epoch,loss,val_top1,lr\n0,0.5,0.25,0.001\n1,0.4,0.5,0.0001\n");
}
