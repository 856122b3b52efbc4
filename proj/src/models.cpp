#include "beamfuse/models.hpp"

#include "beamfuse/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace beamfuse {

using nlohmann::json;

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Fusion: return "fusion";
    case ModelKind::Shallow: return "shallow";
    case ModelKind::Sub6Only: return "sub6";
    case ModelKind::MmwaveOnly: return "mmwave";
  }
  throw std::logic_error("model_kind_name: unknown kind");
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "fusion") return ModelKind::Fusion;
  if (name == "shallow") return ModelKind::Shallow;
  if (name == "sub6") return ModelKind::Sub6Only;
  if (name == "mmwave") return ModelKind::MmwaveOnly;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected fusion, shallow, sub6, or mmwave)");
}

MatrixX<float> assemble_rows(const RowMatrixXf& source, std::span<const int> rows) {
  MatrixX<float> out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = source.row(rows[i]);
  return out;
}

namespace {

struct BatchInputs {
  MatrixX<float> sub6, mmwave;
};

BatchInputs assemble_inputs(const Network<float>& net, const FeatureSet& data,
                            std::span<const int> rows) {
  BatchInputs b;
  if (net.kind != ModelKind::MmwaveOnly) b.sub6 = assemble_rows(data.sub6, rows);
  if (net.kind != ModelKind::Sub6Only) b.mmwave = assemble_rows(data.mmwave, rows);
  return b;
}

int argmax_row(const MatrixX<float>& m, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = static_cast<int>(c);
  return best;
}

template <typename RatioFn>
Metrics evaluate_impl(Network<float>& net, const FeatureSet& data, std::span<const int> rows,
                      RatioFn&& predicted_ratio) {
  if (rows.empty()) throw std::invalid_argument("evaluate: empty row set");
  const int num_classes = static_cast<int>(data.labels.cols());
  Metrics metrics;
  metrics.per_class_total.assign(num_classes, 0);
  metrics.per_class_correct.assign(num_classes, 0);
  metrics.num_samples = static_cast<long long>(rows.size());
  std::mt19937_64 unused_rng(0);  // eval mode draws nothing
  long long top1_hits = 0, top3_hits = 0;
  double ratio_sum = 0.0;
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::span<const int> chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
    BatchInputs in = assemble_inputs(net, data, chunk);
    const MatrixX<float> logits = net.forward(in.sub6, in.mmwave, false, unused_rng);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      const int label = data.label_index[chunk[i]];
      const int pred = argmax_row(logits, r);
      int strictly_above = 0;
      for (Eigen::Index c = 0; c < logits.cols(); ++c)
        if (logits(r, c) > logits(r, label)) ++strictly_above;
      top1_hits += pred == label;
      top3_hits += strictly_above < 3;
      ++metrics.per_class_total[label];
      metrics.per_class_correct[label] += pred == label;
      ratio_sum += predicted_ratio(data.user_of_row[chunk[i]], pred);
    }
  }
  metrics.top1 = static_cast<double>(top1_hits) / static_cast<double>(rows.size());
  metrics.top3 = static_cast<double>(top3_hits) / static_cast<double>(rows.size());
  metrics.rate_ratio_mean = ratio_sum / static_cast<double>(rows.size());
  return metrics;
}

}  // namespace

Metrics evaluate(Network<float>& net, const FeatureSet& data, std::span<const int> rows) {
  return evaluate_impl(net, data, rows, [&](int user, int pred) {
    const float best = data.rates.row(user).maxCoeff();
    return best <= 0.0f ? 1.0 : static_cast<double>(data.rates(user, pred)) / best;
  });
}

Metrics evaluate(Network<float>& net, const FeatureSet& data, std::span<const int> rows,
                 const Codebook& codebook, std::span<const ChannelMatrix> channels,
                 double snr_linear) {
  return evaluate_impl(net, data, rows, [&](int user, int pred) {
    return rate_ratio(channels[user], BeamLabel{pred, codebook.size()}, codebook, snr_linear);
  });
}

TrainHistory train(Network<float>& net, const FeatureSet& data, const DatasetSplit& split,
                   const TrainConfig& config) {
  if (config.batch_size < 2)
    throw std::invalid_argument("train: batch size must be at least 2");
  if (config.epochs < 0) throw std::invalid_argument("train: negative epoch count");
  if (split.train_rows.empty()) throw std::invalid_argument("train: empty training split");
  auto params = net.params();
  AdamState<float> adam;
  adam.init(params);
  const LrSchedule schedule{config.base_lr, config.epochs};
  std::mt19937_64 eng(mix64(config.seed));
  std::vector<int> order = split.train_rows;
  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    shuffle_deterministic(order, eng);
    double loss_sum = 0.0;
    long long seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t size =
          std::min(static_cast<std::size_t>(config.batch_size), order.size() - start);
      if (size < 2) continue;  // normalization needs a batch
      const std::span<const int> batch_rows(order.data() + start, size);
      BatchInputs in = assemble_inputs(net, data, batch_rows);
      const MatrixX<float> targets = assemble_rows(data.labels, batch_rows);
      const MatrixX<float> logits = net.forward(in.sub6, in.mmwave, true, eng);
      SoftmaxCrossEntropy<float> ce;
      const float loss = ce.loss(logits, targets);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss became non-finite at epoch " +
                                 std::to_string(epoch));
      net.backward(ce.grad());
      adam.step(params, static_cast<float>(lr));
      loss_sum += static_cast<double>(loss) * static_cast<double>(size);
      seen += static_cast<long long>(size);
    }
    const Metrics val = evaluate(net, data, split.val_rows);
    history.records.push_back(
        {epoch, seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0, val.top1, lr});
  }
  return history;
}

MatrixX<float> softmax_rows(const MatrixX<float>& logits) {
  MatrixX<float> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  MatrixX<float> expv = shifted.array().exp();
  return expv.array().colwise() / expv.rowwise().sum().array();
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,loss,val_top1,lr\n";
  char line[160];
  for (const EpochRecord& r : history.records) {
    std::snprintf(line, sizeof line, "%d,%.12g,%.12g,%.12g\n", r.epoch, r.loss, r.val_top1, r.lr);
    out << line;
  }
  write_text_file(path, out.str());
}

namespace {

json spec_to_json(const FusionSpec& s) {
  return json{{"sub6_dim", s.sub6_dim},
              {"mmwave_dim", s.mmwave_dim},
              {"num_beams", s.num_beams},
              {"mmwave_blocks", s.mmwave_blocks},
              {"sub6_blocks", s.sub6_blocks},
              {"head_layers", s.head_layers},
              {"width_mmwave", s.width_mmwave},
              {"width_sub6", s.width_sub6},
              {"dropout_rate", s.dropout_rate}};
}

FusionSpec spec_from_json(const json& j) {
  FusionSpec s;
  s.sub6_dim = j.at("sub6_dim").get<int>();
  s.mmwave_dim = j.at("mmwave_dim").get<int>();
  s.num_beams = j.at("num_beams").get<int>();
  s.mmwave_blocks = j.at("mmwave_blocks").get<int>();
  s.sub6_blocks = j.at("sub6_blocks").get<int>();
  s.head_layers = j.at("head_layers").get<int>();
  s.width_mmwave = j.at("width_mmwave").get<int>();
  s.width_sub6 = j.at("width_sub6").get<int>();
  s.dropout_rate = j.at("dropout_rate").get<double>();
  return s;
}

std::vector<ParamRef<float>> all_tensors(Network<float>& net) {
  std::vector<ParamRef<float>> tensors = net.params();
  std::vector<ParamRef<float>> state = net.state();
  tensors.insert(tensors.end(), state.begin(), state.end());
  return tensors;
}

}  // namespace

void save_checkpoint(Network<float>& net, const TrainConfig& config,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto tensors = all_tensors(net);
  json table = json::array();
  std::vector<float> flat;
  for (const ParamRef<float>& t : tensors) {
    table.push_back(json{{"name", t.name}, {"size", t.size}});
    flat.insert(flat.end(), t.value, t.value + t.size);
  }
  json j{{"schema_version", 1},
         {"model", model_kind_name(net.kind)},
         {"spec", spec_to_json(net.spec)},
         {"train",
          json{{"batch_size", config.batch_size},
               {"epochs", config.epochs},
               {"base_lr", config.base_lr},
               {"seed", config.seed}}},
         {"tensors", table},
         {"param_count", flat.size()}};
  write_text_file(dir / "checkpoint.json", j.dump(2) + "\n");
  write_f32(dir / "params.f32", flat);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const json j = json::parse(read_text_file(dir / "checkpoint.json"));
  const int version = j.at("schema_version").get<int>();
  if (version != 1)
    throw std::runtime_error("checkpoint schema version mismatch: file has " +
                             std::to_string(version));
  LoadedCheckpoint loaded;
  loaded.net = build_model<float>(model_kind_from_name(j.at("model").get<std::string>()),
                                  spec_from_json(j.at("spec")));
  const json& t = j.at("train");
  loaded.config.batch_size = t.at("batch_size").get<int>();
  loaded.config.epochs = t.at("epochs").get<int>();
  loaded.config.base_lr = t.at("base_lr").get<double>();
  loaded.config.seed = t.at("seed").get<std::uint64_t>();

  auto tensors = all_tensors(loaded.net);
  const json& table = j.at("tensors");
  if (table.size() != tensors.size())
    throw std::runtime_error("checkpoint tensor table does not match the architecture");
  std::size_t total = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (table[i].at("name").get<std::string>() != tensors[i].name ||
        table[i].at("size").get<Eigen::Index>() != tensors[i].size)
      throw std::runtime_error("checkpoint tensor mismatch at '" + tensors[i].name + "'");
    total += static_cast<std::size_t>(tensors[i].size);
  }
  const std::vector<float> flat = read_f32(dir / "params.f32", total);
  std::size_t offset = 0;
  for (ParamRef<float>& t : tensors) {
    std::copy_n(flat.data() + offset, t.size, t.value);
    offset += static_cast<std::size_t>(t.size);
  }
  return loaded;
}

}  // namespace beamfuse
