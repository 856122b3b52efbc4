#pragma once

#include "beamfuse/beams.hpp"
#include "beamfuse/datapipe.hpp"
#include "beamfuse/nn.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace beamfuse {

enum class ModelKind { Fusion, Shallow, Sub6Only, MmwaveOnly };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);  ///< fusion|shallow|sub6|mmwave

/// Architecture hyperparameters. The classify head uses num_beams as its
/// hidden width as well as its output width.
struct FusionSpec {
  int sub6_dim = 0;
  int mmwave_dim = 0;
  int num_beams = 64;
  int mmwave_blocks = 4;  ///< depth of the mmWave branch (and mmwave-only trunk)
  int sub6_blocks = 6;    ///< depth of the sub-6 branch (and sub6/shallow trunks)
  int head_layers = 3;    ///< parameter layers in the classify head
  int width_mmwave = 2048;
  int width_sub6 = 2048;
  double dropout_rate = 0.4;
};

/// A built architecture. The fused model uses both branches plus the head;
/// single-trunk comparison models keep their whole stack in `head` and leave
/// the branches empty. Branch outputs are concatenated sub-6 first.
template <typename S>
struct Network {
  ModelKind kind = ModelKind::Fusion;
  FusionSpec spec;
  LayerStack<S> sub6_branch, mmwave_branch, head;

  MatrixX<S> forward(const MatrixX<S>& sub6, const MatrixX<S>& mmwave, bool train,
                     std::mt19937_64& rng) {
    switch (kind) {
      case ModelKind::Fusion: {
        MatrixX<S> s = sub6_branch.forward(sub6, train, rng);
        MatrixX<S> m = mmwave_branch.forward(mmwave, train, rng);
        MatrixX<S> cat(s.rows(), s.cols() + m.cols());
        cat << s, m;
        return head.forward(std::move(cat), train, rng);
      }
      case ModelKind::Shallow: {
        MatrixX<S> cat(sub6.rows(), sub6.cols() + mmwave.cols());
        cat << sub6, mmwave;
        return head.forward(std::move(cat), train, rng);
      }
      case ModelKind::Sub6Only:
        return head.forward(sub6, train, rng);
      case ModelKind::MmwaveOnly:
        return head.forward(mmwave, train, rng);
    }
    throw std::logic_error("forward: unknown model kind");
  }

  /// Backpropagates the loss gradient through every stack; parameter
  /// gradients land in the layers.
  void backward(const MatrixX<S>& grad_logits) {
    MatrixX<S> g = head.backward(grad_logits);
    if (kind == ModelKind::Fusion) {
      sub6_branch.backward(g.leftCols(spec.width_sub6));
      mmwave_branch.backward(g.rightCols(spec.width_mmwave));
    }
  }

  std::vector<ParamRef<S>> params() {
    std::vector<ParamRef<S>> out;
    collect_params(sub6_branch, "sub6", out);
    collect_params(mmwave_branch, "mmwave", out);
    collect_params(head, "head", out);
    return out;
  }

  std::vector<ParamRef<S>> state() {
    std::vector<ParamRef<S>> out;
    collect_state(sub6_branch, "sub6", out);
    collect_state(mmwave_branch, "mmwave", out);
    collect_state(head, "head", out);
    return out;
  }

  void freeze_dropout(bool frozen) {
    sub6_branch.freeze_dropout(frozen);
    mmwave_branch.freeze_dropout(frozen);
    head.freeze_dropout(frozen);
  }

  std::array<std::vector<int>, 3> width_lists() const;
};

/// Dense widths of (sub-6 list, mmWave list, head list), the decomposition
/// the multiply-accumulate count sums over. Comparison models use only the
/// head list.
inline std::array<std::vector<int>, 3> model_width_lists(ModelKind kind, const FusionSpec& spec) {
  std::array<std::vector<int>, 3> lists;
  auto trunk = [&](int input, int width, int depth) {
    std::vector<int> w{input};
    w.insert(w.end(), depth, width);
    w.push_back(spec.num_beams);
    return w;
  };
  switch (kind) {
    case ModelKind::Fusion: {
      lists[0] = {spec.sub6_dim};
      lists[0].insert(lists[0].end(), spec.sub6_blocks, spec.width_sub6);
      lists[1] = {spec.mmwave_dim};
      lists[1].insert(lists[1].end(), spec.mmwave_blocks, spec.width_mmwave);
      lists[2] = {spec.width_sub6 + spec.width_mmwave};
      lists[2].insert(lists[2].end(), spec.head_layers, spec.num_beams);
      break;
    }
    case ModelKind::Shallow:
      lists[2] = trunk(spec.sub6_dim + spec.mmwave_dim, spec.width_sub6, spec.sub6_blocks);
      break;
    case ModelKind::Sub6Only:
      lists[2] = trunk(spec.sub6_dim, spec.width_sub6, spec.sub6_blocks);
      break;
    case ModelKind::MmwaveOnly:
      lists[2] = trunk(spec.mmwave_dim, spec.width_mmwave, spec.mmwave_blocks);
      break;
  }
  return lists;
}

template <typename S>
std::array<std::vector<int>, 3> Network<S>::width_lists() const {
  return model_width_lists(kind, spec);
}

namespace detail {

/// Dense + batchnorm + ReLU + dropout, the repeated hidden unit.
template <typename S>
void append_block(LayerStack<S>& stack, int in, int out, double dropout_rate) {
  stack.layers.emplace_back(Dense<S>(in, out));
  stack.layers.emplace_back(BatchNorm<S>(out));
  stack.layers.emplace_back(Relu<S>{});
  stack.layers.emplace_back(Dropout<S>(dropout_rate));
}

template <typename S>
void append_trunk(LayerStack<S>& stack, int input, int width, int depth, int logits,
                  double dropout_rate) {
  int in = input;
  for (int i = 0; i < depth; ++i) {
    append_block(stack, in, width, dropout_rate);
    in = width;
  }
  stack.layers.emplace_back(Dense<S>(in, logits));  // bare logits layer
}

inline void validate_spec(const FusionSpec& spec, bool need_sub6, bool need_mmwave) {
  if (need_sub6 && spec.sub6_dim < 1)
    throw std::invalid_argument("model spec: sub6 input dim must be positive");
  if (need_mmwave && spec.mmwave_dim < 1)
    throw std::invalid_argument("model spec: mmwave input dim must be positive");
  if (spec.num_beams < 1) throw std::invalid_argument("model spec: need at least one beam");
  if (spec.mmwave_blocks < 1 || spec.sub6_blocks < 1 || spec.head_layers < 1)
    throw std::invalid_argument("model spec: every sub-network needs at least one layer");
  if (spec.width_mmwave < 1 || spec.width_sub6 < 1)
    throw std::invalid_argument("model spec: widths must be positive");
}

}  // namespace detail

/// The dual-branch fused architecture: a mmWave branch of mmwave_blocks
/// hidden blocks, a deeper sub-6 branch, concatenation, and a classify head
/// whose final layer emits bare logits.
template <typename S>
Network<S> build_fusionnet(const FusionSpec& spec) {
  detail::validate_spec(spec, true, true);
  if (spec.sub6_blocks <= spec.mmwave_blocks)
    throw std::invalid_argument("model spec: the sub-6 branch must be deeper than the mmWave one");
  Network<S> net;
  net.kind = ModelKind::Fusion;
  net.spec = spec;
  int in = spec.sub6_dim;
  for (int i = 0; i < spec.sub6_blocks; ++i) {
    detail::append_block(net.sub6_branch, in, spec.width_sub6, spec.dropout_rate);
    in = spec.width_sub6;
  }
  in = spec.mmwave_dim;
  for (int i = 0; i < spec.mmwave_blocks; ++i) {
    detail::append_block(net.mmwave_branch, in, spec.width_mmwave, spec.dropout_rate);
    in = spec.width_mmwave;
  }
  in = spec.width_sub6 + spec.width_mmwave;
  for (int i = 0; i + 1 < spec.head_layers; ++i) {
    detail::append_block(net.head, in, spec.num_beams, spec.dropout_rate);
    in = spec.num_beams;
  }
  net.head.layers.emplace_back(Dense<S>(in, spec.num_beams));
  return net;
}

/// Single-trunk baselines: sub-6-only and shallow share the deeper trunk
/// depth, with the shallow model consuming both inputs concatenated; the
/// mmWave-only model uses the shorter depth.
template <typename S>
Network<S> build_comparison(ModelKind kind, const FusionSpec& spec) {
  Network<S> net;
  net.kind = kind;
  net.spec = spec;
  switch (kind) {
    case ModelKind::Shallow:
      detail::validate_spec(spec, true, true);
      detail::append_trunk(net.head, spec.sub6_dim + spec.mmwave_dim, spec.width_sub6,
                           spec.sub6_blocks, spec.num_beams, spec.dropout_rate);
      break;
    case ModelKind::Sub6Only:
      detail::validate_spec(spec, true, false);
      detail::append_trunk(net.head, spec.sub6_dim, spec.width_sub6, spec.sub6_blocks,
                           spec.num_beams, spec.dropout_rate);
      break;
    case ModelKind::MmwaveOnly:
      detail::validate_spec(spec, false, true);
      detail::append_trunk(net.head, spec.mmwave_dim, spec.width_mmwave, spec.mmwave_blocks,
                           spec.num_beams, spec.dropout_rate);
      break;
    case ModelKind::Fusion:
      throw std::invalid_argument("build_comparison: use build_fusionnet for the fused model");
  }
  return net;
}

template <typename S>
Network<S> build_model(ModelKind kind, const FusionSpec& spec) {
  return kind == ModelKind::Fusion ? build_fusionnet<S>(spec) : build_comparison<S>(kind, spec);
}

/// Xavier-fills every dense layer, branch stacks first, with one engine
/// seeded from `seed`.
template <typename S>
void init_network(Network<S>& net, std::uint64_t seed) {
  std::mt19937_64 eng(mix64(seed));
  init_xavier(net.sub6_branch, eng);
  init_xavier(net.mmwave_branch, eng);
  init_xavier(net.head, eng);
}

template <typename S>
long long network_flops(const Network<S>& net) {
  long long total = 0;
  for (const std::vector<int>& list : net.width_lists()) total += layer_chain_flops(list);
  return total;
}

struct TrainConfig {
  int batch_size = 512;
  int epochs = 60;
  double base_lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_top1 = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;
};

struct Metrics {
  double top1 = 0.0;
  double top3 = 0.0;
  double rate_ratio_mean = 0.0;
  long long num_samples = 0;
  std::vector<long long> per_class_total;    ///< label histogram
  std::vector<long long> per_class_correct;  ///< top-1 hits per label
};

/// Copies the given rows of a row-major dataset block into a dense batch.
MatrixX<float> assemble_rows(const RowMatrixXf& source, std::span<const int> rows);

/// Shuffled mini-batch epochs with the decayed learning-rate schedule; keeps
/// per-epoch mean training loss, validation top-1, and learning rate.
/// Mini-batches narrower than two rows are dropped (normalization needs a
/// batch). Deterministic for a fixed seed. Throws when the loss goes
/// non-finite.
TrainHistory train(Network<float>& net, const FeatureSet& data, const DatasetSplit& split,
                   const TrainConfig& config);

/// Eval-mode metrics over the given rows: exact-match accuracy, top-3
/// accuracy, and the mean ratio of the predicted beam's rate to the best
/// beam's, read from the per-user rate table. Side-effect free.
Metrics evaluate(Network<float>& net, const FeatureSet& data, std::span<const int> rows);

/// Same metrics, but the rate ratio is recomputed against ground-truth
/// channels with an exhaustive per-user search instead of the stored table.
Metrics evaluate(Network<float>& net, const FeatureSet& data, std::span<const int> rows,
                 const Codebook& codebook, std::span<const ChannelMatrix> channels,
                 double snr_linear);

/// Row-wise softmax for reporting probabilities.
MatrixX<float> softmax_rows(const MatrixX<float>& logits);

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Writes checkpoint.json (architecture, training settings, tensor table)
/// plus params.f32 (all trainable tensors then running statistics,
/// little-endian float32, in listed order) into `dir`.
void save_checkpoint(Network<float>& net, const TrainConfig& config,
                     const std::filesystem::path& dir);

struct LoadedCheckpoint {
  Network<float> net;
  TrainConfig config;
};

/// Rebuilds the architecture from checkpoint.json and restores every tensor;
/// array length must match the manifest exactly.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace beamfuse
