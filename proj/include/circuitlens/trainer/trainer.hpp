#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "circuitlens/netgraph/model.hpp"
#include "circuitlens/synthset/dataset.hpp"

namespace circuitlens::trainer {

using netgraph::ModelGraph;
using numerics::Tensor;

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  double lr_decay_per_epoch = 0.005;
  std::size_t max_epochs = 30;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 0;

  /// Throws ValidationError listing every invalid field.
  void validate() const;
  /// lr0 * (1 - decay)^epoch.
  double lr_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  /// Parameters from the epoch with the best validation accuracy.
  ModelGraph model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

/// Mean cross-entropy over `indices` of (images, labels) and its gradient per
/// parameter (in ModelGraph::parameters() order). Per-sample gradients are
/// computed in parallel and summed in index order.
struct BatchGradient {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;
};
BatchGradient batch_gradient(const ModelGraph& model, const std::vector<Tensor>& images,
                             const std::vector<std::size_t>& labels, const std::vector<std::size_t>& indices);

/// SGD with momentum: v = momentum * v + g; p = p - lr * v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}
  ModelGraph step(const ModelGraph& model, const BatchGradient& g, double lr);

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on the dataset's train split, validating on val after each epoch.
/// Stops at max_epochs or after early_stop_patience epochs without a val
/// accuracy improvement. A non-finite loss raises NumericError carrying the
/// epoch index.
TrainResult train(const ModelGraph& model, const synthset::ConceptDataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

/// Argmax class per image (parallel over images).
std::vector<std::size_t> predict(const ModelGraph& model, const std::vector<Tensor>& images);

/// Top-1 accuracy over a split, optionally restricted to labels in
/// `class_filter`. Throws ValidationError when nothing remains to evaluate.
double evaluate_accuracy(const ModelGraph& model, const synthset::SplitData& split,
                         const std::optional<std::set<std::size_t>>& class_filter = std::nullopt);

/// CSV with header epoch,lr,train_loss,val_acc.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace circuitlens::trainer
