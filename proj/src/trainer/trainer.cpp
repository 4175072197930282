#include "circuitlens/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/parallel.hpp"
#include "circuitlens/common/rng.hpp"
#include "circuitlens/netgraph/forward.hpp"
#include "circuitlens/numerics/ops.hpp"
#include "circuitlens/numerics/tape.hpp"

namespace circuitlens::trainer {

namespace nx = numerics;
using nlohmann::json;

void TrainConfig::validate() const {
  json problems = json::array();
  auto rate = [&](const char* name, double v, bool allow_zero) {
    if (!(v <= 1.0 && (allow_zero ? v >= 0.0 : v > 0.0))) {
      problems.push_back(std::string(name) + ": must be in " + (allow_zero ? "[0, 1]" : "(0, 1]"));
    }
  };
  rate("learning_rate", learning_rate, true);
  rate("lr_decay_per_epoch", lr_decay_per_epoch, true);
  if (!(momentum >= 0.0 && momentum < 1.0)) problems.push_back("momentum: must be in [0, 1)");
  if (batch_size == 0) problems.push_back("batch_size: must be at least 1");
  if (max_epochs == 0) problems.push_back("max_epochs: must be at least 1");
  if (early_stop_patience == 0) problems.push_back("early_stop_patience: must be at least 1");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += " " + p.get<std::string>() + ";";
    throw ValidationError(msg, {{"problems", problems}});
  }
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return learning_rate * std::pow(1.0 - lr_decay_per_epoch, static_cast<double>(epoch));
}

BatchGradient batch_gradient(const ModelGraph& model, const std::vector<Tensor>& images,
                             const std::vector<std::size_t>& labels, const std::vector<std::size_t>& indices) {
  const auto params = model.parameters();
  struct Sample {
    double loss = 0.0;
    std::vector<std::vector<float>> grads;
  };
  std::vector<Sample> samples(indices.size());
  parallel_for(indices.size(), [&](std::size_t s) {
    nx::Tape tape;
    std::vector<Tensor> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.variable(p));
    const ModelGraph local = model.with_parameters(vars);
    Tensor loss = nx::cross_entropy(netgraph::forward(local, images.at(indices[s])), labels.at(indices[s]));
    tape.backward(loss);
    samples[s].loss = loss.item();
    for (const auto& v : vars) {
      auto g = tape.grad(v);
      samples[s].grads.push_back(g ? g->to_vector() : std::vector<float>(v.numel(), 0.0f));
    }
  });
  BatchGradient out;
  out.grads.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) out.grads[k].assign(params[k].numel(), 0.0);
  for (const auto& s : samples) {
    out.loss += s.loss;
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < s.grads[k].size(); ++i) out.grads[k][i] += s.grads[k][i];
  }
  const double n = static_cast<double>(indices.size());
  out.loss /= n;
  for (auto& g : out.grads)
    for (double& v : g) v /= n;
  return out;
}

ModelGraph SgdMomentum::step(const ModelGraph& model, const BatchGradient& g, double lr) {
  const auto params = model.parameters();
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.numel(), 0.0);
  }
  std::vector<Tensor> updated;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<float> p = params[k].to_vector();
    for (std::size_t i = 0; i < p.size(); ++i) {
      velocity_[k][i] = momentum_ * velocity_[k][i] + g.grads[k][i];
      p[i] = static_cast<float>(p[i] - lr * velocity_[k][i]);
    }
    updated.emplace_back(params[k].shape(), std::move(p));
  }
  return model.with_parameters(updated);
}

std::vector<std::size_t> predict(const ModelGraph& model, const std::vector<Tensor>& images) {
  std::vector<std::size_t> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    Tensor logits = netgraph::forward(model, images[i]);
    auto d = logits.data();
    out[i] = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  });
  return out;
}

double evaluate_accuracy(const ModelGraph& model, const synthset::SplitData& split,
                         const std::optional<std::set<std::size_t>>& class_filter) {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < split.images.size(); ++i) {
    if (class_filter && !class_filter->count(split.labels[i])) continue;
    images.push_back(split.images[i]);
    labels.push_back(split.labels[i]);
  }
  if (images.empty()) throw ValidationError("no samples to evaluate after class filtering");
  const auto pred = predict(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

TrainResult train(const ModelGraph& model, const synthset::ConceptDataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (model.num_classes() != dataset.classes().size()) {
    throw ValidationError("model has " + std::to_string(model.num_classes()) + " outputs but the dataset has " +
                              std::to_string(dataset.classes().size()) + " classes",
                          {{"model_classes", model.num_classes()}, {"dataset_classes", dataset.classes().size()}});
  }
  const auto& train_split = dataset.split(synthset::Split::train);
  const auto& val_split = dataset.split(synthset::Split::val);
  if (train_split.images.empty()) throw ValidationError("empty training split");

  TrainResult result{model, {}, 0, false};
  ModelGraph current = model;
  SgdMomentum opt(config.momentum);
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_split.images.size());

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed({config.seed, epoch}));
    rng.shuffle(order);
    const double lr = config.lr_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      BatchGradient g = batch_gradient(current, train_split.images, train_split.labels, batch);
      if (!std::isfinite(g.loss)) {
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch),
                           {{"epoch", epoch}, {"batch_start", start}});
      }
      loss_sum += g.loss * static_cast<double>(batch.size());
      current = opt.step(current, g, lr);
    }
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(order.size()),
                    val_split.images.empty() ? 0.0 : evaluate_accuracy(current, val_split)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_acc > best_acc) {
      best_acc = rec.val_acc;
      result.best_epoch = epoch;
      result.model = current;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_acc\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace circuitlens::trainer
