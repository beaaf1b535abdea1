#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "unmt/beam.hpp"
#include "unmt/bleu.hpp"
#include "unmt/model.hpp"
#include "unmt/multilingual.hpp"
#include "unmt/network.hpp"
#include "unmt/rng.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

struct IdPair {
  std::vector<int> source;
  std::vector<int> target;  // ends with the end-of-sentence id
};

using IdCorpus = std::vector<IdPair>;

inline IdCorpus encode_corpus(const MixedCorpus& mix, const Vocabulary& src,
                              const Vocabulary& tgt) {
  IdCorpus out;
  out.reserve(mix.pairs.size());
  for (const auto& pair : mix.pairs) {
    IdPair ids;
    ids.source = src.encode(pair.source.tokens);
    ids.target = tgt.encode(pair.target.tokens);
    ids.target.push_back(kEosId);
    out.push_back(std::move(ids));
  }
  return out;
}

struct DevSet {
  std::vector<std::vector<int>> sources;    // coded and forced, as ids
  std::vector<std::string> references;      // plain detokenized lines
};

inline DevSet dev_from_pairs(const MixedCorpus& mix,
                             const Vocabulary& src_vocab) {
  DevSet dev;
  for (const auto& pair : mix.pairs) {
    dev.sources.push_back(src_vocab.encode(pair.source.tokens));
    dev.references.push_back(
        join_tokens(revert_coded_output(pair.target.tokens)));
  }
  return dev;
}

// Epoch-level corpus shuffle, consecutive slices (final short batch kept),
// then a second shuffle inside every batch. Same seed and epoch give the
// same batches.
inline std::vector<std::vector<std::size_t>> make_batches(
    std::size_t corpus_size, std::size_t batch_size, std::uint64_t seed,
    std::uint64_t epoch) {
  require(batch_size >= 1, "batch size must be at least 1");
  std::vector<std::size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "epoch-shuffle-" + std::to_string(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < corpus_size; start += batch_size) {
    std::size_t stop = std::min(corpus_size, start + batch_size);
    std::vector<std::size_t> batch(order.begin() + start,
                                   order.begin() + stop);
    rng.shuffle(batch);
    batches.push_back(std::move(batch));
  }
  return batches;
}

// Global L2 rescaling: one shared factor, applied only above the threshold.
// Returns the pre-clip norm.
template <class T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm = 1.0) {
  require(max_norm > 0.0, "max gradient norm must be positive");
  double sum_sq = 0.0;
  for (const auto& g : grads) {
    for (T v : g.data) sum_sq += static_cast<double>(v) * v;
  }
  double norm = std::sqrt(sum_sq);
  require(std::isfinite(norm),
          "training step aborted: non-finite gradient norm");
  if (norm > max_norm) {
    T factor = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (T& v : g.data) v *= factor;
    }
  }
  return norm;
}

// Adadelta accumulators, one slot pair per parameter tensor in named()
// order.
template <class T>
struct AdadeltaState {
  double rho = 0.95;
  double epsilon = 1e-6;
  std::vector<Tensor<T>> grad_sq, delta_sq;
  std::uint64_t update_count = 0;

  void attach(ModelParameters<T>& params) {
    grad_sq.clear();
    delta_sq.clear();
    for (auto& [name, tensor] : params.named()) {
      grad_sq.push_back(Tensor<T>(tensor->rows(), tensor->cols()));
      delta_sq.push_back(Tensor<T>(tensor->rows(), tensor->cols()));
    }
    update_count = 0;
  }
};

template <class T>
void adadelta_step(ModelParameters<T>& params,
                   const std::vector<Tensor<T>>& grads,
                   AdadeltaState<T>& state) {
  auto named = params.named();
  require(grads.size() == named.size(), "adadelta: ", grads.size(),
          " gradients for ", named.size(), " parameters");
  require(state.grad_sq.size() == named.size(),
          "adadelta state not attached to this model");
  const T rho = static_cast<T>(state.rho);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t p = 0; p < named.size(); ++p) {
    Tensor<T>& x = *named[p].second;
    const Tensor<T>& g = grads[p];
    require(g.same_shape(x), "adadelta: gradient shape ", g.shape_str(),
            " does not match parameter '", named[p].first, "' ",
            x.shape_str());
    Tensor<T>& eg2 = state.grad_sq[p];
    Tensor<T>& edx2 = state.delta_sq[p];
    for (std::size_t i = 0; i < x.numel(); ++i) {
      eg2[i] = rho * eg2[i] + (T(1) - rho) * g[i] * g[i];
      T dx = -std::sqrt(edx2[i] + eps) / std::sqrt(eg2[i] + eps) * g[i];
      require(std::isfinite(static_cast<double>(dx)),
              "training step aborted: non-finite update in '",
              named[p].first, "'");
      edx2[i] = rho * edx2[i] + (T(1) - rho) * dx * dx;
      x[i] += dx;
    }
  }
  ++state.update_count;
}

// Best-checkpoint bookkeeping: improvements reset the counter, anything
// else increments it.
struct EarlyStopping {
  double best = -1.0;
  std::size_t evaluations_since_improvement = 0;

  bool offer(double dev_bleu) {
    if (dev_bleu > best) {
      best = dev_bleu;
      evaluations_since_improvement = 0;
      return true;
    }
    ++evaluations_since_improvement;
    return false;
  }

  bool exhausted(std::size_t patience) const {
    return evaluations_since_improvement >= patience;
  }
};

struct TrainingSchedule {
  std::size_t batch_size = 80;
  std::size_t eval_every_updates = 500;
  std::size_t patience = 5;
  std::size_t max_epochs = 10;
  double wall_clock_limit_seconds = 0.0;  // 0 means unlimited
  double max_gradient_norm = 1.0;
};

struct TrainingResult {
  std::string checkpoint_path;
  double best_dev_bleu = 0.0;
  std::vector<double> dev_trace;
  std::string log;  // tab-separated, one line per evaluation
  std::size_t updates = 0;
  std::size_t epochs_completed = 0;
};

// Sum of teacher-forced sentence losses over one batch. The batch is
// padded only conceptually: each sentence contributes exactly its own
// positions, which is what a padding mask excluded from the loss computes.
template <class T>
NodeId build_batch_loss(Graph<T>& g, const BoundModel& b,
                        const Hyperparameters& hp, const IdCorpus& corpus,
                        const std::vector<std::size_t>& batch,
                        DropoutMasks<T>& drop, std::size_t* token_count) {
  require(!batch.empty(), "empty batch");
  NodeId total = -1;
  std::size_t tokens = 0;
  for (std::size_t idx : batch) {
    require(idx < corpus.size(), "batch index ", idx, " out of range");
    NodeId loss = build_sentence_loss(g, b, hp, corpus[idx].source,
                                      corpus[idx].target, drop);
    total = total < 0 ? loss : g.add(total, loss);
    tokens += corpus[idx].target.size();
  }
  if (token_count) *token_count = tokens;
  return total;
}

// Minibatch Adadelta training with periodic greedy dev decoding, BLEU-based
// early stopping, and best-checkpoint selection. The returned checkpoint is
// the best seen, never simply the last.
template <class T>
TrainingResult train(ModelParameters<T>& params, const IdCorpus& corpus,
                     const DevSet& dev, const Vocabulary& target_vocab,
                     const TrainingSchedule& schedule,
                     const std::string& checkpoint_dir,
                     std::ostream* log_stream = nullptr) {
  require(!corpus.empty(), "training corpus must be nonempty");
  require(!dev.sources.empty(), "dev set must be nonempty");
  require(dev.sources.size() == dev.references.size(), "dev set has ",
          dev.sources.size(), " sources but ", dev.references.size(),
          " references");
  require(schedule.eval_every_updates >= 1,
          "eval_every_updates must be at least 1");
  require(target_vocab.size() == params.hp.target_vocab_size,
          "target vocabulary size ", target_vocab.size(),
          " does not match the model (", params.hp.target_vocab_size, ")");

  const auto start_time = std::chrono::steady_clock::now();
  auto seconds_elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_time)
        .count();
  };

  std::filesystem::create_directories(checkpoint_dir);
  const std::string checkpoint_name = "best.ckpt";
  const std::string checkpoint_path =
      (std::filesystem::path(checkpoint_dir) / checkpoint_name).string();

  AdadeltaState<T> state;
  state.attach(params);
  Rng dropout_rng(derive_seed(params.hp.seed, "training-dropout"));
  EarlyStopping stopping;
  TrainingResult result;
  std::ostringstream log;
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  std::size_t update = 0;

  auto evaluate = [&](std::size_t epoch) {
    std::vector<std::string> hyps;
    hyps.reserve(dev.sources.size());
    for (std::size_t i = 0; i < dev.sources.size(); ++i) {
      try {
        auto ids = greedy_decode_ids(params, dev.sources[i]);
        hyps.push_back(join_tokens(revert_coded_output(
            target_vocab.decode(ids))));
      } catch (const Error& e) {
        throw Error("training aborted: dev decode failed at sentence " +
                    std::to_string(i) + ": " + e.what());
      }
    }
    double dev_bleu = compute_bleu(hyps, dev.references).bleu;
    result.dev_trace.push_back(dev_bleu);
    if (stopping.offer(dev_bleu)) {
      save_checkpoint(params, checkpoint_path);
    }
    double mean_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    loss_sum = 0.0;
    loss_batches = 0;
    std::ostringstream line;
    line << update << "\t" << epoch << "\t" << detail::fixed_str(mean_loss, 6)
         << "\t" << detail::fixed_str(dev_bleu, 2) << "\t"
         << stopping.evaluations_since_improvement << "\t" << checkpoint_name;
    log << line.str() << "\n";
    if (log_stream) *log_stream << line.str() << "\n";
  };

  evaluate(0);  // the starting point competes for best
  bool stop = stopping.exhausted(schedule.patience);

  for (std::size_t epoch = 1; epoch <= schedule.max_epochs && !stop;
       ++epoch) {
    auto batches = make_batches(corpus.size(), schedule.batch_size,
                                params.hp.seed, epoch);
    for (const auto& batch : batches) {
      Graph<T> g;
      BoundModel bound = bind_parameters(g, params);
      DropoutMasks<T> drop(g, params.hp, &dropout_rng);
      std::size_t tokens = 0;
      NodeId sum =
          build_batch_loss(g, bound, params.hp, corpus, batch, drop, &tokens);
      NodeId loss = g.scale(sum, static_cast<T>(1.0 / tokens));
      g.set_output(loss);
      g.backward();
      loss_sum += static_cast<double>(g.value(loss)[0]);
      ++loss_batches;

      std::vector<Tensor<T>> grads;
      grads.reserve(state.grad_sq.size());
      for (NodeId node : bound.in_named_order()) {
        grads.push_back(g.gradient(node));
      }
      clip_gradients(grads, schedule.max_gradient_norm);
      adadelta_step(params, grads, state);
      ++update;

      if (update % schedule.eval_every_updates == 0) {
        evaluate(epoch);
        if (stopping.exhausted(schedule.patience)) {
          stop = true;
          break;
        }
      }
      if (schedule.wall_clock_limit_seconds > 0.0 &&
          seconds_elapsed() > schedule.wall_clock_limit_seconds) {
        stop = true;
        break;
      }
    }
    result.epochs_completed = epoch;
    if (stop) break;
  }

  if (loss_batches > 0) {
    // trailing updates since the last scheduled evaluation still compete
    evaluate(result.epochs_completed);
  }

  result.checkpoint_path = checkpoint_path;
  result.best_dev_bleu = stopping.best;
  result.updates = update;
  result.log = log.str();
  return result;
}

// Continued training on genuine parallel data: same engine, fresh
// accumulators. The base model is evaluated first, so the returned
// checkpoint can never score below it on the dev set.
template <class T>
TrainingResult adapt(const std::string& base_checkpoint,
                     const IdCorpus& genuine, const DevSet& dev,
                     const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab,
                     const TrainingSchedule& schedule,
                     const std::string& checkpoint_dir,
                     std::ostream* log_stream = nullptr) {
  ModelParameters<T> params = load_checkpoint<T>(base_checkpoint);
  require(source_vocab.size() == params.hp.source_vocab_size,
          "adaptation source vocabulary has ", source_vocab.size(),
          " entries, checkpoint expects ", params.hp.source_vocab_size);
  require(target_vocab.size() == params.hp.target_vocab_size,
          "adaptation target vocabulary has ", target_vocab.size(),
          " entries, checkpoint expects ", params.hp.target_vocab_size);
  if (schedule.max_epochs == 0) {
    // explicit no-op bound: hand back the base checkpoint untouched
    TrainingResult result;
    result.checkpoint_path = base_checkpoint;
    result.best_dev_bleu = 0.0;
    return result;
  }
  return train(params, genuine, dev, target_vocab, schedule, checkpoint_dir,
               log_stream);
}

}  // namespace unmt
