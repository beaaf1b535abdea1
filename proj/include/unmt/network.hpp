#pragma once

#include <utility>
#include <vector>

#include "unmt/graph.hpp"
#include "unmt/model.hpp"
#include "unmt/rng.hpp"

namespace unmt {

// Node handles for one model bound into one graph. Training binds mutably
// (gradient checks may perturb storage); inference binds read-only.
struct BoundGru {
  NodeId w_update, u_update, b_update;
  NodeId w_reset, u_reset, b_reset;
  NodeId w_cand, u_cand, b_cand;
};

struct BoundModel {
  NodeId embed_src, embed_tgt;
  BoundGru enc_fw, enc_bw, dec;
  NodeId init_w, init_b;
  NodeId att_state_w, att_annot_w, att_score_v;
  NodeId readout_w, readout_b;
  NodeId output_w, output_b;

  // Same traversal order as ModelParameters::named(); optimizer slots and
  // gradient collection rely on the two matching.
  std::vector<NodeId> in_named_order() const {
    std::vector<NodeId> out{embed_src, embed_tgt};
    for (const BoundGru* gru : {&enc_fw, &enc_bw, &dec}) {
      out.insert(out.end(),
                 {gru->w_update, gru->u_update, gru->b_update, gru->w_reset,
                  gru->u_reset, gru->b_reset, gru->w_cand, gru->u_cand,
                  gru->b_cand});
    }
    out.insert(out.end(), {init_w, init_b, att_state_w, att_annot_w,
                           att_score_v, readout_w, readout_b, output_w,
                           output_b});
    return out;
  }
};

namespace detail {

template <class T, class P>
BoundGru bind_gru(Graph<T>& g, const std::string& prefix, P& w) {
  return BoundGru{
      g.parameter(w.w_update, prefix + ".w_update"),
      g.parameter(w.u_update, prefix + ".u_update"),
      g.parameter(w.b_update, prefix + ".b_update"),
      g.parameter(w.w_reset, prefix + ".w_reset"),
      g.parameter(w.u_reset, prefix + ".u_reset"),
      g.parameter(w.b_reset, prefix + ".b_reset"),
      g.parameter(w.w_cand, prefix + ".w_cand"),
      g.parameter(w.u_cand, prefix + ".u_cand"),
      g.parameter(w.b_cand, prefix + ".b_cand"),
  };
}

template <class T, class P>
BoundModel bind_model(Graph<T>& g, P& params) {
  BoundModel b;
  b.embed_src = g.parameter(params.embed_src, "embed_src");
  b.embed_tgt = g.parameter(params.embed_tgt, "embed_tgt");
  b.enc_fw = bind_gru(g, "enc_fw", params.enc_fw);
  b.enc_bw = bind_gru(g, "enc_bw", params.enc_bw);
  b.dec = bind_gru(g, "dec", params.dec);
  b.init_w = g.parameter(params.init_w, "init_state.w");
  b.init_b = g.parameter(params.init_b, "init_state.b");
  b.att_state_w = g.parameter(params.att_state_w, "attention.state_w");
  b.att_annot_w = g.parameter(params.att_annot_w, "attention.annot_w");
  b.att_score_v = g.parameter(params.att_score_v, "attention.score_v");
  b.readout_w = g.parameter(params.readout_w, "readout.w");
  b.readout_b = g.parameter(params.readout_b, "readout.b");
  b.output_w = g.parameter(params.output_w, "output.w");
  b.output_b = g.parameter(params.output_b, "output.b");
  return b;
}

}  // namespace detail

template <class T>
BoundModel bind_parameters(Graph<T>& g, ModelParameters<T>& params) {
  return detail::bind_model(g, params);
}

template <class T>
BoundModel bind_parameters(Graph<T>& g, const ModelParameters<T>& params) {
  return detail::bind_model(g, params);
}

// Fresh inverted-dropout masks; absent rng or zero rate contributes nothing.
template <class T>
class DropoutMasks {
 public:
  DropoutMasks(Graph<T>& g, const Hyperparameters& hp, Rng* rng)
      : g_(g), hp_(hp), rng_(rng) {}

  bool active() const { return rng_ != nullptr; }

  // rate 0.2 points: embedding outputs, recurrent hidden states
  NodeId embedding_hidden(NodeId x) {
    return apply(x, hp_.dropout_embedding_hidden);
  }
  // rate 0.1 points: attention/readout input, pre-softmax readout
  NodeId input_output(NodeId x) { return apply(x, hp_.dropout_input_output); }

 private:
  Graph<T>& g_;
  const Hyperparameters& hp_;
  Rng* rng_;

  NodeId apply(NodeId x, double rate) {
    if (!rng_ || rate <= 0.0) return x;
    const Tensor<T>& v = g_.value(x);
    Tensor<T> mask(v.rows(), v.cols());
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask.data) m = rng_->bernoulli(rate) ? T(0) : keep;
    return g_.dropout_apply(x, g_.input(std::move(mask), "dropout-mask"));
  }
};

// z = sigma(x W_z + h U_z + b_z); r = sigma(x W_r + h U_r + b_r)
// cand = tanh(x W_h + (r*h) U_h + b_h); h' = (1-z)*h + z*cand
template <class T>
NodeId gru_step(Graph<T>& g, const BoundGru& w, NodeId x, NodeId h) {
  auto z = g.sigmoid_of(g.add(
      g.add(g.matmul(x, w.w_update), g.matmul(h, w.u_update)), w.b_update));
  auto r = g.sigmoid_of(
      g.add(g.add(g.matmul(x, w.w_reset), g.matmul(h, w.u_reset)), w.b_reset));
  auto cand = g.tanh_of(g.add(
      g.add(g.matmul(x, w.w_cand), g.matmul(g.multiply(r, h), w.u_cand)),
      w.b_cand));
  return g.add(h, g.multiply(z, g.add(cand, g.scale(h, T(-1)))));
}

// Bidirectional encoding; returns the n x 2*hidden annotation matrix node.
template <class T>
NodeId build_encoder(Graph<T>& g, const BoundModel& b,
                     const Hyperparameters& hp, const std::vector<int>& ids,
                     DropoutMasks<T>& drop) {
  require(!ids.empty(), "encode: empty source sequence");
  for (int id : ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < hp.source_vocab_size,
            "encode: source id ", id, " outside vocabulary of size ",
            hp.source_vocab_size);
  }
  const std::size_t n = ids.size();
  std::vector<NodeId> embedded(n);
  for (std::size_t i = 0; i < n; ++i) {
    embedded[i] = drop.embedding_hidden(g.row_lookup(b.embed_src, ids[i]));
  }

  Tensor<T> zero_state(1, hp.hidden_dim, T(0));
  std::vector<NodeId> forward(n), backward(n);
  NodeId h = g.input(zero_state, "enc-fw-start");
  for (std::size_t i = 0; i < n; ++i) {
    h = drop.embedding_hidden(gru_step(g, b.enc_fw, embedded[i], h));
    forward[i] = h;
  }
  h = g.input(zero_state, "enc-bw-start");
  for (std::size_t i = n; i-- > 0;) {
    h = drop.embedding_hidden(gru_step(g, b.enc_bw, embedded[i], h));
    backward[i] = h;
  }

  std::vector<NodeId> annotations(n);
  for (std::size_t i = 0; i < n; ++i) {
    annotations[i] = g.concat({forward[i], backward[i]}, 1);
  }
  return n == 1 ? annotations[0] : g.concat(annotations, 0);
}

// z_0 = tanh(mean(annotations) W_init + b)
template <class T>
NodeId build_initial_state(Graph<T>& g, const BoundModel& b,
                           NodeId annotations) {
  const std::size_t n = g.value(annotations).rows();
  auto ones = g.input(Tensor<T>(1, n, T(1)), "mean-ones");
  auto mean = g.scale(g.matmul(ones, annotations), T(1) / static_cast<T>(n));
  return g.tanh_of(g.add(g.matmul(mean, b.init_w), b.init_b));
}

// relevance_i = v . tanh(W z_prev + U h_i), normalized over i;
// context = sum_i alpha_i h_i
template <class T>
std::pair<NodeId, NodeId> build_attention(Graph<T>& g, const BoundModel& b,
                                          NodeId z_prev, NodeId annotations,
                                          DropoutMasks<T>& drop) {
  auto query = drop.input_output(z_prev);
  auto pre = g.tanh_of(g.add(g.matmul(annotations, b.att_annot_w),
                             g.matmul(query, b.att_state_w)));
  auto scores = g.matmul(pre, b.att_score_v);  // n x 1
  auto alpha =
      g.softmax_rows(g.reshape(scores, 1, g.value(scores).rows()));
  auto context = g.matmul(alpha, annotations);
  return {context, alpha};
}

template <class T>
struct DecodeStepNodes {
  NodeId state;         // z_j
  NodeId context;       // c_j
  NodeId attention;     // alpha_j, 1 x n
  NodeId distribution;  // 1 x target_vocab_size
};

template <class T>
DecodeStepNodes<T> build_decode_step(Graph<T>& g, const BoundModel& b,
                                     const Hyperparameters& hp, NodeId z_prev,
                                     int y_prev_id, NodeId annotations,
                                     DropoutMasks<T>& drop) {
  require(y_prev_id >= 0 &&
              static_cast<std::size_t>(y_prev_id) < hp.target_vocab_size,
          "decode: target id ", y_prev_id, " outside vocabulary of size ",
          hp.target_vocab_size);
  auto t_prev = drop.embedding_hidden(g.row_lookup(b.embed_tgt, y_prev_id));
  auto [context, alpha] = build_attention(g, b, z_prev, annotations, drop);
  auto x = g.concat({t_prev, context}, 1);
  auto z = drop.embedding_hidden(gru_step(g, b.dec, x, z_prev));
  auto readout_in = drop.input_output(g.concat({z, t_prev, context}, 1));
  auto readout = drop.input_output(
      g.tanh_of(g.add(g.matmul(readout_in, b.readout_w), b.readout_b)));
  auto logits = g.add(g.matmul(readout, b.output_w), b.output_b);
  auto probs = g.softmax_rows(logits);
  return {z, context, alpha, probs};
}

// Teacher-forced sum of per-token cross-entropies. target_ids must end with
// the end-of-sentence id; the start symbol is fed before the first gold token.
template <class T>
NodeId build_sentence_loss(Graph<T>& g, const BoundModel& b,
                           const Hyperparameters& hp,
                           const std::vector<int>& source_ids,
                           const std::vector<int>& target_ids,
                           DropoutMasks<T>& drop, int start_id = kBosId) {
  require(!target_ids.empty(), "sentence loss: empty target sequence");
  require(target_ids.back() == kEosId,
          "sentence loss: target must end with the end-of-sentence symbol");
  auto annotations = build_encoder(g, b, hp, source_ids, drop);
  auto z = build_initial_state(g, b, annotations);
  NodeId total = -1;
  int prev = start_id;
  for (int gold : target_ids) {
    auto step = build_decode_step(g, b, hp, z, prev, annotations, drop);
    auto term = g.cross_entropy(step.distribution, gold);
    total = total < 0 ? term : g.add(total, term);
    z = step.state;
    prev = gold;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Value-level wrappers used by decoding and evaluation. Each call builds a
// short-lived graph over read-only parameters, so the math lives in exactly
// one place.

template <class T>
struct EncodedSource {
  Tensor<T> annotations;  // n x 2*hidden
};

template <class T>
struct DecoderStep {
  Tensor<T> state;
  Tensor<T> context;
  Tensor<T> attention;
  Tensor<T> distribution;
};

template <class T>
EncodedSource<T> encode(const ModelParameters<T>& params,
                        const std::vector<int>& source_ids,
                        Rng* dropout_rng = nullptr) {
  Graph<T> g;
  auto b = bind_parameters(g, params);
  DropoutMasks<T> drop(g, params.hp, dropout_rng);
  auto annotations = build_encoder(g, b, params.hp, source_ids, drop);
  return {g.value(annotations)};
}

template <class T>
Tensor<T> initial_decoder_state(const ModelParameters<T>& params,
                                const EncodedSource<T>& enc) {
  require(enc.annotations.rows() >= 1, "initial state: empty encoding");
  Graph<T> g;
  auto b = bind_parameters(g, params);
  auto h = g.input(enc.annotations, "annotations");
  return g.value(build_initial_state(g, b, h));
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> attention_step(
    const ModelParameters<T>& params, const Tensor<T>& z_prev,
    const EncodedSource<T>& enc) {
  Graph<T> g;
  auto b = bind_parameters(g, params);
  DropoutMasks<T> drop(g, params.hp, nullptr);
  auto h = g.input(enc.annotations, "annotations");
  auto z = g.input(z_prev, "state");
  auto [context, alpha] = build_attention(g, b, z, h, drop);
  return {g.value(context), g.value(alpha)};
}

template <class T>
DecoderStep<T> decode_step(const ModelParameters<T>& params,
                           const Tensor<T>& z_prev, int y_prev_id,
                           const EncodedSource<T>& enc) {
  Graph<T> g;
  auto b = bind_parameters(g, params);
  DropoutMasks<T> drop(g, params.hp, nullptr);
  auto h = g.input(enc.annotations, "annotations");
  auto z = g.input(z_prev, "state");
  auto step = build_decode_step(g, b, params.hp, z, y_prev_id, h, drop);
  return {g.value(step.state), g.value(step.context), g.value(step.attention),
          g.value(step.distribution)};
}

// Convenience for tests and the gradient-check harness.
template <class T>
T sentence_loss_value(const ModelParameters<T>& params,
                      const std::vector<int>& source_ids,
                      const std::vector<int>& target_ids,
                      Rng* dropout_rng = nullptr) {
  Graph<T> g;
  auto b = bind_parameters(g, params);
  DropoutMasks<T> drop(g, params.hp, dropout_rng);
  auto loss = build_sentence_loss(g, b, params.hp, source_ids, target_ids, drop);
  return g.value(loss)[0];
}

}  // namespace unmt
