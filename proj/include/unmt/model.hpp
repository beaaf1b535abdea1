#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "unmt/common.hpp"
#include "unmt/rng.hpp"
#include "unmt/tensor.hpp"

namespace unmt {

// Reserved vocabulary slots shared by every vocabulary file.
inline constexpr int kUnkId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kBosId = 2;
inline constexpr const char* kUnkText = "<unk>";
inline constexpr const char* kEosText = "</s>";
inline constexpr const char* kBosText = "<s>";

struct Hyperparameters {
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;
  std::size_t embedding_dim = 1000;
  std::size_t hidden_dim = 1024;
  std::size_t attention_dim = 0;  // 0: use hidden_dim
  std::size_t readout_dim = 0;    // 0: use embedding_dim
  double dropout_embedding_hidden = 0.2;
  double dropout_input_output = 0.1;
  int precision_bits = 64;
  std::uint64_t seed = 1;

  std::size_t attention_width() const {
    return attention_dim ? attention_dim : hidden_dim;
  }
  std::size_t readout_width() const {
    return readout_dim ? readout_dim : embedding_dim;
  }

  void validate() const {
    require(source_vocab_size >= 1 && target_vocab_size >= 1,
            "vocabulary sizes must be at least 1");
    require(embedding_dim >= 1 && hidden_dim >= 1, "dimensions must be >= 1");
    require(dropout_embedding_hidden >= 0 && dropout_embedding_hidden < 1,
            "dropout rate must lie in [0,1)");
    require(dropout_input_output >= 0 && dropout_input_output < 1,
            "dropout rate must lie in [0,1)");
    require(precision_bits == 32 || precision_bits == 64,
            "precision must be 32 or 64 bits");
  }

  bool operator==(const Hyperparameters&) const = default;
};

template <class T>
struct GruWeights {
  Tensor<T> w_update, u_update, b_update;
  Tensor<T> w_reset, u_reset, b_reset;
  Tensor<T> w_cand, u_cand, b_cand;

  GruWeights() = default;
  GruWeights(std::size_t input_dim, std::size_t hidden_dim)
      : w_update(input_dim, hidden_dim),
        u_update(hidden_dim, hidden_dim),
        b_update(1, hidden_dim),
        w_reset(input_dim, hidden_dim),
        u_reset(hidden_dim, hidden_dim),
        b_reset(1, hidden_dim),
        w_cand(input_dim, hidden_dim),
        u_cand(hidden_dim, hidden_dim),
        b_cand(1, hidden_dim) {}
};

// All learnable tensors. States are row vectors; every map is applied as
// row * matrix, so a matrix named a->b has shape (dim a) x (dim b).
template <class T>
struct ModelParameters {
  Hyperparameters hp;

  Tensor<T> embed_src, embed_tgt;
  GruWeights<T> enc_fw, enc_bw, dec;
  Tensor<T> init_w, init_b;
  Tensor<T> att_state_w, att_annot_w, att_score_v;
  Tensor<T> readout_w, readout_b;
  Tensor<T> output_w, output_b;

  ModelParameters() = default;

  explicit ModelParameters(const Hyperparameters& h) : hp(h) {
    hp.validate();
    const std::size_t e = hp.embedding_dim;
    const std::size_t d = hp.hidden_dim;
    const std::size_t a = hp.attention_width();
    const std::size_t r = hp.readout_width();
    embed_src = Tensor<T>(hp.source_vocab_size, e);
    embed_tgt = Tensor<T>(hp.target_vocab_size, e);
    enc_fw = GruWeights<T>(e, d);
    enc_bw = GruWeights<T>(e, d);
    dec = GruWeights<T>(e + 2 * d, d);
    init_w = Tensor<T>(2 * d, d);
    init_b = Tensor<T>(1, d);
    att_state_w = Tensor<T>(d, a);
    att_annot_w = Tensor<T>(2 * d, a);
    att_score_v = Tensor<T>(a, 1);
    readout_w = Tensor<T>(d + e + 2 * d, r);
    readout_b = Tensor<T>(1, r);
    output_w = Tensor<T>(r, hp.target_vocab_size);
    output_b = Tensor<T>(1, hp.target_vocab_size);
  }

  // Fixed traversal order; checkpoints and optimizer slots rely on it.
  std::vector<std::pair<std::string, Tensor<T>*>> named() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    out.emplace_back("embed_src", &embed_src);
    out.emplace_back("embed_tgt", &embed_tgt);
    const auto gru = [&out](const std::string& prefix, GruWeights<T>& g) {
      out.emplace_back(prefix + ".w_update", &g.w_update);
      out.emplace_back(prefix + ".u_update", &g.u_update);
      out.emplace_back(prefix + ".b_update", &g.b_update);
      out.emplace_back(prefix + ".w_reset", &g.w_reset);
      out.emplace_back(prefix + ".u_reset", &g.u_reset);
      out.emplace_back(prefix + ".b_reset", &g.b_reset);
      out.emplace_back(prefix + ".w_cand", &g.w_cand);
      out.emplace_back(prefix + ".u_cand", &g.u_cand);
      out.emplace_back(prefix + ".b_cand", &g.b_cand);
    };
    gru("enc_fw", enc_fw);
    gru("enc_bw", enc_bw);
    gru("dec", dec);
    out.emplace_back("init_state.w", &init_w);
    out.emplace_back("init_state.b", &init_b);
    out.emplace_back("attention.state_w", &att_state_w);
    out.emplace_back("attention.annot_w", &att_annot_w);
    out.emplace_back("attention.score_v", &att_score_v);
    out.emplace_back("readout.w", &readout_w);
    out.emplace_back("readout.b", &readout_b);
    out.emplace_back("output.w", &output_w);
    out.emplace_back("output.b", &output_b);
    return out;
  }
};

namespace detail {
inline bool is_bias_name(const std::string& name) {
  return name.size() >= 2 &&
         (name.compare(name.size() - 2, 2, ".b") == 0 ||
          name.find(".b_") != std::string::npos);
}
}  // namespace detail

// Weights uniform in [-0.08, 0.08]; biases zero; deterministic under seed.
template <class T>
ModelParameters<T> init_parameters(const Hyperparameters& hp) {
  ModelParameters<T> params(hp);
  Rng rng(derive_seed(hp.seed, "parameter-init"));
  for (auto& [name, tensor] : params.named()) {
    if (detail::is_bias_name(name)) continue;
    for (auto& v : tensor->data) v = static_cast<T>(rng.uniform(-0.08, 0.08));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic, format version, hyperparameter block, then tensor
// records (name, rank, dims, element-size tag, raw IEEE-754 payload).
// Written on a little-endian host for a little-endian host; round trips are
// bit-exact.

inline constexpr char kCheckpointMagic[8] = {'U', 'N', 'M', 'T',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
bool read_pod(std::istream& in, V& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  return static_cast<bool>(in);
}

}  // namespace detail

template <class T>
void save_checkpoint(ModelParameters<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open '", path, "' for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(out, kCheckpointVersion);

  const Hyperparameters& hp = params.hp;
  const std::uint8_t element_size = sizeof(T);
  detail::write_pod(out, element_size);
  for (std::uint64_t v : {hp.source_vocab_size, hp.target_vocab_size,
                          hp.embedding_dim, hp.hidden_dim, hp.attention_dim,
                          hp.readout_dim}) {
    detail::write_pod(out, v);
  }
  detail::write_pod(out, hp.dropout_embedding_hidden);
  detail::write_pod(out, hp.dropout_input_output);
  detail::write_pod(out, hp.seed);

  auto named = params.named();
  detail::write_pod(out, static_cast<std::uint32_t>(named.size()));
  for (auto& [name, tensor] : named) {
    detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape) {
      detail::write_pod(out, static_cast<std::uint64_t>(d));
    }
    detail::write_pod(out, element_size);
    out.write(reinterpret_cast<const char*>(tensor->data.data()),
              static_cast<std::streamsize>(tensor->numel() * sizeof(T)));
  }
  out.flush();
  require(out.good(), "write failure while saving checkpoint '", path, "'");
}

// Element size stored in the file, without loading it. Lets a caller pick the
// right precision instantiation.
inline int peek_checkpoint_precision_bits(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint '", path, "'");
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, kCheckpointMagic, 8) == 0,
          "'", path, "' is not a model checkpoint (bad magic)");
  std::uint32_t version = 0;
  require(detail::read_pod(in, version), "checkpoint '", path, "' truncated");
  require(version == kCheckpointVersion, "unsupported checkpoint version ",
          version, " (expected ", kCheckpointVersion, ")");
  std::uint8_t element_size = 0;
  require(detail::read_pod(in, element_size), "checkpoint '", path,
          "' truncated");
  require(element_size == 4 || element_size == 8,
          "checkpoint '", path, "' carries unknown element size ",
          int(element_size));
  return element_size * 8;
}

template <class T>
ModelParameters<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint '", path, "'");
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, kCheckpointMagic, 8) == 0,
          "'", path, "' is not a model checkpoint (bad magic)");
  std::uint32_t version = 0;
  require(detail::read_pod(in, version), "checkpoint '", path, "' truncated");
  require(version == kCheckpointVersion, "unsupported checkpoint version ",
          version, " (expected ", kCheckpointVersion, ")");

  std::uint8_t element_size = 0;
  require(detail::read_pod(in, element_size),
          "checkpoint '", path, "' truncated in hyperparameter block");
  require(element_size == sizeof(T), "checkpoint stores ",
          int(element_size) * 8, "-bit values; requested ", sizeof(T) * 8,
          "-bit load");

  Hyperparameters hp;
  hp.precision_bits = element_size * 8;
  std::uint64_t dims[6];
  for (auto& d : dims) {
    require(detail::read_pod(in, d),
            "checkpoint '", path, "' truncated in hyperparameter block");
  }
  hp.source_vocab_size = dims[0];
  hp.target_vocab_size = dims[1];
  hp.embedding_dim = dims[2];
  hp.hidden_dim = dims[3];
  hp.attention_dim = dims[4];
  hp.readout_dim = dims[5];
  bool ok = detail::read_pod(in, hp.dropout_embedding_hidden) &&
            detail::read_pod(in, hp.dropout_input_output) &&
            detail::read_pod(in, hp.seed);
  require(ok, "checkpoint '", path, "' truncated in hyperparameter block");
  hp.validate();

  ModelParameters<T> params(hp);
  auto named = params.named();
  std::uint32_t count = 0;
  require(detail::read_pod(in, count), "checkpoint '", path, "' truncated");
  require(count == named.size(), "checkpoint '", path, "' holds ", count,
          " tensors, hyperparameters imply ", named.size());

  for (auto& [expected_name, tensor] : named) {
    std::uint32_t name_len = 0;
    require(detail::read_pod(in, name_len),
            "checkpoint truncated before tensor '", expected_name, "'");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(static_cast<bool>(in),
            "checkpoint truncated while reading tensor name (expected '",
            expected_name, "')");
    require(name == expected_name, "checkpoint tensor order mismatch: found '",
            name, "', expected '", expected_name, "'");
    std::uint32_t rank = 0;
    require(detail::read_pod(in, rank),
            "checkpoint truncated while reading tensor '", name, "'");
    require(rank == tensor->rank(), "checkpoint tensor '", name, "' has rank ",
            rank, ", hyperparameters imply rank ", tensor->rank());
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      require(detail::read_pod(in, v),
              "checkpoint truncated while reading tensor '", name, "'");
      d = v;
    }
    require(shape == tensor->shape, "checkpoint tensor '", name,
            "' has shape ", Tensor<T>::shape_string(shape),
            ", hyperparameters imply ", tensor->shape_str());
    std::uint8_t tag = 0;
    require(detail::read_pod(in, tag),
            "checkpoint truncated while reading tensor '", name, "'");
    require(tag == element_size, "checkpoint tensor '", name,
            "' precision tag disagrees with header");
    in.read(reinterpret_cast<char*>(tensor->data.data()),
            static_cast<std::streamsize>(tensor->numel() * sizeof(T)));
    require(static_cast<bool>(in), "checkpoint truncated while reading tensor '",
            name, "'");
    require(tensor->all_finite(), "checkpoint tensor '", name,
            "' holds non-finite values");
  }
  return params;
}

}  // namespace unmt
