#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "comve/encoder.hpp"
#include "comve/error.hpp"
#include "comve/nn/param_io.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "encoder";
using nn::Matrix;
using nn::Parameter;
using nn::Var;

Matrix normal(std::mt19937_64& rng, int rows, int cols, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Parameter weight(std::string name, std::mt19937_64& rng, int rows, int cols, double std_dev) {
  return Parameter(std::move(name), normal(rng, rows, cols, std_dev), true);
}

Parameter zeros(std::string name, int cols) {
  return Parameter(std::move(name), Matrix::Zero(1, cols), false);
}

Parameter ones(std::string name, int cols) {
  return Parameter(std::move(name), Matrix::Ones(1, cols), false);
}

}  // namespace

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(kModule, std::string(field) + " must be positive");
  };
  positive(hidden_size, "hidden_size");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(ffn_size, "ffn_size");
  positive(max_positions, "max_positions");
  if (hidden_size % num_heads != 0) {
    throw ConfigError(kModule, "hidden_size must be divisible by num_heads");
  }
  if (type_vocab_size < 0) throw ConfigError(kModule, "type_vocab_size must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError(kModule, "dropout must be in [0, 1)");
}

TransformerEncoder::TransformerEncoder(TransformerConfig config, Tokenizer tokenizer,
                                       std::uint64_t seed)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int h = config_.hidden_size;
  const double sd = config_.init_std;
  word_emb_ = weight("embeddings.word", rng, tokenizer_.size(), h, sd);
  pos_emb_ = weight("embeddings.position", rng, config_.max_positions, h, sd);
  type_emb_ = weight("embeddings.type", rng, std::max(config_.type_vocab_size, 1), h, sd);
  emb_ln_gamma_ = ones("embeddings.ln.gamma", h);
  emb_ln_beta_ = zeros("embeddings.ln.beta", h);
  layers_.reserve(static_cast<std::size_t>(config_.num_layers));
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer layer{
        weight(p + "attn.q.weight", rng, h, h, sd),   zeros(p + "attn.q.bias", h),
        weight(p + "attn.k.weight", rng, h, h, sd),   zeros(p + "attn.k.bias", h),
        weight(p + "attn.v.weight", rng, h, h, sd),   zeros(p + "attn.v.bias", h),
        weight(p + "attn.out.weight", rng, h, h, sd), zeros(p + "attn.out.bias", h),
        ones(p + "attn.ln.gamma", h),                 zeros(p + "attn.ln.beta", h),
        weight(p + "ffn.in.weight", rng, h, config_.ffn_size, sd),
        zeros(p + "ffn.in.bias", config_.ffn_size),
        weight(p + "ffn.out.weight", rng, config_.ffn_size, h, sd),
        zeros(p + "ffn.out.bias", h),
        ones(p + "ffn.ln.gamma", h),                  zeros(p + "ffn.ln.beta", h),
    };
    layers_.push_back(std::move(layer));
  }
  mlm_dense_w_ = weight("mlm.dense.weight", rng, h, h, sd);
  mlm_dense_b_ = zeros("mlm.dense.bias", h);
  mlm_ln_gamma_ = ones("mlm.ln.gamma", h);
  mlm_ln_beta_ = zeros("mlm.ln.beta", h);
  mlm_bias_ = zeros("mlm.bias", tokenizer_.size());
}

Var TransformerEncoder::maybe_dropout(nn::Tape& tape, Var x, const ForwardOptions& options) {
  if (!options.training || config_.dropout == 0.0) return x;
  if (!options.rng) throw ArgumentError(kModule, "training forward pass needs an rng");
  return tape.dropout(x, config_.dropout, *options.rng);
}

Var TransformerEncoder::layer_forward(nn::Tape& tape, Layer& layer, Var x,
                                      std::span<const int> mask, const ForwardOptions& options) {
  const int heads = config_.num_heads;
  const int head_dim = config_.hidden_size / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  auto linear = [&tape](Var in, Parameter& w, Parameter& b) {
    return tape.add_row(tape.matmul(in, tape.parameter(w)), tape.parameter(b));
  };
  const Var q = linear(x, layer.wq, layer.bq);
  const Var k = linear(x, layer.wk, layer.bk);
  const Var v = linear(x, layer.wv, layer.bv);

  std::vector<Var> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    const nn::Index off = hd * head_dim;
    const Var qh = tape.slice_cols(q, off, head_dim);
    const Var kh = tape.slice_cols(k, off, head_dim);
    const Var vh = tape.slice_cols(v, off, head_dim);
    Var probs = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt), mask);
    probs = maybe_dropout(tape, probs, options);
    head_out.push_back(tape.matmul(probs, vh));
  }
  Var attn = linear(tape.concat_cols(head_out), layer.wo, layer.bo);
  attn = maybe_dropout(tape, attn, options);
  x = tape.layer_norm(tape.add(x, attn), tape.parameter(layer.ln1_gamma),
                      tape.parameter(layer.ln1_beta), config_.layer_norm_eps);

  Var ff = tape.gelu(linear(x, layer.w1, layer.b1));
  ff = maybe_dropout(tape, linear(ff, layer.w2, layer.b2), options);
  return tape.layer_norm(tape.add(x, ff), tape.parameter(layer.ln2_gamma),
                         tape.parameter(layer.ln2_beta), config_.layer_norm_eps);
}

Var TransformerEncoder::encode(nn::Tape& tape, const EncodedInput& input,
                               const ForwardOptions& options) {
  const std::size_t n = input.length();
  if (n == 0) throw ArgumentError(kModule, "empty input");
  if (n > static_cast<std::size_t>(config_.max_positions)) {
    throw ArgumentError(kModule, "input length " + std::to_string(n) + " exceeds max_positions " +
                                     std::to_string(config_.max_positions));
  }
  if (input.attention_mask.size() != n || input.type_ids.size() != n) {
    throw ArgumentError(kModule, "token, type and mask sequences differ in length");
  }
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);

  Var x = tape.add(tape.embedding(word_emb_, input.token_ids), tape.embedding(pos_emb_, positions));
  if (supports_type_ids()) {
    for (int t : input.type_ids) {
      if (t < 0 || t >= config_.type_vocab_size) throw ArgumentError(kModule, "type id out of range");
    }
    x = tape.add(x, tape.embedding(type_emb_, input.type_ids));
  }
  x = tape.layer_norm(x, tape.parameter(emb_ln_gamma_), tape.parameter(emb_ln_beta_),
                      config_.layer_norm_eps);
  x = maybe_dropout(tape, x, options);
  for (auto& layer : layers_) x = layer_forward(tape, layer, x, input.attention_mask, options);
  return x;
}

Var TransformerEncoder::mlm_logits(nn::Tape& tape, const EncodedInput& input,
                                   const ForwardOptions& options) {
  const Var hidden = encode(tape, input, options);
  Var h = tape.add_row(tape.matmul(hidden, tape.parameter(mlm_dense_w_)),
                       tape.parameter(mlm_dense_b_));
  h = tape.layer_norm(tape.gelu(h), tape.parameter(mlm_ln_gamma_), tape.parameter(mlm_ln_beta_),
                      config_.layer_norm_eps);
  return tape.add_row(tape.matmul_nt(h, tape.parameter(word_emb_)), tape.parameter(mlm_bias_));
}

Matrix TransformerEncoder::log_probs(std::span<const int> token_ids) {
  EncodedInput input;
  input.token_ids.assign(token_ids.begin(), token_ids.end());
  input.type_ids.assign(token_ids.size(), 0);
  input.attention_mask.assign(token_ids.size(), 1);
  nn::Tape tape;
  const Matrix& z = tape.value(mlm_logits(tape, input, {}));
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return out;
}

std::vector<Parameter*> TransformerEncoder::parameters() {
  std::vector<Parameter*> out = {&word_emb_, &pos_emb_};
  if (supports_type_ids()) out.push_back(&type_emb_);
  out.push_back(&emb_ln_gamma_);
  out.push_back(&emb_ln_beta_);
  for (auto& l : layers_) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gamma,
                         &l.ln1_beta, &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gamma, &l.ln2_beta}) {
      out.push_back(p);
    }
  }
  for (Parameter* p : {&mlm_dense_w_, &mlm_dense_b_, &mlm_ln_gamma_, &mlm_ln_beta_, &mlm_bias_}) {
    out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> TransformerEncoder::parameters() const {
  auto mutable_params = const_cast<TransformerEncoder*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::unique_ptr<EncoderAdapter> TransformerEncoder::clone() const {
  return std::make_unique<TransformerEncoder>(*this);
}

void TransformerEncoder::save(const fs::path& dir) const {
  fs::create_directories(dir);
  const auto& sp = tokenizer_.specials();
  nlohmann::ordered_json j = {
      {"type", "transformer"},
      {"name", config_.name},
      {"hidden_size", config_.hidden_size},
      {"num_layers", config_.num_layers},
      {"num_heads", config_.num_heads},
      {"ffn_size", config_.ffn_size},
      {"max_positions", config_.max_positions},
      {"type_vocab_size", config_.type_vocab_size},
      {"dropout", config_.dropout},
      {"layer_norm_eps", config_.layer_norm_eps},
      {"init_std", config_.init_std},
      {"vocab_size", tokenizer_.size()},
      {"lower_case", tokenizer_.lower_case()},
      {"special_tokens",
       {{"pad", sp.pad}, {"unk", sp.unk}, {"cls", sp.cls}, {"sep", sp.sep}, {"mask", sp.mask}}},
  };
  std::ofstream out(dir / "encoder.json", std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + (dir / "encoder.json").string());
  out << j.dump(2) << '\n';
  tokenizer_.save(dir / "vocab.txt");
  const auto params = parameters();
  nn::save_parameters(dir / "params.bin", params);
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::load(const fs::path& dir) {
  std::ifstream in(dir / "encoder.json");
  if (!in) throw IoError(kModule, "no encoder.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("type").get<std::string>() != "transformer") {
      throw ConfigError(kModule, "unsupported encoder type " + j.at("type").dump());
    }
    TransformerConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.hidden_size = j.at("hidden_size").get<int>();
    cfg.num_layers = j.at("num_layers").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.ffn_size = j.at("ffn_size").get<int>();
    cfg.max_positions = j.at("max_positions").get<int>();
    cfg.type_vocab_size = j.at("type_vocab_size").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    cfg.init_std = j.value("init_std", 0.02);
    const auto& st = j.at("special_tokens");
    SpecialTokens sp{st.at("pad"), st.at("unk"), st.at("cls"), st.at("sep"), st.at("mask")};
    Tokenizer tok = Tokenizer::load(dir / "vocab.txt", sp, j.at("lower_case").get<bool>());
    if (tok.size() != j.at("vocab_size").get<int>()) {
      throw ConfigError(kModule, "vocab.txt size does not match encoder.json");
    }
    auto enc = std::make_unique<TransformerEncoder>(cfg, std::move(tok), 0);
    nn::load_parameters(dir / "params.bin", enc->parameters());
    return enc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(kModule, "malformed encoder.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace comve
