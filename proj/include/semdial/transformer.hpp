#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "semdial/errors.hpp"
#include "semdial/linearize.hpp"

namespace semdial {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t hidden_dim = 256;
  std::size_t max_positions = 512;
  std::size_t token_type_count = kTokenTypeCount;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  // Throws ValidationError on zero sizes, hidden_dim not divisible by heads,
  // or dropout outside [0, 1).
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

// Offsets of every tensor inside the flat parameter vector. Matrices are
// column-major; weights map inputs on the right (y = x W + b, x a row).
struct ParameterLayout {
  struct Layer {
    std::size_t ln1_gain, ln1_bias, w_qkv, b_qkv, w_out, b_out;
    std::size_t ln2_gain, ln2_bias, w_up, b_up, w_down, b_down;
  };

  explicit ParameterLayout(const ModelConfig& c);

  std::size_t token_embedding = 0;  // vocab x d, also the output projection
  std::size_t position_embedding = 0;
  std::size_t type_embedding = 0;
  std::vector<Layer> layers;
  std::size_t final_gain = 0;
  std::size_t final_bias = 0;
  std::size_t output_bias = 0;
  std::size_t total = 0;
};

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on mt19937_64, so initialization does not depend on the
// standard library's distribution implementation.
inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Pre-LN decoder-only transformer with learned position and token-type
// embeddings and an output projection tied to the token embedding.
template <class Scalar>
class Transformer {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;
  using CRowMap = Eigen::Map<const Row>;
  using MRowMap = Eigen::Map<Row>;

  explicit Transformer(ModelConfig config)
      : config_((config.validate(), config)), layout_(config_), params_(layout_.total, Scalar(0)) {}

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::vector<Scalar>& parameters() { return params_; }
  const std::vector<Scalar>& parameters() const { return params_; }

  // Weights ~ N(0, 0.02); residual output projections additionally scaled by
  // 1/sqrt(2 layers); gains 1, biases 0.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), Scalar(0));
    const auto fill_normal = [&](std::size_t offset, std::size_t count, double stddev) {
      for (std::size_t i = 0; i < count; ++i) params_[offset + i] = static_cast<Scalar>(stddev * standard_normal(rng));
    };
    const auto fill_ones = [&](std::size_t offset, std::size_t count) {
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(offset), count, Scalar(1));
    };
    const std::size_t d = config_.hidden_dim;
    const double base = 0.02;
    const double residual = base / std::sqrt(2.0 * static_cast<double>(config_.layers));
    fill_normal(layout_.token_embedding, config_.vocab_size * d, base);
    fill_normal(layout_.position_embedding, config_.max_positions * d, base);
    fill_normal(layout_.type_embedding, config_.token_type_count * d, base);
    for (const auto& l : layout_.layers) {
      fill_ones(l.ln1_gain, d);
      fill_normal(l.w_qkv, d * 3 * d, base);
      fill_normal(l.w_out, d * d, residual);
      fill_ones(l.ln2_gain, d);
      fill_normal(l.w_up, d * 4 * d, base);
      fill_normal(l.w_down, 4 * d * d, residual);
    }
    fill_ones(layout_.final_gain, d);
  }

  struct Loss {
    double sum = 0.0;        // summed cross-entropy over supervised positions
    std::size_t count = 0;   // number of supervised positions
  };

  // Cross-entropy of predicting labels[j] from positions < j for every j with
  // mask[j] set (j >= 1). When `grad` is non-null, adds grad_scale times the
  // gradient of the summed loss. `dropout_rng` enables dropout.
  Loss forward_backward(std::span<const TokenId> ids, std::span<const TokenType> types,
                        std::span<const TokenId> labels, std::span<const std::uint8_t> mask,
                        Scalar* grad = nullptr, Scalar grad_scale = Scalar(1),
                        std::mt19937_64* dropout_rng = nullptr) const {
    const std::size_t n = ids.size();
    if (types.size() != n || labels.size() != n || mask.size() != n) {
      throw ValidationError("ids, types, labels and mask differ in length");
    }
    if (n > config_.max_positions) {
      throw ValidationError("sequence of " + std::to_string(n) + " tokens exceeds max_positions " +
                            std::to_string(config_.max_positions));
    }
    check_ids(ids, types);
    std::vector<std::size_t> rows;
    for (std::size_t j = 1; j < n; ++j) {
      if (mask[j]) {
        if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= config_.vocab_size) {
          throw ValidationError("label id out of range");
        }
        rows.push_back(j - 1);
      }
    }
    Loss loss;
    if (rows.empty() || n == 0) return loss;

    const Index d = static_cast<Index>(config_.hidden_dim);
    const bool train = dropout_rng != nullptr && config_.dropout > 0.0;

    // Embeddings.
    Mat x(static_cast<Index>(n), d);
    const CMap tok = cmat(layout_.token_embedding, static_cast<Index>(config_.vocab_size), d);
    const CMap pos = cmat(layout_.position_embedding, static_cast<Index>(config_.max_positions), d);
    const CMap typ = cmat(layout_.type_embedding, static_cast<Index>(config_.token_type_count), d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Index>(i);
      x.row(r) = tok.row(ids[i]) + pos.row(r) + typ.row(static_cast<Index>(types[i]));
    }
    Mat embed_mask;
    if (train) {
      embed_mask = dropout_mask(x.rows(), x.cols(), *dropout_rng);
      x.array() *= embed_mask.array();
    }

    std::vector<LayerCache> caches(config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      layer_forward(layout_.layers[l], x, caches[l], train ? dropout_rng : nullptr);
    }
    Mat xhat_f;
    Vec rstd_f;
    Mat final = layer_norm(x, layout_.final_gain, layout_.final_bias, xhat_f, rstd_f);

    const Index m = static_cast<Index>(rows.size());
    Mat hs(m, d);
    for (Index r = 0; r < m; ++r) hs.row(r) = final.row(static_cast<Index>(rows[static_cast<std::size_t>(r)]));
    const CRowMap out_bias(params_.data() + layout_.output_bias, static_cast<Index>(config_.vocab_size));
    Mat logits = hs * tok.transpose();
    logits.rowwise() += out_bias;
    for (Index r = 0; r < m; ++r) {
      const Scalar mx = logits.row(r).maxCoeff();
      logits.row(r).array() -= mx;
      const Scalar z = logits.row(r).array().exp().sum();
      const TokenId target = labels[rows[static_cast<std::size_t>(r)] + 1];
      loss.sum += static_cast<double>(std::log(z) - logits(r, target));
      if (grad) {
        logits.row(r) = logits.row(r).array().exp() / z;
        logits(r, target) -= Scalar(1);
      }
    }
    loss.count = rows.size();
    if (!grad) return loss;

    // Backward. `logits` now holds dLoss/dlogits before scaling.
    logits *= grad_scale;
    MMap g_tok = mmat(grad, layout_.token_embedding, static_cast<Index>(config_.vocab_size), d);
    g_tok.noalias() += logits.transpose() * hs;
    MRowMap(grad + layout_.output_bias, static_cast<Index>(config_.vocab_size)) += logits.colwise().sum();
    const Mat d_hs = logits * tok;
    Mat d_final = Mat::Zero(static_cast<Index>(n), d);
    for (Index r = 0; r < m; ++r) d_final.row(static_cast<Index>(rows[static_cast<std::size_t>(r)])) += d_hs.row(r);
    Mat dx = layer_norm_backward(d_final, xhat_f, rstd_f, layout_.final_gain, layout_.final_bias, grad);
    for (std::size_t l = config_.layers; l-- > 0;) {
      layer_backward(layout_.layers[l], caches[l], dx, grad);
    }
    if (train) dx.array() *= embed_mask.array();
    MMap g_pos = mmat(grad, layout_.position_embedding, static_cast<Index>(config_.max_positions), d);
    MMap g_typ = mmat(grad, layout_.type_embedding, static_cast<Index>(config_.token_type_count), d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Index>(i);
      g_tok.row(ids[i]) += dx.row(r);
      g_pos.row(r) += dx.row(r);
      g_typ.row(static_cast<Index>(types[i])) += dx.row(r);
    }
    return loss;
  }

  // Incremental decoding state with per-layer key/value caches.
  class Cursor {
   public:
    explicit Cursor(const Transformer& model) : model_(&model) {
      const Index d = static_cast<Index>(model.config_.hidden_dim);
      const Index p = static_cast<Index>(model.config_.max_positions);
      keys_.assign(model.config_.layers, Mat(p, d));
      values_.assign(model.config_.layers, Mat(p, d));
    }

    std::size_t length() const { return length_; }

    void append(TokenId id, TokenType type) {
      const auto& cfg = model_->config_;
      if (length_ >= cfg.max_positions) {
        throw ValidationError("sequence exceeds max_positions " + std::to_string(cfg.max_positions));
      }
      const TokenId one_id[1] = {id};
      const TokenType one_type[1] = {type};
      model_->check_ids(one_id, one_type);
      hidden_ = model_->step(id, type, length_, keys_, values_);
      ++length_;
    }

    // Softmax over the vocabulary at the last appended position.
    std::vector<double> next_token_distribution() const {
      if (length_ == 0) throw StateError("empty prefix has no next-token distribution");
      return model_->distribution(hidden_);
    }

   private:
    const Transformer* model_;
    std::vector<Mat> keys_;
    std::vector<Mat> values_;
    Row hidden_;
    std::size_t length_ = 0;
  };

 private:
  using Index = Eigen::Index;

  struct LayerCache {
    Mat x_in, xhat1, a, qkv, attn_concat, attn_mask, xhat2, c, up, act, mlp_mask;
    Vec rstd1, rstd2;
    std::vector<Mat> probs;
  };

  void check_ids(std::span<const TokenId> ids, std::span<const TokenType> types) const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= config_.vocab_size) {
        throw ValidationError("token id " + std::to_string(ids[i]) + " out of range");
      }
      if (static_cast<std::size_t>(types[i]) >= config_.token_type_count) {
        throw ValidationError("token type out of range");
      }
    }
  }

  CMap cmat(std::size_t offset, Index rows, Index cols) const {
    return CMap(params_.data() + offset, rows, cols);
  }
  CRowMap crow(std::size_t offset) const {
    return CRowMap(params_.data() + offset, static_cast<Index>(config_.hidden_dim));
  }
  static MMap mmat(Scalar* grad, std::size_t offset, Index rows, Index cols) {
    return MMap(grad + offset, rows, cols);
  }

  Mat dropout_mask(Index rows, Index cols, std::mt19937_64& rng) const {
    Mat mask(rows, cols);
    const double keep = 1.0 - config_.dropout;
    const Scalar scale = static_cast<Scalar>(1.0 / keep);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) mask(i, j) = uniform01(rng) < keep ? scale : Scalar(0);
    }
    return mask;
  }

  static constexpr double kLayerNormEps = 1e-5;

  Mat layer_norm(const Mat& x, std::size_t gain, std::size_t bias, Mat& xhat, Vec& rstd) const {
    const Index n = x.rows();
    const Index d = x.cols();
    xhat.resize(n, d);
    rstd.resize(n);
    for (Index i = 0; i < n; ++i) {
      const Scalar mean = x.row(i).mean();
      const Scalar var = (x.row(i).array() - mean).square().mean();
      rstd(i) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
      xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    }
    Mat y = xhat.array().rowwise() * crow(gain).array();
    y.rowwise() += crow(bias);
    return y;
  }

  Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, std::size_t gain,
                          std::size_t bias, Scalar* grad) const {
    const Index d = xhat.cols();
    MRowMap(grad + gain, d) += (dy.array() * xhat.array()).colwise().sum().matrix();
    MRowMap(grad + bias, d) += dy.colwise().sum();
    const Mat dxhat = dy.array().rowwise() * crow(gain).array();
    Mat dx(dy.rows(), d);
    for (Index i = 0; i < dy.rows(); ++i) {
      const Scalar m1 = dxhat.row(i).mean();
      const Scalar m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
      dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    return dx;
  }

  static constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kGeluA = 0.044715;

  static Scalar gelu(Scalar v) {
    const Scalar t = std::tanh(static_cast<Scalar>(kGeluC) * (v + static_cast<Scalar>(kGeluA) * v * v * v));
    return Scalar(0.5) * v * (Scalar(1) + t);
  }
  static Scalar gelu_grad(Scalar v) {
    const Scalar t = std::tanh(static_cast<Scalar>(kGeluC) * (v + static_cast<Scalar>(kGeluA) * v * v * v));
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * v * (Scalar(1) - t * t) * static_cast<Scalar>(kGeluC) *
               (Scalar(1) + Scalar(3) * static_cast<Scalar>(kGeluA) * v * v);
  }

  void layer_forward(const ParameterLayout::Layer& p, Mat& x, LayerCache& c, std::mt19937_64* rng) const {
    const Index n = x.rows();
    const Index d = static_cast<Index>(config_.hidden_dim);
    const Index heads = static_cast<Index>(config_.heads);
    const Index dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    c.x_in = x;
    c.a = layer_norm(x, p.ln1_gain, p.ln1_bias, c.xhat1, c.rstd1);
    c.qkv.noalias() = c.a * cmat(p.w_qkv, d, 3 * d);
    c.qkv.rowwise() += CRowMap(params_.data() + p.b_qkv, 3 * d);
    c.attn_concat.resize(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      Mat& prob = c.probs[static_cast<std::size_t>(h)];
      prob.noalias() = (q * k.transpose()) * scale;
      for (Index i = 0; i < n; ++i) {
        const Scalar mx = prob.row(i).head(i + 1).maxCoeff();
        prob.row(i).head(i + 1) = (prob.row(i).head(i + 1).array() - mx).exp();
        prob.row(i).head(i + 1) /= prob.row(i).head(i + 1).sum();
        prob.row(i).tail(n - i - 1).setZero();
      }
      c.attn_concat.middleCols(h * dh, dh).noalias() = prob * v;
    }
    Mat attn = c.attn_concat * cmat(p.w_out, d, d);
    attn.rowwise() += crow(p.b_out);
    if (rng) {
      c.attn_mask = dropout_mask(n, d, *rng);
      attn.array() *= c.attn_mask.array();
    }
    x += attn;

    c.c = layer_norm(x, p.ln2_gain, p.ln2_bias, c.xhat2, c.rstd2);
    c.up.noalias() = c.c * cmat(p.w_up, d, 4 * d);
    c.up.rowwise() += CRowMap(params_.data() + p.b_up, 4 * d);
    c.act = c.up.unaryExpr([](Scalar v) { return gelu(v); });
    Mat mlp = c.act * cmat(p.w_down, 4 * d, d);
    mlp.rowwise() += crow(p.b_down);
    if (rng) {
      c.mlp_mask = dropout_mask(n, d, *rng);
      mlp.array() *= c.mlp_mask.array();
    }
    x += mlp;
  }

  // dx: gradient w.r.t. the layer output on entry, w.r.t. its input on exit.
  void layer_backward(const ParameterLayout::Layer& p, const LayerCache& c, Mat& dx, Scalar* grad) const {
    const Index n = dx.rows();
    const Index d = static_cast<Index>(config_.hidden_dim);
    const Index heads = static_cast<Index>(config_.heads);
    const Index dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    // MLP branch.
    Mat dmlp = dx;
    if (c.mlp_mask.size() != 0) dmlp.array() *= c.mlp_mask.array();
    mmat(grad, p.w_down, 4 * d, d).noalias() += c.act.transpose() * dmlp;
    MRowMap(grad + p.b_down, d) += dmlp.colwise().sum();
    Mat dup = dmlp * cmat(p.w_down, 4 * d, d).transpose();
    dup.array() *= c.up.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    mmat(grad, p.w_up, d, 4 * d).noalias() += c.c.transpose() * dup;
    MRowMap(grad + p.b_up, 4 * d) += dup.colwise().sum();
    const Mat dc = dup * cmat(p.w_up, d, 4 * d).transpose();
    dx += layer_norm_backward(dc, c.xhat2, c.rstd2, p.ln2_gain, p.ln2_bias, grad);

    // Attention branch.
    Mat dattn = dx;
    if (c.attn_mask.size() != 0) dattn.array() *= c.attn_mask.array();
    mmat(grad, p.w_out, d, d).noalias() += c.attn_concat.transpose() * dattn;
    MRowMap(grad + p.b_out, d) += dattn.colwise().sum();
    const Mat dconcat = dattn * cmat(p.w_out, d, d).transpose();
    Mat dqkv(n, 3 * d);
    for (Index h = 0; h < heads; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const Mat& prob = c.probs[static_cast<std::size_t>(h)];
      const auto dout = dconcat.middleCols(h * dh, dh);
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = prob.transpose() * dout;
      Mat ds = dout * v.transpose();
      for (Index i = 0; i < n; ++i) {
        const Scalar dot = (ds.row(i).head(i + 1).array() * prob.row(i).head(i + 1).array()).sum();
        ds.row(i).head(i + 1) = prob.row(i).head(i + 1).array() * (ds.row(i).head(i + 1).array() - dot);
        ds.row(i).tail(n - i - 1).setZero();
      }
      ds *= scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    mmat(grad, p.w_qkv, d, 3 * d).noalias() += c.a.transpose() * dqkv;
    MRowMap(grad + p.b_qkv, 3 * d) += dqkv.colwise().sum();
    const Mat da = dqkv * cmat(p.w_qkv, d, 3 * d).transpose();
    dx += layer_norm_backward(da, c.xhat1, c.rstd1, p.ln1_gain, p.ln1_bias, grad);
  }

  Row layer_norm_row(const Row& x, std::size_t gain, std::size_t bias) const {
    const Scalar mean = x.mean();
    const Scalar var = (x.array() - mean).square().mean();
    const Scalar rstd = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
    return ((x.array() - mean) * rstd * crow(gain).array() + crow(bias).array()).matrix();
  }

  Row step(TokenId id, TokenType type, std::size_t position, std::vector<Mat>& keys,
           std::vector<Mat>& values) const {
    const Index d = static_cast<Index>(config_.hidden_dim);
    const Index heads = static_cast<Index>(config_.heads);
    const Index dh = d / heads;
    const Index t = static_cast<Index>(position);
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    Row x = cmat(layout_.token_embedding, static_cast<Index>(config_.vocab_size), d).row(id) +
            cmat(layout_.position_embedding, static_cast<Index>(config_.max_positions), d).row(t) +
            cmat(layout_.type_embedding, static_cast<Index>(config_.token_type_count), d)
                .row(static_cast<Index>(type));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const auto& p = layout_.layers[l];
      const Row a = layer_norm_row(x, p.ln1_gain, p.ln1_bias);
      Row qkv = a * cmat(p.w_qkv, d, 3 * d);
      qkv += CRowMap(params_.data() + p.b_qkv, 3 * d);
      keys[l].row(t) = qkv.segment(d, d);
      values[l].row(t) = qkv.segment(2 * d, d);
      Row concat(d);
      for (Index h = 0; h < heads; ++h) {
        const auto k = keys[l].block(0, h * dh, t + 1, dh);
        const auto v = values[l].block(0, h * dh, t + 1, dh);
        Row s = (qkv.segment(h * dh, dh) * k.transpose()) * scale;
        s = (s.array() - s.maxCoeff()).exp();
        s /= s.sum();
        concat.segment(h * dh, dh) = s * v;
      }
      Row attn = concat * cmat(p.w_out, d, d);
      x += attn + crow(p.b_out);
      const Row cn = layer_norm_row(x, p.ln2_gain, p.ln2_bias);
      Row up = cn * cmat(p.w_up, d, 4 * d);
      up += CRowMap(params_.data() + p.b_up, 4 * d);
      up = up.unaryExpr([](Scalar v) { return gelu(v); });
      Row mlp = up * cmat(p.w_down, 4 * d, d);
      x += mlp + crow(p.b_down);
    }
    return x;
  }

  std::vector<double> distribution(const Row& hidden) const {
    const Index d = static_cast<Index>(config_.hidden_dim);
    const Index v = static_cast<Index>(config_.vocab_size);
    const Row f = layer_norm_row(hidden, layout_.final_gain, layout_.final_bias);
    Row logits = f * cmat(layout_.token_embedding, v, d).transpose();
    logits += CRowMap(params_.data() + layout_.output_bias, v);
    std::vector<double> out(static_cast<std::size_t>(v));
    const double mx = static_cast<double>(logits.maxCoeff());
    double z = 0.0;
    for (Index i = 0; i < v; ++i) z += (out[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits(i)) - mx));
    for (auto& p : out) p /= z;
    return out;
  }

  ModelConfig config_;
  ParameterLayout layout_;
  std::vector<Scalar> params_;
};

}  // namespace semdial
