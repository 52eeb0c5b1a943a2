#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lwsr/common.hpp"

namespace lwsr {

struct EncoderDims {
    std::size_t feature_dim = 16;  // d_f
    std::size_t hidden = 64;       // patch projection width
    std::size_t attention = 32;    // attention scoring width
    std::size_t repr = 32;         // slide representation width d_F
};

/// Parameters of the attention-pooling bag encoder.
///
///   h_i    = tanh(x_i * proj_weight + proj_bias)
///   a_i    = softmax_i( attn_vector . tanh(h_i * attn_weight) )
///   pooled = sum_i a_i h_i
///   repr   = pooled * repr_weight + repr_bias
///   logits = cls_weight * repr + cls_bias      (cls_weight has one row per class)
///
/// Every tensor, biases included, is a Matrix so optimizers and checkpoints
/// can walk them uniformly. The same template doubles as the gradient holder.
template <class Real>
struct BasicEncoderParams {
    Matrix<Real> proj_weight;  // d_f x hidden
    Matrix<Real> proj_bias;    // 1 x hidden
    Matrix<Real> attn_weight;  // hidden x attention
    Matrix<Real> attn_vector;  // 1 x attention
    Matrix<Real> repr_weight;  // hidden x repr
    Matrix<Real> repr_bias;    // 1 x repr
    Matrix<Real> cls_weight;   // classes x repr
    Matrix<Real> cls_bias;     // 1 x classes

    static constexpr std::array<std::string_view, 8> tensor_names{
        "proj_weight", "proj_bias", "attn_weight", "attn_vector",
        "repr_weight", "repr_bias", "cls_weight",  "cls_bias"};

    std::array<Matrix<Real>*, 8> tensors() {
        return {&proj_weight, &proj_bias, &attn_weight, &attn_vector,
                &repr_weight, &repr_bias, &cls_weight,  &cls_bias};
    }
    std::array<const Matrix<Real>*, 8> tensors() const {
        return {&proj_weight, &proj_bias, &attn_weight, &attn_vector,
                &repr_weight, &repr_bias, &cls_weight,  &cls_bias};
    }

    EncoderDims dims() const { return {proj_weight.rows, proj_weight.cols, attn_weight.cols, repr_weight.cols}; }
    std::size_t num_classes() const { return cls_weight.rows; }
    std::size_t num_values() const;

    /// Zero-filled tensors with the same shapes as `shape_of`.
    static BasicEncoderParams zeros_like(const BasicEncoderParams& shape_of);

    bool same_shape(const BasicEncoderParams& other) const;
    bool operator==(const BasicEncoderParams&) const = default;
};

using EncoderParams = BasicEncoderParams<float>;
using ParamGrads = BasicEncoderParams<float>;

template <class Real>
struct BasicForwardCache {
    Matrix<Real> input;        // n x d_f
    Matrix<Real> hidden;       // n x hidden, post-tanh
    Matrix<Real> attn_hidden;  // n x attention, post-tanh
    std::vector<Real> scores;  // pre-softmax
    std::vector<Real> weights; // post-softmax
    std::vector<Real> pooled;
    std::vector<Real> representation;
    EncoderDims dims;
    std::size_t num_classes = 0;
};

template <class Real>
struct BasicForwardResult {
    std::vector<Real> representation;
    std::vector<Real> logits;
    BasicForwardCache<Real> cache;
};

using ForwardCache = BasicForwardCache<float>;
using ForwardResult = BasicForwardResult<float>;

/// Matrices from N(0, 0.02^2), biases zero.
template <class Real>
BasicEncoderParams<Real> init_encoder(const EncoderDims& dims, std::size_t num_classes, std::mt19937_64& rng);

/// Throws invalid_argument on a feature-dimension mismatch or an empty cube.
template <class Real>
BasicForwardResult<Real> forward(const BasicEncoderParams<Real>& params, const MatrixF& features);

/// Representation only; skips the logits and keeps no cache beyond what the
/// pooling needs. Bit-identical to forward(...).representation.
template <class Real>
std::vector<Real> encode(const BasicEncoderParams<Real>& params, const MatrixF& features);

/// Adds the gradient of  grad_repr . repr + grad_logits . logits  to `grads`.
/// Throws invalid_state when the cache was produced under different shapes.
template <class Real>
void backward_accumulate(const BasicEncoderParams<Real>& params, const BasicForwardCache<Real>& cache,
                         std::span<const Real> grad_repr, std::span<const Real> grad_logits,
                         BasicEncoderParams<Real>& grads);

template <class Real>
BasicEncoderParams<Real> backward(const BasicEncoderParams<Real>& params, const BasicForwardCache<Real>& cache,
                                  std::span<const Real> grad_repr, std::span<const Real> grad_logits);

/// New classifier rows drawn from N(0, 0.01^2) with zero bias; existing rows
/// are copied untouched.
template <class Real>
BasicEncoderParams<Real> expand_head(const BasicEncoderParams<Real>& params, std::size_t new_total_classes,
                                     std::mt19937_64& rng);

/// Read-only handle to a deep parameter copy. Training the source afterwards
/// cannot reach it.
class FrozenEncoder {
public:
    FrozenEncoder() = default;
    const EncoderParams& params() const;
    bool empty() const { return !params_; }

private:
    explicit FrozenEncoder(std::shared_ptr<const EncoderParams> p) : params_(std::move(p)) {}
    std::shared_ptr<const EncoderParams> params_;
    friend FrozenEncoder snapshot(const EncoderParams& params);
};

FrozenEncoder snapshot(const EncoderParams& params);
inline FrozenEncoder snapshot(const FrozenEncoder& frozen) { return snapshot(frozen.params()); }

/// Checkpoint = `<base>.bin` holding one headered f32 block per tensor, and
/// `<base>.index`, one text line per tensor: name rows cols byte_offset.
void write_checkpoint(const EncoderParams& params, const std::filesystem::path& base);
EncoderParams read_checkpoint(const std::filesystem::path& base);

template <class Real>
BasicEncoderParams<Real> convert_params(const EncoderParams& params);

}  // namespace lwsr
