#include "lwsr/encoder.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lwsr/binary_io.hpp"

namespace lwsr {

template <class Real>
std::size_t BasicEncoderParams<Real>::num_values() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->data.size();
    return n;
}

template <class Real>
BasicEncoderParams<Real> BasicEncoderParams<Real>::zeros_like(const BasicEncoderParams& shape_of) {
    BasicEncoderParams out;
    auto dst = out.tensors();
    auto src = shape_of.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix<Real>(src[i]->rows, src[i]->cols);
    return out;
}

template <class Real>
bool BasicEncoderParams<Real>::same_shape(const BasicEncoderParams& other) const {
    auto a = tensors();
    auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i]->same_shape(*b[i])) return false;
    }
    return true;
}

template <class Real>
BasicEncoderParams<Real> init_encoder(const EncoderDims& dims, std::size_t num_classes, std::mt19937_64& rng) {
    if (dims.feature_dim == 0 || dims.hidden == 0 || dims.attention == 0 || dims.repr == 0) {
        throw Error(Errc::invalid_argument, "encoder dimensions must be >= 1");
    }
    std::normal_distribution<double> normal(0.0, 0.02);
    auto gaussian = [&](std::size_t r, std::size_t c) {
        Matrix<Real> m(r, c);
        for (Real& v : m.data) v = static_cast<Real>(normal(rng));
        return m;
    };
    BasicEncoderParams<Real> p;
    p.proj_weight = gaussian(dims.feature_dim, dims.hidden);
    p.proj_bias = Matrix<Real>(1, dims.hidden);
    p.attn_weight = gaussian(dims.hidden, dims.attention);
    p.attn_vector = gaussian(1, dims.attention);
    p.repr_weight = gaussian(dims.hidden, dims.repr);
    p.repr_bias = Matrix<Real>(1, dims.repr);
    p.cls_weight = gaussian(num_classes, dims.repr);
    p.cls_bias = Matrix<Real>(1, num_classes);
    return p;
}

template <class Real>
BasicForwardResult<Real> forward(const BasicEncoderParams<Real>& params, const MatrixF& features) {
    const EncoderDims d = params.dims();
    const std::size_t n = features.rows;
    const std::size_t classes = params.num_classes();
    if (features.cols != d.feature_dim) {
        throw Error(Errc::invalid_argument, "cube d_f=" + std::to_string(features.cols) + " but encoder expects " +
                                                std::to_string(d.feature_dim));
    }
    if (n == 0) throw Error(Errc::invalid_argument, "cube has no patches");

    BasicForwardResult<Real> out;
    auto& c = out.cache;
    c.dims = d;
    c.num_classes = classes;
    c.input = Matrix<Real>(n, d.feature_dim);
    for (std::size_t i = 0; i < features.data.size(); ++i) c.input.data[i] = static_cast<Real>(features.data[i]);

    c.hidden = Matrix<Real>(n, d.hidden);
    for (std::size_t r = 0; r < n; ++r) {
        auto h = c.hidden.row(r);
        std::copy(params.proj_bias.data.begin(), params.proj_bias.data.end(), h.begin());
        auto x = c.input.row(r);
        for (std::size_t k = 0; k < d.feature_dim; ++k) {
            const Real xk = x[k];
            auto w = params.proj_weight.row(k);
            for (std::size_t j = 0; j < d.hidden; ++j) h[j] += xk * w[j];
        }
        for (Real& v : h) v = std::tanh(v);
    }

    c.attn_hidden = Matrix<Real>(n, d.attention);
    c.scores.assign(n, Real{0});
    for (std::size_t r = 0; r < n; ++r) {
        auto u = c.attn_hidden.row(r);
        auto h = c.hidden.row(r);
        for (std::size_t k = 0; k < d.hidden; ++k) {
            const Real hk = h[k];
            auto v = params.attn_weight.row(k);
            for (std::size_t j = 0; j < d.attention; ++j) u[j] += hk * v[j];
        }
        Real s = 0;
        for (std::size_t j = 0; j < d.attention; ++j) {
            u[j] = std::tanh(u[j]);
            s += u[j] * params.attn_vector.data[j];
        }
        c.scores[r] = s;
    }

    const Real max_score = *std::max_element(c.scores.begin(), c.scores.end());
    c.weights.resize(n);
    Real total = 0;
    for (std::size_t r = 0; r < n; ++r) {
        c.weights[r] = std::exp(c.scores[r] - max_score);
        total += c.weights[r];
    }
    for (Real& a : c.weights) a /= total;

    c.pooled.assign(d.hidden, Real{0});
    for (std::size_t r = 0; r < n; ++r) {
        auto h = c.hidden.row(r);
        for (std::size_t j = 0; j < d.hidden; ++j) c.pooled[j] += c.weights[r] * h[j];
    }

    c.representation.assign(params.repr_bias.data.begin(), params.repr_bias.data.end());
    for (std::size_t k = 0; k < d.hidden; ++k) {
        auto w = params.repr_weight.row(k);
        for (std::size_t j = 0; j < d.repr; ++j) c.representation[j] += c.pooled[k] * w[j];
    }

    out.logits.assign(params.cls_bias.data.begin(), params.cls_bias.data.end());
    for (std::size_t cl = 0; cl < classes; ++cl) {
        auto w = params.cls_weight.row(cl);
        Real acc = 0;
        for (std::size_t j = 0; j < d.repr; ++j) acc += w[j] * c.representation[j];
        out.logits[cl] += acc;
    }
    out.representation = c.representation;
    return out;
}

template <class Real>
std::vector<Real> encode(const BasicEncoderParams<Real>& params, const MatrixF& features) {
    return forward(params, features).representation;
}

template <class Real>
void backward_accumulate(const BasicEncoderParams<Real>& params, const BasicForwardCache<Real>& c,
                         std::span<const Real> grad_repr, std::span<const Real> grad_logits,
                         BasicEncoderParams<Real>& g) {
    const EncoderDims d = params.dims();
    if (c.dims.feature_dim != d.feature_dim || c.dims.hidden != d.hidden || c.dims.attention != d.attention ||
        c.dims.repr != d.repr || c.num_classes != params.num_classes()) {
        throw Error(Errc::invalid_state, "forward cache was produced under different parameter shapes");
    }
    if (grad_repr.size() != d.repr || grad_logits.size() != params.num_classes()) {
        throw Error(Errc::invalid_state, "upstream gradient shape does not match the cache");
    }
    if (!g.same_shape(params)) throw Error(Errc::invalid_state, "gradient holder shape mismatch");
    const std::size_t n = c.input.rows;

    // Classifier head.
    std::vector<Real> g_repr(grad_repr.begin(), grad_repr.end());
    for (std::size_t cl = 0; cl < params.num_classes(); ++cl) {
        const Real gl = grad_logits[cl];
        if (gl == Real{0}) continue;
        g.cls_bias.data[cl] += gl;
        auto gw = g.cls_weight.row(cl);
        auto w = params.cls_weight.row(cl);
        for (std::size_t j = 0; j < d.repr; ++j) {
            gw[j] += gl * c.representation[j];
            g_repr[j] += gl * w[j];
        }
    }

    // Representation head.
    std::vector<Real> g_pooled(d.hidden, Real{0});
    for (std::size_t j = 0; j < d.repr; ++j) g.repr_bias.data[j] += g_repr[j];
    for (std::size_t k = 0; k < d.hidden; ++k) {
        auto gw = g.repr_weight.row(k);
        auto w = params.repr_weight.row(k);
        Real acc = 0;
        for (std::size_t j = 0; j < d.repr; ++j) {
            gw[j] += c.pooled[k] * g_repr[j];
            acc += w[j] * g_repr[j];
        }
        g_pooled[k] = acc;
    }

    // Attention pooling: pooled = sum_r a_r h_r.
    std::vector<Real> g_weight(n);
    Real weighted = 0;
    for (std::size_t r = 0; r < n; ++r) {
        auto h = c.hidden.row(r);
        Real acc = 0;
        for (std::size_t k = 0; k < d.hidden; ++k) acc += h[k] * g_pooled[k];
        g_weight[r] = acc;
        weighted += c.weights[r] * acc;
    }

    std::vector<Real> g_hidden(d.hidden);
    std::vector<Real> g_z(d.attention);
    for (std::size_t r = 0; r < n; ++r) {
        const Real g_score = c.weights[r] * (g_weight[r] - weighted);
        auto u = c.attn_hidden.row(r);
        auto h = c.hidden.row(r);
        for (std::size_t j = 0; j < d.attention; ++j) {
            g.attn_vector.data[j] += g_score * u[j];
            g_z[j] = g_score * params.attn_vector.data[j] * (Real{1} - u[j] * u[j]);
        }
        for (std::size_t k = 0; k < d.hidden; ++k) {
            auto gv = g.attn_weight.row(k);
            auto v = params.attn_weight.row(k);
            Real acc = c.weights[r] * g_pooled[k];
            for (std::size_t j = 0; j < d.attention; ++j) {
                gv[j] += h[k] * g_z[j];
                acc += v[j] * g_z[j];
            }
            g_hidden[k] = acc * (Real{1} - h[k] * h[k]);
        }
        auto x = c.input.row(r);
        for (std::size_t k = 0; k < d.hidden; ++k) g.proj_bias.data[k] += g_hidden[k];
        for (std::size_t i = 0; i < d.feature_dim; ++i) {
            const Real xi = x[i];
            auto gw = g.proj_weight.row(i);
            for (std::size_t k = 0; k < d.hidden; ++k) gw[k] += xi * g_hidden[k];
        }
    }
}

template <class Real>
BasicEncoderParams<Real> backward(const BasicEncoderParams<Real>& params, const BasicForwardCache<Real>& cache,
                                  std::span<const Real> grad_repr, std::span<const Real> grad_logits) {
    auto grads = BasicEncoderParams<Real>::zeros_like(params);
    backward_accumulate(params, cache, grad_repr, grad_logits, grads);
    return grads;
}

template <class Real>
BasicEncoderParams<Real> expand_head(const BasicEncoderParams<Real>& params, std::size_t new_total_classes,
                                     std::mt19937_64& rng) {
    const std::size_t old = params.num_classes();
    if (new_total_classes <= old) {
        throw Error(Errc::invalid_argument, "expand_head: new class count " + std::to_string(new_total_classes) +
                                                " must exceed current " + std::to_string(old));
    }
    std::normal_distribution<double> normal(0.0, 0.01);
    BasicEncoderParams<Real> out = params;
    const std::size_t width = params.cls_weight.cols;
    out.cls_weight = Matrix<Real>(new_total_classes, width);
    std::copy(params.cls_weight.data.begin(), params.cls_weight.data.end(), out.cls_weight.data.begin());
    for (std::size_t i = old * width; i < out.cls_weight.data.size(); ++i) {
        out.cls_weight.data[i] = static_cast<Real>(normal(rng));
    }
    out.cls_bias = Matrix<Real>(1, new_total_classes);
    std::copy(params.cls_bias.data.begin(), params.cls_bias.data.end(), out.cls_bias.data.begin());
    return out;
}

template <class Real>
BasicEncoderParams<Real> convert_params(const EncoderParams& params) {
    BasicEncoderParams<Real> out;
    auto dst = out.tensors();
    auto src = params.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        *dst[i] = Matrix<Real>(src[i]->rows, src[i]->cols);
        std::transform(src[i]->data.begin(), src[i]->data.end(), dst[i]->data.begin(),
                       [](float v) { return static_cast<Real>(v); });
    }
    return out;
}

const EncoderParams& FrozenEncoder::params() const {
    if (!params_) throw Error(Errc::invalid_state, "empty frozen encoder");
    return *params_;
}

FrozenEncoder snapshot(const EncoderParams& params) {
    return FrozenEncoder(std::make_shared<const EncoderParams>(params));
}

void write_checkpoint(const EncoderParams& params, const std::filesystem::path& base) {
    auto bin_path = base;
    bin_path += ".bin";
    auto index_path = base;
    index_path += ".index";
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw Error(Errc::io_error, "cannot open " + bin_path.string());
    std::ostringstream index;
    auto tensors = params.tensors();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        index << EncoderParams::tensor_names[i] << ' ' << tensors[i]->rows << ' ' << tensors[i]->cols << ' ' << offset
              << '\n';
        io::write_block(bin, *tensors[i]);
        offset += 8 + 4 * tensors[i]->data.size();
    }
    io::write_text_file(index_path, index.str());
}

EncoderParams read_checkpoint(const std::filesystem::path& base) {
    auto bin_path = base;
    bin_path += ".bin";
    auto index_path = base;
    index_path += ".index";
    std::istringstream index(io::read_text_file(index_path));
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error(Errc::missing_file, bin_path.string());

    EncoderParams params;
    auto tensors = params.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        std::string name;
        std::size_t rows = 0, cols = 0, offset = 0;
        if (!(index >> name >> rows >> cols >> offset) || name != EncoderParams::tensor_names[i]) {
            throw Error(Errc::invalid_state, index_path.string() + ": expected tensor " +
                                                 std::string(EncoderParams::tensor_names[i]));
        }
        bin.seekg(static_cast<std::streamoff>(offset));
        *tensors[i] = io::read_block(bin, bin_path.string() + ":" + name);
        if (tensors[i]->rows != rows || tensors[i]->cols != cols) {
            throw Error(Errc::dimension_mismatch, bin_path.string() + ": tensor " + name + " shape disagrees with index");
        }
    }
    return params;
}

#define LWSR_INSTANTIATE_ENCODER(Real)                                                                            \
    template struct BasicEncoderParams<Real>;                                                                     \
    template BasicEncoderParams<Real> init_encoder<Real>(const EncoderDims&, std::size_t, std::mt19937_64&);      \
    template BasicForwardResult<Real> forward<Real>(const BasicEncoderParams<Real>&, const MatrixF&);             \
    template std::vector<Real> encode<Real>(const BasicEncoderParams<Real>&, const MatrixF&);                     \
    template void backward_accumulate<Real>(const BasicEncoderParams<Real>&, const BasicForwardCache<Real>&,      \
                                            std::span<const Real>, std::span<const Real>,                         \
                                            BasicEncoderParams<Real>&);                                           \
    template BasicEncoderParams<Real> backward<Real>(const BasicEncoderParams<Real>&,                             \
                                                     const BasicForwardCache<Real>&, std::span<const Real>,       \
                                                     std::span<const Real>);                                      \
    template BasicEncoderParams<Real> expand_head<Real>(const BasicEncoderParams<Real>&, std::size_t,             \
                                                        std::mt19937_64&);                                        \
    template BasicEncoderParams<Real> convert_params<Real>(const EncoderParams&);

LWSR_INSTANTIATE_ENCODER(float)
LWSR_INSTANTIATE_ENCODER(double)

#undef LWSR_INSTANTIATE_ENCODER

}  // namespace lwsr
