#include "uinr/network.hpp"

#include <cmath>
#include <string>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

#include "uinr/errors.hpp"

namespace uinr {

void NetworkShape::validate() const {
    if (input_dim < 1) throw ConfigError("network: input_dim must be >= 1");
    if (width < 1) throw ConfigError("network: width must be >= 1");
    if (blocks < 1) throw ConfigError("network: blocks must be >= 1");
    if (heads.empty()) throw ConfigError("network: at least one head required");
    for (const auto& h : heads) {
        if (h.out < 1 || h.hidden < 0) throw ConfigError("network: invalid head spec");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("network: dropout_rate must be in [0, 1)");
    }
    if (dropout_block >= blocks) {
        throw ConfigError("network: dropout_block out of range");
    }
}

std::size_t NetworkShape::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(width) * input_dim + width;
    n += static_cast<std::size_t>(blocks) * 2 * (static_cast<std::size_t>(width) * width + width);
    for (const auto& h : heads) {
        int in = width;
        if (h.hidden > 0) {
            n += static_cast<std::size_t>(h.hidden) * width + h.hidden;
            in = h.hidden;
        }
        n += static_cast<std::size_t>(h.out) * in + h.out;
    }
    return n;
}

int NetworkShape::total_out() const {
    int n = 0;
    for (const auto& h : heads) n += h.out;
    return n;
}

Network::Network(NetworkShape shape) : shape_(std::move(shape)) {
    shape_.validate();
    std::ptrdiff_t off = 0;
    auto add = [&](int rows, int cols) {
        Seg s{off, off + static_cast<std::ptrdiff_t>(rows) * cols, rows, cols};
        off = s.b_off + rows;
        return s;
    };
    input_ = add(shape_.width, shape_.input_dim);
    for (int b = 0; b < shape_.blocks; ++b) {
        blocks_.push_back({add(shape_.width, shape_.width), add(shape_.width, shape_.width)});
    }
    for (const auto& h : shape_.heads) {
        Seg hidden{0, 0, 0, 0};
        int in = shape_.width;
        if (h.hidden > 0) {
            hidden = add(h.hidden, shape_.width);
            in = h.hidden;
        }
        heads_.push_back({hidden, add(h.out, in)});
    }
    params_ = VectorXd::Zero(off);
}

Eigen::Map<const MatrixXd> Network::weight(const Seg& s) const {
    return {params_.data() + s.w_off, s.rows, s.cols};
}

Eigen::Map<const VectorXd> Network::bias(const Seg& s) const {
    return {params_.data() + s.b_off, s.rows};
}

void Network::init(Rng& rng) {
    auto fill = [&](const Seg& s, double wlo, double whi, double scale) {
        double* p = params_.data();
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(s.rows) * s.cols; ++i) {
            p[s.w_off + i] = scale * rng.uniform(wlo, whi);
        }
        for (int i = 0; i < s.rows; ++i) p[s.b_off + i] = scale * rng.uniform(wlo, whi);
    };
    const double first = 1.0 / shape_.input_dim;
    fill(input_, -first, first, 1.0);
    const double sine = std::sqrt(6.0 / shape_.width) / shape_.omega_hidden;
    for (const auto& blk : blocks_) {
        fill(blk[0], -sine, sine, 1.0);
        fill(blk[1], -sine, sine, 1.0);
    }
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        int in = shape_.width;
        if (shape_.heads[i].hidden > 0) {
            fill(heads_[i][0], -sine, sine, 1.0);
            in = shape_.heads[i].hidden;
        }
        const double lin = std::sqrt(6.0 / in);
        // Small output weights keep early evidential parameters near the link midpoint.
        fill(heads_[i][1], -lin, lin, 1e-2);
    }
}

namespace {
void check_finite(const MatrixXd& m, const char* where) {
    if (!m.allFinite()) throw NumericError(std::string("non-finite activation at ") + where);
}

#if defined(__AVX2__)
extern "C" __m256d _ZGVdN4v_sin(__m256d);   // libmvec vector sine
extern "C" __m256d _ZGVdN4v_cos(__m256d);   // libmvec vector cosine
#endif

// out = sin(omega * z), elementwise. libmvec's 4-wide kernels cut the libm
// call cost that otherwise dominates the forward pass for double matrices.
MatrixXd sin_scaled(const MatrixXd& z, double omega) {
    MatrixXd out(z.rows(), z.cols());
    const double* in = z.data();
    double* o = out.data();
    const Eigen::Index n = z.size();
    Eigen::Index i = 0;
#if defined(__AVX2__)
    const __m256d w = _mm256_set1_pd(omega);
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(o + i, _ZGVdN4v_sin(_mm256_mul_pd(w, _mm256_loadu_pd(in + i))));
    }
#endif
    for (; i < n; ++i) o[i] = std::sin(omega * in[i]);
    return out;
}

// out = d * omega * cos(omega * z), elementwise: gradient through sin(omega z).
MatrixXd mul_cos_scaled(const MatrixXd& d, const MatrixXd& z, double omega) {
    MatrixXd out(z.rows(), z.cols());
    const double* dd = d.data();
    const double* in = z.data();
    double* o = out.data();
    const Eigen::Index n = z.size();
    Eigen::Index i = 0;
#if defined(__AVX2__)
    const __m256d w = _mm256_set1_pd(omega);
    for (; i + 4 <= n; i += 4) {
        const __m256d c = _ZGVdN4v_cos(_mm256_mul_pd(w, _mm256_loadu_pd(in + i)));
        _mm256_storeu_pd(o + i,
                         _mm256_mul_pd(_mm256_mul_pd(w, c), _mm256_loadu_pd(dd + i)));
    }
#endif
    for (; i < n; ++i) o[i] = dd[i] * omega * std::cos(omega * in[i]);
    return out;
}
}  // namespace

MatrixXd Network::forward(const MatrixXd& coords, ForwardMode mode, Rng* rng,
                          ForwardCache* cache) const {
    if (coords.cols() != shape_.input_dim) {
        throw UsageError("forward: expected " + std::to_string(shape_.input_dim) +
                         " input columns, got " + std::to_string(coords.cols()));
    }
    const auto n = coords.rows();
    const double w0 = shape_.omega0;
    const double wh = shape_.omega_hidden;
    const bool train = mode == ForwardMode::Train;

    if (cache) {
        *cache = ForwardCache{};
        cache->input = coords;
    }

    MatrixXd z0(n, shape_.width);
    z0.noalias() = coords * weight(input_).transpose();
    z0.rowwise() += bias(input_).transpose();
    check_finite(z0, "input layer");
    MatrixXd x = sin_scaled(z0, w0);
    if (cache) {
        cache->z0 = z0;
        cache->a0 = x;
    }

    MatrixXd z1(n, shape_.width), z2(n, shape_.width);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (cache) cache->block_in.push_back(x);
        z1.noalias() = x * weight(blocks_[b][0]).transpose();
        z1.rowwise() += bias(blocks_[b][0]).transpose();
        check_finite(z1, "block layer 1");
        MatrixXd h = sin_scaled(z1, wh);
        z2.noalias() = h * weight(blocks_[b][1]).transpose();
        z2.rowwise() += bias(blocks_[b][1]).transpose();
        check_finite(z2, "block layer 2");
        x = 0.5 * (x + sin_scaled(z2, wh));
        if (cache) {
            cache->block_z1.push_back(std::move(z1));
            cache->block_h.push_back(std::move(h));
            cache->block_z2.push_back(std::move(z2));
        }
        if (train && shape_.dropout_block == static_cast<int>(b) && shape_.dropout_rate > 0.0) {
            if (!rng) throw UsageError("forward: dropout requires an rng in train mode");
            const double keep = 1.0 - shape_.dropout_rate;
            MatrixXd mask(n, shape_.width);
            for (Eigen::Index j = 0; j < mask.cols(); ++j)
                for (Eigen::Index i = 0; i < mask.rows(); ++i)
                    mask(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
            x = x.cwiseProduct(mask);
            if (cache) cache->dropout_mask = std::move(mask);
        }
    }
    if (cache) cache->encoder_out = x;

    MatrixXd out(n, shape_.total_out());
    int col = 0;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        const MatrixXd* hin = &x;
        MatrixXd ah;
        if (shape_.heads[i].hidden > 0) {
            MatrixXd zh =
                (x * weight(heads_[i][0]).transpose()).rowwise() + bias(heads_[i][0]).transpose();
            check_finite(zh, "head hidden");
            ah = sin_scaled(zh, wh);
            if (cache) {
                cache->head_zh.push_back(std::move(zh));
                cache->head_ah.push_back(ah);
            }
            hin = &ah;
        } else if (cache) {
            cache->head_zh.emplace_back();
            cache->head_ah.emplace_back();
        }
        MatrixXd y =
            (*hin * weight(heads_[i][1]).transpose()).rowwise() + bias(heads_[i][1]).transpose();
        check_finite(y, "head output");
        out.middleCols(col, shape_.heads[i].out) = y;
        col += shape_.heads[i].out;
    }
    if (cache) cache->valid = true;
    return out;
}

VectorXd Network::backward(const ForwardCache& cache, const MatrixXd& d_out) const {
    if (!cache.valid) throw UsageError("backward: forward cache missing or invalid");
    if (d_out.cols() != shape_.total_out() || d_out.rows() != cache.input.rows()) {
        throw UsageError("backward: output-gradient shape mismatch");
    }
    const double w0 = shape_.omega0;
    const double wh = shape_.omega_hidden;
    VectorXd grads = VectorXd::Zero(params_.size());
    auto gw = [&](const Seg& s) {
        return Eigen::Map<MatrixXd>(grads.data() + s.w_off, s.rows, s.cols);
    };
    auto gb = [&](const Seg& s) { return Eigen::Map<VectorXd>(grads.data() + s.b_off, s.rows); };

    MatrixXd d_enc = MatrixXd::Zero(cache.encoder_out.rows(), shape_.width);
    int col = 0;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        const MatrixXd dz = d_out.middleCols(col, shape_.heads[i].out);
        col += shape_.heads[i].out;
        if (shape_.heads[i].hidden > 0) {
            gw(heads_[i][1]).noalias() += dz.transpose() * cache.head_ah[i];
            gb(heads_[i][1]) += dz.colwise().sum().transpose();
            MatrixXd da = dz * weight(heads_[i][1]);
            MatrixXd dzh = mul_cos_scaled(da, cache.head_zh[i], wh);
            gw(heads_[i][0]).noalias() += dzh.transpose() * cache.encoder_out;
            gb(heads_[i][0]) += dzh.colwise().sum().transpose();
            d_enc.noalias() += dzh * weight(heads_[i][0]);
        } else {
            gw(heads_[i][1]).noalias() += dz.transpose() * cache.encoder_out;
            gb(heads_[i][1]) += dz.colwise().sum().transpose();
            d_enc.noalias() += dz * weight(heads_[i][1]);
        }
    }

    MatrixXd dx = std::move(d_enc);
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
        if (shape_.dropout_block == b && cache.dropout_mask.size() > 0) {
            dx = dx.cwiseProduct(cache.dropout_mask);
        }
        // out = 0.5 * (x + sin(wh * z2))
        MatrixXd dz2 = mul_cos_scaled(dx, cache.block_z2[b], wh);
        dz2 *= 0.5;
        gw(blocks_[b][1]).noalias() += dz2.transpose() * cache.block_h[b];
        gb(blocks_[b][1]) += dz2.colwise().sum().transpose();
        MatrixXd dh = dz2 * weight(blocks_[b][1]);
        MatrixXd dz1 = mul_cos_scaled(dh, cache.block_z1[b], wh);
        gw(blocks_[b][0]).noalias() += dz1.transpose() * cache.block_in[b];
        gb(blocks_[b][0]) += dz1.colwise().sum().transpose();
        dx = (0.5 * dx + dz1 * weight(blocks_[b][0])).eval();
    }

    MatrixXd dz0 = mul_cos_scaled(dx, cache.z0, w0);
    gw(input_).noalias() += dz0.transpose() * cache.input;
    gb(input_) += dz0.colwise().sum().transpose();
    return grads;
}

AdamState AdamState::zeros(std::size_t n) {
    AdamState s;
    s.m = VectorXd::Zero(static_cast<Eigen::Index>(n));
    s.v = VectorXd::Zero(static_cast<Eigen::Index>(n));
    return s;
}

void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state, double lr,
               bool quantize_f32) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw UsageError("adam_step: parameter/gradient/state size mismatch");
    }
    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v.array() + (1.0 - state.beta2) * grads.array().square();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
    if (quantize_f32) {
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            params[i] = static_cast<double>(static_cast<float>(params[i]));
        }
    }
}

double LrSchedule::lr_at(int epoch) const {
    if (epoch < 0) throw UsageError("lr_at: negative epoch");
    if (step_size < 1 || decay <= 0.0 || decay > 1.0) {
        throw ConfigError("LrSchedule: require 0 < decay <= 1 and step_size >= 1");
    }
    return base_lr * std::pow(decay, static_cast<double>(epoch / step_size));
}

}  // namespace uinr
