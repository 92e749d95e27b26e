#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "json.hpp"

namespace adsee {

struct PredictorDims {
    int category_count = 0;
    int class_count = kClassLabelCount;
    int face_slots = kMaxFaces;  // 6 when face-free records are allowed
    int latent_elems = 0;        // d * l
    int image_dim = 0;
    int text_dim = 0;
    int embed_width = 16;
    int layers = 2;
    int heads = 2;
    int pool_kind = 0;  // 0 = max, 1 = average; the x4 encoding recipe travels with the model

    bool operator==(const PredictorDims&) const = default;

    std::vector<int> field_dims() const {
        return {category_count, class_count, face_slots, latent_elems, image_dim, text_dim};
    }
    void validate() const {
        if (category_count < 1 || latent_elems < 1 || image_dim < 1 || text_dim < 1)
            throw user_error("predictor dims: field widths must be positive");
        if (embed_width < 1 || layers < 1 || heads < 1)
            throw user_error("predictor dims: width/layers/heads must be positive");
        if (embed_width % heads != 0)
            throw user_error("predictor dims: embed_width must be divisible by heads");
        if (face_slots != kMaxFaces && face_slots != kMaxFaces + 1)
            throw user_error("predictor dims: face_slots must be 5 or 6");
        if (pool_kind != 0 && pool_kind != 1)
            throw user_error("predictor dims: pool_kind must be 0 (max) or 1 (average)");
    }
};

/// The encoding recipe a model was trained with.
inline EncodeOptions encode_options(const PredictorDims& dims) {
    EncodeOptions opts;
    opts.pool = dims.pool_kind == 1 ? PoolKind::Average : PoolKind::Max;
    opts.allow_zero_faces = dims.face_slots == kMaxFaces + 1;
    return opts;
}

/// Named view into the flat parameter vector. Matrices are row-major with
/// shape (in_dim x out_dim); the op is y = x^T M. Bias entries are excluded
/// from the weight-norm regularizer.
struct TensorSpec {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool is_weight = true;

    std::size_t size() const { return rows * cols; }
};

inline constexpr int kFieldCount = 6;

class PredictorModel {
  public:
    PredictorDims dims;
    std::vector<double> params;
    double alpha_reg = 1e-4;
    double label_mean = 0.0;
    double label_std = 1.0;

    PredictorModel() = default;

    PredictorModel(const PredictorDims& d, std::uint64_t seed) : dims(d) {
        dims.validate();
        build_specs();
        params.assign(param_count_, 0.0);
        Rng rng(seed);
        for (const TensorSpec& t : specs_) {
            // Uniform fan-in initialization; biases start at zero.
            if (!t.is_weight) continue;
            const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows));
            for (std::size_t i = 0; i < t.size(); ++i)
                params[t.offset + i] = rng.uniform(-bound, bound);
        }
    }

    const std::vector<TensorSpec>& specs() const { return specs_; }
    std::size_t param_count() const { return param_count_; }

    const TensorSpec& spec(const std::string& name) const {
        for (const TensorSpec& t : specs_)
            if (t.name == name) return t;
        throw user_error("unknown tensor: " + name);
    }
    std::span<double> tensor(const std::string& name) {
        const TensorSpec& t = spec(name);
        return {params.data() + t.offset, t.size()};
    }
    std::span<const double> tensor(const std::string& name) const {
        const TensorSpec& t = spec(name);
        return {params.data() + t.offset, t.size()};
    }

    double weight_norm() const {
        double acc = 0.0;
        for (const TensorSpec& t : specs_) {
            if (!t.is_weight) continue;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double w = params[t.offset + i];
                acc += w * w;
            }
        }
        return std::sqrt(acc);
    }

    double standardize(double cr) const { return (cr - label_mean) / label_std; }
    double destandardize(double y) const { return y * label_std + label_mean; }

    // ---- forward pass ----

    /// All intermediate activations of one forward pass; reused by backprop.
    struct Cache {
        std::vector<double> h0;               // first-order embeddings, 6*w
        std::vector<std::vector<double>> tok;  // layers+1 levels of 6*w tokens
        // per layer: pre-activation residual sums, per-head q/k/v and softmax rows
        std::vector<std::vector<double>> pre;      // layer -> 6*w
        std::vector<std::vector<double>> qkv;      // layer -> heads*3*6*dh
        std::vector<std::vector<double>> attn;     // layer -> heads*6*6
        double standardized = 0.0;
    };

    double forward(const FieldBundle& bundle, Cache* cache = nullptr) const {
        check_bundle(bundle);
        const int w = dims.embed_width;
        const int dh = w / dims.heads;
        const std::vector<const std::vector<double>*> fields = {
            &bundle.x1_category, &bundle.x2_class,     &bundle.x3_face_count,
            &bundle.x4_face_latent, &bundle.x5_image_emb, &bundle.x6_text_emb};

        std::vector<double> cur(kFieldCount * w, 0.0);
        for (int f = 0; f < kFieldCount; ++f) {
            const TensorSpec& t = specs_[static_cast<std::size_t>(f)];
            const double* m = params.data() + t.offset;
            const std::vector<double>& x = *fields[static_cast<std::size_t>(f)];
            double* out = cur.data() + f * w;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                const double* row = m + i * static_cast<std::size_t>(w);
                for (int j = 0; j < w; ++j) out[j] += xi * row[j];
            }
        }
        if (cache) {
            cache->h0 = cur;
            cache->tok.assign(1, cur);
            cache->pre.clear();
            cache->qkv.clear();
            cache->attn.clear();
        }
        const std::vector<double> h_first = cur;

        std::vector<double> q(static_cast<std::size_t>(kFieldCount) * dh);
        std::vector<double> k(q.size()), v(q.size());
        for (int layer = 0; layer < dims.layers; ++layer) {
            std::vector<double> heads_out(cur.size(), 0.0);
            std::vector<double> layer_qkv, layer_attn;
            if (cache) {
                layer_qkv.reserve(static_cast<std::size_t>(dims.heads) * 3 * q.size());
                layer_attn.reserve(static_cast<std::size_t>(dims.heads) * kFieldCount * kFieldCount);
            }
            for (int head = 0; head < dims.heads; ++head) {
                const double* wq = params.data() + spec_at(layer, head, 0).offset;
                const double* wk = params.data() + spec_at(layer, head, 1).offset;
                const double* wv = params.data() + spec_at(layer, head, 2).offset;
                project(cur, wq, q, dh);
                project(cur, wk, k, dh);
                project(cur, wv, v, dh);
                if (cache) {
                    layer_qkv.insert(layer_qkv.end(), q.begin(), q.end());
                    layer_qkv.insert(layer_qkv.end(), k.begin(), k.end());
                    layer_qkv.insert(layer_qkv.end(), v.begin(), v.end());
                }
                for (int m = 0; m < kFieldCount; ++m) {
                    double scores[kFieldCount];
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int n = 0; n < kFieldCount; ++n) {
                        scores[n] = dot_n(q.data() + m * dh, k.data() + n * dh, dh);
                        mx = std::max(mx, scores[n]);
                    }
                    double z = 0.0;
                    for (int n = 0; n < kFieldCount; ++n) {
                        scores[n] = std::exp(scores[n] - mx);
                        z += scores[n];
                    }
                    double* dst = heads_out.data() + m * w + head * dh;
                    for (int n = 0; n < kFieldCount; ++n) {
                        const double a = scores[n] / z;
                        if (cache) layer_attn.push_back(a);
                        const double* vn = v.data() + n * dh;
                        for (int j = 0; j < dh; ++j) dst[j] += a * vn[j];
                    }
                }
            }
            // residual projection + rectifier
            const double* wr = params.data() + spec_res(layer).offset;
            std::vector<double> next(cur.size());
            for (int m = 0; m < kFieldCount; ++m) {
                const double* e = cur.data() + m * w;
                double* pre = next.data() + m * w;
                for (int j = 0; j < w; ++j) pre[j] = heads_out[static_cast<std::size_t>(m * w + j)];
                for (int i = 0; i < w; ++i) {
                    const double ei = e[i];
                    if (ei == 0.0) continue;
                    const double* row = wr + i * w;
                    for (int j = 0; j < w; ++j) pre[j] += ei * row[j];
                }
            }
            if (cache) {
                cache->pre.push_back(next);
                cache->qkv.push_back(std::move(layer_qkv));
                cache->attn.push_back(std::move(layer_attn));
            }
            for (double& x : next) x = std::max(x, 0.0);
            cur = std::move(next);
            if (cache) cache->tok.push_back(cur);
        }

        // Output head on concat(h_hat) + concat(h_first), point-wise sum.
        const TensorSpec& ow = spec("out.w");
        const TensorSpec& ob = spec("out.b");
        const double* wvec = params.data() + ow.offset;
        double y = params[ob.offset];
        for (std::size_t i = 0; i < cur.size(); ++i) y += wvec[i] * (cur[i] + h_first[i]);
        if (cache) cache->standardized = y;
        return y;
    }

    /// Standardized prediction; thread-safe (read-only on the model).
    double predict_standardized(const FieldBundle& bundle) const { return forward(bundle); }
    /// De-standardized click-rate prediction.
    double predict_cr(const FieldBundle& bundle) const {
        return destandardize(forward(bundle));
    }

    // ---- backward pass ----

    /// Accumulates d(loss)/d(params) into grad for one sample, given
    /// d(loss)/d(standardized prediction). grad must have param_count entries.
    void backward(const FieldBundle& bundle, const Cache& cache, double dpred,
                  std::vector<double>& grad) const {
        const int w = dims.embed_width;
        const int dh = w / dims.heads;
        const std::size_t tokens = static_cast<std::size_t>(kFieldCount) * w;

        const TensorSpec& ow = spec("out.w");
        const TensorSpec& ob = spec("out.b");
        const std::vector<double>& h_last = cache.tok.back();
        grad[ob.offset] += dpred;
        std::vector<double> d_last(tokens), d_first(tokens);
        for (std::size_t i = 0; i < tokens; ++i) {
            grad[ow.offset + i] += dpred * (h_last[i] + cache.h0[i]);
            const double g = dpred * params[ow.offset + i];
            d_last[i] = g;
            d_first[i] = g;
        }

        std::vector<double> dq(static_cast<std::size_t>(kFieldCount) * dh);
        std::vector<double> dk(dq.size()), dv(dq.size());
        for (int layer = dims.layers - 1; layer >= 0; --layer) {
            const std::vector<double>& pre = cache.pre[static_cast<std::size_t>(layer)];
            const std::vector<double>& input = cache.tok[static_cast<std::size_t>(layer)];
            // through the rectifier
            std::vector<double> dpre(tokens);
            for (std::size_t i = 0; i < tokens; ++i) dpre[i] = pre[i] > 0.0 ? d_last[i] : 0.0;

            std::vector<double> dinput(tokens, 0.0);
            // residual projection
            const TensorSpec& rs = spec_res(layer);
            const double* wr = params.data() + rs.offset;
            for (int m = 0; m < kFieldCount; ++m) {
                const double* e = input.data() + m * w;
                const double* dp = dpre.data() + m * w;
                double* di = dinput.data() + m * w;
                for (int i = 0; i < w; ++i) {
                    const double* row = wr + i * w;
                    double acc = 0.0;
                    for (int j = 0; j < w; ++j) {
                        grad[rs.offset + static_cast<std::size_t>(i * w + j)] += e[i] * dp[j];
                        acc += row[j] * dp[j];
                    }
                    di[i] += acc;
                }
            }

            const std::vector<double>& qkv = cache.qkv[static_cast<std::size_t>(layer)];
            const std::vector<double>& attn = cache.attn[static_cast<std::size_t>(layer)];
            const std::size_t per_head = static_cast<std::size_t>(kFieldCount) * dh;
            for (int head = 0; head < dims.heads; ++head) {
                const double* q = qkv.data() + (static_cast<std::size_t>(head) * 3 + 0) * per_head;
                const double* k = qkv.data() + (static_cast<std::size_t>(head) * 3 + 1) * per_head;
                const double* v = qkv.data() + (static_cast<std::size_t>(head) * 3 + 2) * per_head;
                const double* a = attn.data() +
                                  static_cast<std::size_t>(head) * kFieldCount * kFieldCount;
                std::fill(dq.begin(), dq.end(), 0.0);
                std::fill(dk.begin(), dk.end(), 0.0);
                std::fill(dv.begin(), dv.end(), 0.0);
                for (int m = 0; m < kFieldCount; ++m) {
                    const double* dhead = dpre.data() + m * w + head * dh;
                    const double* am = a + m * kFieldCount;
                    double da[kFieldCount];
                    double inner = 0.0;
                    for (int n = 0; n < kFieldCount; ++n) {
                        da[n] = dot_n(dhead, v + n * dh, dh);
                        for (int j = 0; j < dh; ++j)
                            dv[static_cast<std::size_t>(n * dh + j)] += am[n] * dhead[j];
                        inner += am[n] * da[n];
                    }
                    for (int n = 0; n < kFieldCount; ++n) {
                        const double ds = am[n] * (da[n] - inner);  // softmax jacobian
                        for (int j = 0; j < dh; ++j) {
                            dq[static_cast<std::size_t>(m * dh + j)] += ds * k[n * dh + j];
                            dk[static_cast<std::size_t>(n * dh + j)] += ds * q[m * dh + j];
                        }
                    }
                }
                project_backward(input, layer, head, 0, dq, dinput, grad, dh);
                project_backward(input, layer, head, 1, dk, dinput, grad, dh);
                project_backward(input, layer, head, 2, dv, dinput, grad, dh);
            }
            d_last = std::move(dinput);
        }

        // into the embeddings: d(h0) = d from layer 0 input + skip path
        for (std::size_t i = 0; i < tokens; ++i) d_last[i] += d_first[i];
        const std::vector<const std::vector<double>*> fields = {
            &bundle.x1_category, &bundle.x2_class,     &bundle.x3_face_count,
            &bundle.x4_face_latent, &bundle.x5_image_emb, &bundle.x6_text_emb};
        for (int f = 0; f < kFieldCount; ++f) {
            const TensorSpec& t = specs_[static_cast<std::size_t>(f)];
            const std::vector<double>& x = *fields[static_cast<std::size_t>(f)];
            const double* dout = d_last.data() + f * w;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                double* g = grad.data() + t.offset + i * static_cast<std::size_t>(w);
                for (int j = 0; j < w; ++j) g[j] += xi * dout[j];
            }
        }
    }

    /// Mean-squared error over the batch on standardized labels, plus
    /// alpha_reg times the L2 norm (not its square) of all weights.
    double loss(const std::vector<FieldBundle>& bundles, const std::vector<double>& std_labels,
                std::vector<double>* grad = nullptr) const {
        if (bundles.empty() || bundles.size() != std_labels.size())
            throw user_error("loss: batch empty or label count mismatch");
        const double inv_b = 1.0 / static_cast<double>(bundles.size());
        double mse_acc = 0.0;
        Cache cache;
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            const double pred = forward(bundles[i], grad ? &cache : nullptr);
            const double err = pred - std_labels[i];
            mse_acc += err * err;
            if (grad) backward(bundles[i], cache, 2.0 * err * inv_b, *grad);
        }
        double total = mse_acc * inv_b;
        if (alpha_reg > 0.0) {
            const double norm = weight_norm();
            total += alpha_reg * norm;
            if (grad && norm > 1e-12) {
                const double scale = alpha_reg / norm;
                for (const TensorSpec& t : specs_) {
                    if (!t.is_weight) continue;
                    for (std::size_t i = 0; i < t.size(); ++i)
                        (*grad)[t.offset + i] += scale * params[t.offset + i];
                }
            }
        }
        return total;
    }

    void check_bundle(const FieldBundle& b) const {
        const std::vector<int> d = dims.field_dims();
        const std::size_t sizes[kFieldCount] = {b.x1_category.size(), b.x2_class.size(),
                                                b.x3_face_count.size(), b.x4_face_latent.size(),
                                                b.x5_image_emb.size(), b.x6_text_emb.size()};
        for (int f = 0; f < kFieldCount; ++f)
            if (sizes[f] != static_cast<std::size_t>(d[static_cast<std::size_t>(f)]))
                throw user_error("field " + std::to_string(f + 1) +
                                 " width does not match the model configuration");
    }

  private:
    std::vector<TensorSpec> specs_;
    std::size_t param_count_ = 0;

    void build_specs() {
        specs_.clear();
        param_count_ = 0;
        const auto add = [this](std::string name, std::size_t rows, std::size_t cols,
                                bool is_weight) {
            specs_.push_back({std::move(name), param_count_, rows, cols, is_weight});
            param_count_ += rows * cols;
        };
        const std::vector<int> fd = dims.field_dims();
        const auto w = static_cast<std::size_t>(dims.embed_width);
        for (int f = 0; f < kFieldCount; ++f)
            add("embed." + std::to_string(f), static_cast<std::size_t>(fd[static_cast<std::size_t>(f)]), w, true);
        const auto dh = w / static_cast<std::size_t>(dims.heads);
        for (int layer = 0; layer < dims.layers; ++layer) {
            for (int head = 0; head < dims.heads; ++head) {
                const std::string base =
                    "layer." + std::to_string(layer) + ".head." + std::to_string(head);
                add(base + ".wq", w, dh, true);
                add(base + ".wk", w, dh, true);
                add(base + ".wv", w, dh, true);
            }
            add("layer." + std::to_string(layer) + ".wr", w, w, true);
        }
        add("out.w", static_cast<std::size_t>(kFieldCount) * w, 1, true);
        add("out.b", 1, 1, false);
    }

    // tensor-table index helpers relying on the fixed build order above
    const TensorSpec& spec_at(int layer, int head, int which) const {
        const std::size_t base = static_cast<std::size_t>(kFieldCount);
        const std::size_t per_layer = static_cast<std::size_t>(dims.heads) * 3 + 1;
        return specs_[base + static_cast<std::size_t>(layer) * per_layer +
                      static_cast<std::size_t>(head) * 3 + static_cast<std::size_t>(which)];
    }
    const TensorSpec& spec_res(int layer) const {
        const std::size_t base = static_cast<std::size_t>(kFieldCount);
        const std::size_t per_layer = static_cast<std::size_t>(dims.heads) * 3 + 1;
        return specs_[base + static_cast<std::size_t>(layer) * per_layer + per_layer - 1];
    }

    static double dot_n(const double* a, const double* b, int n) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += a[i] * b[i];
        return acc;
    }

    void project(const std::vector<double>& tokens_in, const double* m,
                 std::vector<double>& out, int dh) const {
        const int w = dims.embed_width;
        std::fill(out.begin(), out.end(), 0.0);
        for (int t = 0; t < kFieldCount; ++t) {
            const double* e = tokens_in.data() + t * w;
            double* o = out.data() + t * dh;
            for (int i = 0; i < w; ++i) {
                const double ei = e[i];
                if (ei == 0.0) continue;
                const double* row = m + i * dh;
                for (int j = 0; j < dh; ++j) o[j] += ei * row[j];
            }
        }
    }

    void project_backward(const std::vector<double>& tokens_in, int layer, int head, int which,
                          const std::vector<double>& dout, std::vector<double>& dinput,
                          std::vector<double>& grad, int dh) const {
        const int w = dims.embed_width;
        const TensorSpec& t = spec_at(layer, head, which);
        const double* m = params.data() + t.offset;
        for (int tok = 0; tok < kFieldCount; ++tok) {
            const double* e = tokens_in.data() + tok * w;
            const double* do_ = dout.data() + tok * dh;
            double* di = dinput.data() + tok * w;
            for (int i = 0; i < w; ++i) {
                const double* row = m + i * dh;
                double acc = 0.0;
                for (int j = 0; j < dh; ++j) {
                    grad[t.offset + static_cast<std::size_t>(i * dh + j)] += e[i] * do_[j];
                    acc += row[j] * do_[j];
                }
                di[i] += acc;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 400;
    std::size_t patience = 40;  // early stop after this many epochs without val improvement
    double alpha_reg = 1e-4;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0.0) throw user_error("train config: learning_rate must be > 0");
        if (batch_size < 1) throw user_error("train config: batch_size must be >= 1");
        if (max_epochs < 1) throw user_error("train config: max_epochs must be >= 1");
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
};

struct TrainResult {
    PredictorModel model;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
};

namespace detail {
struct Adam {
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lr;
    std::size_t t = 0;

    Adam(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};
}  // namespace detail

/// Pre-encoded training view of a dataset partition.
struct EncodedSet {
    std::vector<FieldBundle> bundles;
    std::vector<double> crs;  // raw click rates
};

inline EncodedSet encode_set(const std::vector<AdRecord>& records, int category_count,
                             std::size_t latent_elems, const EncodeOptions& opts) {
    EncodedSet set;
    set.bundles.reserve(records.size());
    set.crs.reserve(records.size());
    for (const AdRecord& r : records) {
        set.bundles.push_back(encode_fields(r, category_count, latent_elems, opts));
        set.crs.push_back(compute_cr(r.clicks, r.impressions));
    }
    return set;
}

/// Gradient training with mini-batches, label standardization fit on train
/// only, and early stopping on validation MAE. Deterministic for fixed seed.
inline TrainResult train_predictor(const EncodedSet& train, const EncodedSet& val,
                                   PredictorDims dims, const TrainConfig& config) {
    config.validate();
    if (train.bundles.empty() || val.bundles.empty())
        throw user_error("train: train and validation sets must be non-empty");

    PredictorModel model(dims, config.seed);
    model.alpha_reg = config.alpha_reg;

    // Standardization constants from the training labels only.
    double mean = 0.0;
    for (double cr : train.crs) mean += cr;
    mean /= static_cast<double>(train.crs.size());
    double var = 0.0;
    for (double cr : train.crs) var += (cr - mean) * (cr - mean);
    var /= static_cast<double>(train.crs.size());
    model.label_mean = mean;
    // Labels that are constant up to accumulation noise get sigma = 1 so the
    // standardized targets collapse to ~0 instead of amplified round-off.
    const double sigma = std::sqrt(var);
    model.label_std = sigma > 1e-12 * std::max(1.0, std::abs(mean)) ? sigma : 1.0;

    std::vector<double> std_labels(train.crs.size());
    for (std::size_t i = 0; i < train.crs.size(); ++i)
        std_labels[i] = model.standardize(train.crs[i]);

    detail::Adam adam(model.param_count(), config.learning_rate);
    Rng shuffler(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train.bundles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.best_val_mae = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = model.params;
    double best_mean = model.label_mean, best_std = model.label_std;
    std::size_t since_best = 0;

    std::vector<double> grad(model.param_count());
    std::vector<FieldBundle> batch;
    std::vector<double> batch_labels;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffler.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            batch.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train.bundles[order[i]]);
                batch_labels.push_back(std_labels[order[i]]);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            const double batch_loss = model.loss(batch, batch_labels, &grad);
            if (!std::isfinite(batch_loss))
                throw user_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                 " (non-finite value); lower the learning rate");
            adam.step(model.params, grad);
            epoch_loss += batch_loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);

        double val_mae = 0.0;
        for (std::size_t i = 0; i < val.bundles.size(); ++i)
            val_mae += std::abs(model.predict_cr(val.bundles[i]) - val.crs[i]);
        val_mae /= static_cast<double>(val.bundles.size());
        if (!std::isfinite(val_mae))
            throw user_error("train: validation MAE non-finite at epoch " +
                             std::to_string(epoch) + "; lower the learning rate");

        result.log.push_back({epoch, epoch_loss, val_mae});
        if (val_mae < result.best_val_mae) {
            result.best_val_mae = val_mae;
            result.best_epoch = epoch;
            best_params = model.params;
            best_mean = model.label_mean;
            best_std = model.label_std;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    model.params = std::move(best_params);
    model.label_mean = best_mean;
    model.label_std = best_std;
    result.model = std::move(model);
    return result;
}

inline void write_training_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    out << "epoch,train_loss,val_mae\n";
    for (const EpochLog& e : log)
        out << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.val_mae) << '\n';
    if (!out) throw user_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned JSON with shapes and the flat parameter array.
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const PredictorDims& d) {
    j = nlohmann::json{
        {"category_count", d.category_count}, {"class_count", d.class_count},
        {"face_slots", d.face_slots},         {"latent_elems", d.latent_elems},
        {"image_dim", d.image_dim},           {"text_dim", d.text_dim},
        {"embed_width", d.embed_width},       {"layers", d.layers},
        {"heads", d.heads},                   {"pool_kind", d.pool_kind},
    };
}

inline void from_json(const nlohmann::json& j, PredictorDims& d) {
    j.at("category_count").get_to(d.category_count);
    j.at("class_count").get_to(d.class_count);
    j.at("face_slots").get_to(d.face_slots);
    j.at("latent_elems").get_to(d.latent_elems);
    j.at("image_dim").get_to(d.image_dim);
    j.at("text_dim").get_to(d.text_dim);
    j.at("embed_width").get_to(d.embed_width);
    j.at("layers").get_to(d.layers);
    j.at("heads").get_to(d.heads);
    d.pool_kind = j.value("pool_kind", 0);
}

inline nlohmann::json checkpoint_json(const PredictorModel& model) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const TensorSpec& t : model.specs())
        shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    return nlohmann::json{
        {"schema_version", "adsee-predictor/1"},
        {"dims", model.dims},
        {"alpha_reg", model.alpha_reg},
        {"label_mean", model.label_mean},
        {"label_std", model.label_std},
        {"shapes", shapes},
        {"params", model.params},
    };
}

inline PredictorModel checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("schema_version", "") != "adsee-predictor/1")
        throw user_error("checkpoint: unsupported schema_version");
    PredictorModel model(j.at("dims").get<PredictorDims>(), 0);
    j.at("alpha_reg").get_to(model.alpha_reg);
    j.at("label_mean").get_to(model.label_mean);
    j.at("label_std").get_to(model.label_std);
    std::vector<double> params = j.at("params").get<std::vector<double>>();
    if (params.size() != model.param_count())
        throw user_error("checkpoint: parameter count does not match the declared shapes");
    model.params = std::move(params);
    if (model.label_std <= 0.0) throw user_error("checkpoint: label_std must be positive");
    return model;
}

inline void save_checkpoint(const PredictorModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    out << checkpoint_json(model).dump(2) << '\n';
    if (!out) throw user_error("write failed: " + path);
}

inline PredictorModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw user_error("checkpoint parse error: " + std::string(e.what()));
    }
    return checkpoint_from_json(j);
}

}  // namespace adsee
