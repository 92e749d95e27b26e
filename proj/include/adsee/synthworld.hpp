#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "adsee/editor.hpp"
#include "adsee/matrix.hpp"
#include "json.hpp"

namespace adsee {

/// Configuration of the deterministic synthetic ad universe. The generator
/// weight is A = U diag(spectrum) V^T with seeded orthonormal U, V, so the
/// right-singular directions (columns of V) are known planted axes. A hidden
/// attractiveness law maps latent coordinates along the first planted axes to
/// a true click rate; clicks are binomial draws from it.
struct WorldConfig {
    std::uint64_t seed = 20240501;
    std::size_t n_ads = 5000;
    int category_count = 8;
    std::size_t latent_rows = 4;   // d
    std::size_t latent_cols = 16;  // l
    std::size_t obs_rows = 24;     // each latent row maps into this many observation channels
    std::size_t text_dim = 16;
    std::vector<double> spectrum;  // descending singular values; default geometric 3.0*0.85^p
    std::vector<double> attract_weights = {0.35, -0.20, 0.12, 0.85, -0.10, 0.06};
    double text_weight = 0.5;
    double base_logit = -2.2;
    double category_offset_range = 0.3;
    double noise_level = 0.05;           // logit jitter applied when sampling clicks
    std::uint64_t impressions_min = 5000;
    std::uint64_t impressions_max = 50000;
    double face_coeff_range = 1.5;       // planted-axis coefficients drawn from +-this
    double background_sigma = 0.2;       // off-axis latent noise

    void finalize() {
        if (spectrum.empty()) {
            spectrum.resize(latent_cols);
            double s = 3.0;
            for (std::size_t p = 0; p < latent_cols; ++p, s *= 0.85) spectrum[p] = s;
        }
    }

    void validate() const {
        if (n_ads < 1) throw user_error("world config: n_ads must be >= 1");
        if (category_count < 1) throw user_error("world config: category_count must be >= 1");
        if (latent_rows < 1 || latent_cols < 2)
            throw user_error("world config: latent shape too small");
        if (obs_rows < latent_cols)
            throw user_error("world config: obs_rows must be >= latent_cols for an exact encoder");
        if (spectrum.size() != latent_cols)
            throw user_error("world config: spectrum length must equal latent_cols");
        for (std::size_t p = 0; p < spectrum.size(); ++p) {
            if (!(spectrum[p] > 0.0)) throw user_error("world config: spectrum must be positive");
            // planted axes must be separated: each value at least 10% below the last
            if (p > 0 && !(spectrum[p] <= spectrum[p - 1] / 1.1 + 1e-12))
                throw user_error("world config: spectrum values must descend by >= 10%");
        }
        if (attract_weights.empty() || attract_weights.size() > latent_cols)
            throw user_error("world config: attractiveness weights must fit the latent width");
        for (double w : attract_weights)
            if (!std::isfinite(w)) throw user_error("world config: non-finite attractiveness weight");
        if (impressions_min < 1 || impressions_min > impressions_max)
            throw user_error("world config: bad impressions range");
        if (noise_level < 0.0) throw user_error("world config: noise_level must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const WorldConfig& c) {
    j = nlohmann::json{
        {"seed", c.seed},
        {"n_ads", c.n_ads},
        {"category_count", c.category_count},
        {"latent_rows", c.latent_rows},
        {"latent_cols", c.latent_cols},
        {"obs_rows", c.obs_rows},
        {"text_dim", c.text_dim},
        {"spectrum", c.spectrum},
        {"attract_weights", c.attract_weights},
        {"text_weight", c.text_weight},
        {"base_logit", c.base_logit},
        {"category_offset_range", c.category_offset_range},
        {"noise_level", c.noise_level},
        {"impressions_min", c.impressions_min},
        {"impressions_max", c.impressions_max},
        {"face_coeff_range", c.face_coeff_range},
        {"background_sigma", c.background_sigma},
    };
}

inline void from_json(const nlohmann::json& j, WorldConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.n_ads = j.value("n_ads", c.n_ads);
    c.category_count = j.value("category_count", c.category_count);
    c.latent_rows = j.value("latent_rows", c.latent_rows);
    c.latent_cols = j.value("latent_cols", c.latent_cols);
    c.obs_rows = j.value("obs_rows", c.obs_rows);
    c.text_dim = j.value("text_dim", c.text_dim);
    if (j.contains("spectrum")) j.at("spectrum").get_to(c.spectrum);
    if (j.contains("attract_weights")) j.at("attract_weights").get_to(c.attract_weights);
    c.text_weight = j.value("text_weight", c.text_weight);
    c.base_logit = j.value("base_logit", c.base_logit);
    c.category_offset_range = j.value("category_offset_range", c.category_offset_range);
    c.noise_level = j.value("noise_level", c.noise_level);
    c.impressions_min = j.value("impressions_min", c.impressions_min);
    c.impressions_max = j.value("impressions_max", c.impressions_max);
    c.face_coeff_range = j.value("face_coeff_range", c.face_coeff_range);
    c.background_sigma = j.value("background_sigma", c.background_sigma);
}

namespace detail {
/// Seeded random matrix with orthonormal columns (modified Gram-Schmidt, two
/// passes for numerical cleanliness). Requires rows >= cols.
inline Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows < cols) throw user_error("random_orthonormal: rows must be >= cols");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    for (std::size_t c = 0; c < cols; ++c) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t prev = 0; prev < c; ++prev) {
                double proj = 0.0;
                for (std::size_t r = 0; r < rows; ++r) proj += m(r, c) * m(r, prev);
                for (std::size_t r = 0; r < rows; ++r) m(r, c) -= proj * m(r, prev);
            }
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) norm += m(r, c) * m(r, c);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw user_error("random_orthonormal: degenerate column draw");
        for (std::size_t r = 0; r < rows; ++r) m(r, c) /= norm;
    }
    return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

class SynthWorld {
  public:
    static SynthWorld build(WorldConfig cfg) {
        cfg.finalize();
        cfg.validate();
        SynthWorld w;
        w.cfg_ = cfg;
        Rng rng(cfg.seed);
        w.u_ = detail::random_orthonormal(cfg.obs_rows, cfg.latent_cols, rng);
        w.v_ = detail::random_orthonormal(cfg.latent_cols, cfg.latent_cols, rng);
        w.a_ = Matrix(cfg.obs_rows, cfg.latent_cols);
        for (std::size_t i = 0; i < cfg.obs_rows; ++i)
            for (std::size_t j = 0; j < cfg.latent_cols; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < cfg.latent_cols; ++k)
                    acc += w.u_(i, k) * cfg.spectrum[k] * w.v_(j, k);
                w.a_(i, j) = acc;
            }
        w.cat_offsets_.resize(static_cast<std::size_t>(cfg.category_count));
        for (double& o : w.cat_offsets_)
            o = rng.uniform(-cfg.category_offset_range, cfg.category_offset_range);
        return w;
    }

    const WorldConfig& config() const { return cfg_; }
    const Matrix& generator_weight() const { return a_; }

    /// Planted axis p: the p-th right-singular direction (column p of V).
    std::vector<double> planted_axis(std::size_t p) const {
        if (p >= cfg_.latent_cols) throw user_error("planted_axis: index out of range");
        std::vector<double> axis(cfg_.latent_cols);
        for (std::size_t r = 0; r < cfg_.latent_cols; ++r) axis[r] = v_(r, p);
        return axis;
    }

    /// Index of the planted axis with the largest |attractiveness weight|.
    std::size_t dominant_axis() const {
        std::size_t best = 0;
        for (std::size_t p = 1; p < cfg_.attract_weights.size(); ++p)
            if (std::abs(cfg_.attract_weights[p]) > std::abs(cfg_.attract_weights[best])) best = p;
        return best;
    }

    /// The stand-in image of one face: flatten(z A^T), length d * obs_rows.
    std::vector<double> generate(const Matrix& z) const {
        check_latent(z);
        std::vector<double> obs(cfg_.latent_rows * cfg_.obs_rows, 0.0);
        for (std::size_t r = 0; r < cfg_.latent_rows; ++r)
            for (std::size_t o = 0; o < cfg_.obs_rows; ++o) {
                double acc = 0.0;
                for (std::size_t k = 0; k < cfg_.latent_cols; ++k) acc += z(r, k) * a_(o, k);
                obs[r * cfg_.obs_rows + o] = acc;
            }
        return obs;
    }

    /// Exact inverse of generate: z = obs_matrix * (A^+)^T with
    /// A^+ = V diag(1/spectrum) U^T.
    Matrix encode(const std::vector<double>& obs) const {
        if (obs.size() != cfg_.latent_rows * cfg_.obs_rows)
            throw user_error("encode: observation length does not match the world");
        Matrix z(cfg_.latent_rows, cfg_.latent_cols);
        for (std::size_t r = 0; r < cfg_.latent_rows; ++r)
            for (std::size_t j = 0; j < cfg_.latent_cols; ++j) {
                // (A^+)_{j,o} = sum_k V(j,k) U(o,k) / s_k
                double acc = 0.0;
                for (std::size_t k = 0; k < cfg_.latent_cols; ++k) {
                    double uo = 0.0;
                    for (std::size_t o = 0; o < cfg_.obs_rows; ++o)
                        uo += obs[r * cfg_.obs_rows + o] * u_(o, k);
                    acc += v_(j, k) * uo / cfg_.spectrum[k];
                }
                z(r, j) = acc;
            }
        return z;
    }

    /// Whole-image embedding: the mean over faces of each face's
    /// channel-averaged observation (length obs_rows). This is the linkage the
    /// editor uses to refresh x5 after a latent edit.
    std::vector<double> image_embedding(const std::vector<Matrix>& latents) const {
        if (latents.empty()) throw user_error("image_embedding: no faces");
        std::vector<double> emb(cfg_.obs_rows, 0.0);
        for (const Matrix& z : latents) {
            const std::vector<double> obs = generate(z);
            for (std::size_t o = 0; o < cfg_.obs_rows; ++o) {
                double acc = 0.0;
                for (std::size_t r = 0; r < cfg_.latent_rows; ++r)
                    acc += obs[r * cfg_.obs_rows + o];
                emb[o] += acc / static_cast<double>(cfg_.latent_rows);
            }
        }
        const double inv = 1.0 / static_cast<double>(latents.size());
        for (double& e : emb) e *= inv;
        return emb;
    }

    ImageEmbedFn image_embed_fn() const {
        // self-contained copy so the closure outlives the world object
        auto self = std::make_shared<SynthWorld>(*this);
        return [self](const std::vector<Matrix>& latents) { return self->image_embedding(latents); };
    }

    /// Noise-free attractiveness logit of a record.
    double true_logit(const AdRecord& rec) const {
        if (rec.face_latents.empty()) throw user_error("true_logit: record has no face");
        if (rec.category < 0 || rec.category >= cfg_.category_count)
            throw user_error("true_logit: category out of range");
        const Matrix pooled = pool_latents(rec.face_latents, PoolKind::Max);
        std::vector<double> row_mean(cfg_.latent_cols, 0.0);
        for (std::size_t r = 0; r < pooled.rows(); ++r)
            for (std::size_t c = 0; c < pooled.cols(); ++c) row_mean[c] += pooled(r, c);
        for (double& x : row_mean) x /= static_cast<double>(pooled.rows());

        double logit = cfg_.base_logit + cat_offsets_[static_cast<std::size_t>(rec.category)];
        for (std::size_t p = 0; p < cfg_.attract_weights.size(); ++p) {
            double proj = 0.0;
            for (std::size_t r = 0; r < cfg_.latent_cols; ++r) proj += row_mean[r] * v_(r, p);
            logit += cfg_.attract_weights[p] * proj;
        }
        logit += cfg_.text_weight * text_proxy(rec.text_embedding);
        return logit;
    }

    /// The hidden oracle: true click rate in (0,1).
    double true_cr(const AdRecord& rec) const { return detail::sigmoid(true_logit(rec)); }

    /// Seeded ad sampling: category, 1-5 faces around planted-axis
    /// coefficients, category-correlated class labels, linked image embedding,
    /// random text, binomial clicks from the (noise-jittered) true rate.
    std::vector<AdRecord> sample_ads(std::size_t n, std::uint64_t sample_seed) const {
        Rng rng(sample_seed);
        std::vector<AdRecord> records;
        records.reserve(n);
        const std::size_t q_attr = cfg_.attract_weights.size();
        for (std::size_t i = 0; i < n; ++i) {
            AdRecord rec;
            rec.id = "ad-" + std::to_string(sample_seed) + "-" + std::to_string(i);
            rec.category = static_cast<int>(rng.index(static_cast<std::size_t>(cfg_.category_count)));

            // two category-determined labels plus 1-3 random extras
            std::set<int> labels = {rec.category % kClassLabelCount,
                                    (rec.category * 7 + 13) % kClassLabelCount};
            const std::size_t extras = 1 + rng.index(3);
            for (std::size_t e = 0; e < extras; ++e)
                labels.insert(static_cast<int>(rng.index(kClassLabelCount)));
            rec.class_labels.assign(labels.begin(), labels.end());

            const std::size_t faces = 1 + rng.index(kMaxFaces);
            rec.face_latents.reserve(faces);
            for (std::size_t f = 0; f < faces; ++f) {
                Matrix z(cfg_.latent_rows, cfg_.latent_cols);
                for (std::size_t e = 0; e < z.size(); ++e)
                    z.data()[e] = cfg_.background_sigma * rng.normal();
                for (std::size_t p = 0; p < q_attr; ++p) {
                    const double coeff =
                        rng.uniform(-cfg_.face_coeff_range, cfg_.face_coeff_range);
                    for (std::size_t r = 0; r < cfg_.latent_rows; ++r)
                        for (std::size_t c = 0; c < cfg_.latent_cols; ++c)
                            z(r, c) += coeff * v_(c, p);
                }
                rec.face_latents.push_back(std::move(z));
            }

            rec.text_embedding.resize(cfg_.text_dim);
            for (double& t : rec.text_embedding) t = rng.uniform(-1.0, 1.0);
            rec.image_embedding = image_embedding(rec.face_latents);

            rec.impressions = cfg_.impressions_min +
                              rng.index(cfg_.impressions_max - cfg_.impressions_min + 1);
            const double jitter = cfg_.noise_level * rng.normal();
            const double p_click = detail::sigmoid(true_logit(rec) + jitter);
            std::binomial_distribution<std::uint64_t> binom(rec.impressions, p_click);
            rec.clicks = binom(rng.engine());
            records.push_back(std::move(rec));
        }
        return records;
    }

    nlohmann::json manifest() const {
        return nlohmann::json{
            {"schema_version", "adsee-world/1"},
            {"config", cfg_},
            {"generator_weight", a_},
            {"left_factor", u_},
            {"planted_axes", v_},
            {"category_offsets", cat_offsets_},
        };
    }

    static SynthWorld from_manifest(const nlohmann::json& j) {
        if (j.value("schema_version", "") != "adsee-world/1")
            throw user_error("world manifest: unsupported schema_version");
        SynthWorld w;
        j.at("config").get_to(w.cfg_);
        w.cfg_.finalize();
        w.cfg_.validate();
        j.at("generator_weight").get_to(w.a_);
        j.at("left_factor").get_to(w.u_);
        j.at("planted_axes").get_to(w.v_);
        j.at("category_offsets").get_to(w.cat_offsets_);
        if (w.a_.rows() != w.cfg_.obs_rows || w.a_.cols() != w.cfg_.latent_cols)
            throw user_error("world manifest: generator weight shape mismatch");
        if (w.cat_offsets_.size() != static_cast<std::size_t>(w.cfg_.category_count))
            throw user_error("world manifest: category offset count mismatch");
        return w;
    }

    static SynthWorld load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw user_error("cannot open world manifest: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw user_error("world manifest parse error: " + std::string(e.what()));
        }
        return from_manifest(j);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw user_error("cannot open for writing: " + path);
        out << manifest().dump(2) << '\n';
        if (!out) throw user_error("write failed: " + path);
    }

  private:
    WorldConfig cfg_;
    Matrix a_, u_, v_;
    std::vector<double> cat_offsets_;

    void check_latent(const Matrix& z) const {
        if (z.rows() != cfg_.latent_rows || z.cols() != cfg_.latent_cols)
            throw user_error("latent shape does not match the world");
    }

    double text_proxy(const std::vector<double>& text) const {
        if (text.empty()) return 0.0;
        double acc = 0.0;
        for (double t : text) acc += t;
        return acc / static_cast<double>(text.size());
    }
};

}  // namespace adsee
