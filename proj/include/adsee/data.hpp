#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/matrix.hpp"
#include "json.hpp"

namespace adsee {

inline constexpr int kClassLabelCount = 80;  // COCO label vocabulary
inline constexpr int kMaxFaces = 5;

/// One ad: category, detected class labels, per-face latent codes, whole-image
/// and text embeddings, and its exposure counters.
struct AdRecord {
    std::string id;
    int category = 0;
    std::vector<int> class_labels;       // subset of [0, 80)
    std::vector<Matrix> face_latents;    // M matrices, each d x l
    std::vector<double> image_embedding;
    std::vector<double> text_embedding;
    std::uint64_t impressions = 0;
    std::uint64_t clicks = 0;
};

/// The six encoded feature fields fed to the predictor.
struct FieldBundle {
    std::vector<double> x1_category;   // one-hot, length |C|
    std::vector<double> x2_class;      // multi-hot, length 80
    std::vector<double> x3_face_count; // one-hot, length 5 (or 6 with the no-face bucket)
    std::vector<double> x4_face_latent;// flattened pooled latent, length d*l
    std::vector<double> x5_image_emb;
    std::vector<double> x6_text_emb;

    bool operator==(const FieldBundle&) const = default;
};

struct DatasetSplit {
    std::vector<AdRecord> train;
    std::vector<AdRecord> validation;
    std::vector<AdRecord> test;
    std::uint64_t seed = 0;
};

enum class PoolKind { Max, Average };

struct EncodeOptions {
    PoolKind pool = PoolKind::Max;
    // When true, records with zero faces are encoded with an all-zero x4 and a
    // sixth face-count bucket at slot 0. Default keeps the strict 5-slot
    // encoding that rejects face-free records.
    bool allow_zero_faces = false;
};

/// Averaged click rate of one ad.
inline double compute_cr(std::uint64_t clicks, std::uint64_t impressions) {
    if (impressions == 0) throw user_error("compute_cr: impressions must be >= 1");
    if (clicks > impressions) throw user_error("compute_cr: clicks exceed impressions");
    return static_cast<double>(clicks) / static_cast<double>(impressions);
}

/// Element-wise pool of a non-empty list of same-shape latents.
inline Matrix pool_latents(const std::vector<Matrix>& latents, PoolKind kind = PoolKind::Max) {
    if (latents.empty()) throw user_error("pool_latents: empty latent list");
    for (const Matrix& z : latents)
        if (!z.same_shape(latents.front()))
            throw user_error("pool_latents: latent shapes differ");
    Matrix out = latents.front();
    if (kind == PoolKind::Max) {
        for (std::size_t k = 1; k < latents.size(); ++k)
            for (std::size_t i = 0; i < out.size(); ++i)
                out.data()[i] = std::max(out.data()[i], latents[k].data()[i]);
    } else {
        for (std::size_t k = 1; k < latents.size(); ++k)
            for (std::size_t i = 0; i < out.size(); ++i)
                out.data()[i] += latents[k].data()[i];
        const double inv = 1.0 / static_cast<double>(latents.size());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= inv;
    }
    return out;
}

inline std::size_t face_slot_count(const EncodeOptions& opts) {
    return opts.allow_zero_faces ? kMaxFaces + 1 : kMaxFaces;
}

/// Encode one record into the 6 predictor fields.
inline FieldBundle encode_fields(const AdRecord& rec, int category_count,
                                 const EncodeOptions& opts = {}) {
    const std::size_t faces = rec.face_latents.size();
    if (faces > kMaxFaces)
        throw user_error("encode_fields: record '" + rec.id + "' has more than 5 faces");
    if (faces == 0 && !opts.allow_zero_faces)
        throw user_error("encode_fields: record '" + rec.id + "' has no face");
    if (rec.category < 0 || rec.category >= category_count)
        throw user_error("encode_fields: category out of range for record '" + rec.id + "'");

    FieldBundle b;
    b.x1_category.assign(static_cast<std::size_t>(category_count), 0.0);
    b.x1_category[static_cast<std::size_t>(rec.category)] = 1.0;

    b.x2_class.assign(kClassLabelCount, 0.0);
    for (int c : rec.class_labels) {
        if (c < 0 || c >= kClassLabelCount)
            throw user_error("encode_fields: class label out of range for record '" + rec.id + "'");
        b.x2_class[static_cast<std::size_t>(c)] = 1.0;
    }

    b.x3_face_count.assign(face_slot_count(opts), 0.0);
    b.x3_face_count[opts.allow_zero_faces ? faces : faces - 1] = 1.0;

    if (faces == 0) {
        b.x4_face_latent.clear();  // caller supplies the expected width via zero-fill below
    } else {
        const Matrix pooled = pool_latents(rec.face_latents, opts.pool);
        b.x4_face_latent = pooled.flat();
    }
    b.x5_image_emb = rec.image_embedding;
    b.x6_text_emb = rec.text_embedding;
    return b;
}

/// Variant used when face-free records are allowed and the latent width must
/// still be uniform across the dataset.
inline FieldBundle encode_fields(const AdRecord& rec, int category_count,
                                 std::size_t latent_elems, const EncodeOptions& opts) {
    FieldBundle b = encode_fields(rec, category_count, opts);
    if (b.x4_face_latent.empty()) b.x4_face_latent.assign(latent_elems, 0.0);
    if (b.x4_face_latent.size() != latent_elems)
        throw user_error("encode_fields: latent width differs from dataset declaration");
    return b;
}

struct SplitFractions {
    double train = 0.64;
    double validation = 0.16;
    double test = 0.20;
};

/// Deterministic shuffle-split. Partition sizes are floor(fraction * N) with
/// every remainder record assigned to train.
inline DatasetSplit split_dataset(const std::vector<AdRecord>& records,
                                  const SplitFractions& fractions, std::uint64_t seed) {
    if (records.size() < 3) throw user_error("split_dataset: need at least 3 records");
    if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0)
        throw user_error("split_dataset: fractions must be positive");
    const double sum = fractions.train + fractions.validation + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw user_error("split_dataset: fractions must sum to 1");

    const std::size_t n = records.size();
    const auto part = [n](double f) {
        return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
    };
    const std::size_t n_val = part(fractions.validation);
    const std::size_t n_test = part(fractions.test);
    const std::size_t n_train = n - n_val - n_test;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    DatasetSplit split;
    split.seed = seed;
    split.train.reserve(n_train);
    split.validation.reserve(n_val);
    split.test.reserve(n_test);
    for (std::size_t i = 0; i < n; ++i) {
        const AdRecord& r = records[order[i]];
        if (i < n_train)
            split.train.push_back(r);
        else if (i < n_train + n_val)
            split.validation.push_back(r);
        else
            split.test.push_back(r);
    }
    return split;
}

// ---------------------------------------------------------------------------
// JSONL dataset schema: one AdRecord object per line, field names exactly as
// in the struct, latents as nested [d][l] arrays.
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const AdRecord& r) {
    j = nlohmann::json{
        {"id", r.id},
        {"category", r.category},
        {"class_labels", r.class_labels},
        {"face_latents", r.face_latents},
        {"image_embedding", r.image_embedding},
        {"text_embedding", r.text_embedding},
        {"impressions", r.impressions},
        {"clicks", r.clicks},
    };
}

inline void from_json(const nlohmann::json& j, AdRecord& r) {
    j.at("id").get_to(r.id);
    j.at("category").get_to(r.category);
    j.at("class_labels").get_to(r.class_labels);
    j.at("face_latents").get_to(r.face_latents);
    j.at("image_embedding").get_to(r.image_embedding);
    j.at("text_embedding").get_to(r.text_embedding);
    j.at("impressions").get_to(r.impressions);
    j.at("clicks").get_to(r.clicks);
}

inline void validate_record(const AdRecord& r, bool for_training = true) {
    if (for_training) {
        if (r.impressions == 0)
            throw user_error("record '" + r.id + "': impressions must be >= 1");
        if (r.clicks > r.impressions)
            throw user_error("record '" + r.id + "': clicks exceed impressions");
    }
    if (r.face_latents.size() > kMaxFaces)
        throw user_error("record '" + r.id + "': more than 5 faces");
    for (const Matrix& z : r.face_latents)
        if (!z.same_shape(r.face_latents.front()))
            throw user_error("record '" + r.id + "': latent shapes differ");
}

/// One record per line. An optional leading meta line ({"_meta": ...}) carries
/// provenance (config hash, seed) without changing the record schema.
inline void write_jsonl(const std::vector<AdRecord>& records, const std::string& path,
                        const nlohmann::json* meta = nullptr) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    if (meta) out << nlohmann::json{{"_meta", *meta}}.dump() << '\n';
    for (const AdRecord& r : records) {
        out << nlohmann::json(r).dump() << '\n';
    }
    if (!out) throw user_error("write failed: " + path);
}

inline std::vector<AdRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open dataset: " + path);
    std::vector<AdRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            if (j.is_object() && j.contains("_meta")) continue;
            records.push_back(j.get<AdRecord>());
        } catch (const nlohmann::json::exception& e) {
            throw user_error(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        validate_record(records.back());
    }
    return records;
}

/// Smallest category_count consistent with the data; used when no world
/// manifest declares the true count.
inline int infer_category_count(const std::vector<AdRecord>& records) {
    int max_cat = -1;
    for (const AdRecord& r : records) max_cat = std::max(max_cat, r.category);
    return max_cat + 1;
}

inline nlohmann::json split_manifest(const DatasetSplit& split, const SplitFractions& f) {
    const auto ids = [](const std::vector<AdRecord>& v) {
        std::vector<std::string> out;
        out.reserve(v.size());
        for (const AdRecord& r : v) out.push_back(r.id);
        return out;
    };
    return nlohmann::json{
        {"schema_version", "adsee-split/1"},
        {"seed", split.seed},
        {"fractions", {{"train", f.train}, {"validation", f.validation}, {"test", f.test}}},
        {"train", ids(split.train)},
        {"validation", ids(split.validation)},
        {"test", ids(split.test)},
    };
}

}  // namespace adsee
