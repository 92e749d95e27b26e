#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "adsee/matrix.hpp"
#include "adsee/predictor.hpp"
#include "adsee/sefa.hpp"
#include "json.hpp"

namespace adsee {

/// Recomputes a whole-image embedding from a record's face latents. Supplied
/// by the synthetic world (where the linkage is defined); when absent, edits
/// carry the original embedding over unchanged.
using ImageEmbedFn = std::function<std::vector<double>(const std::vector<Matrix>&)>;

struct EditedRecord {
    AdRecord base;
    std::vector<Matrix> edited_latents;  // one per face
    Matrix intensities;                  // M x q
    double predicted_cr_original = 0.0;
    double predicted_cr_edited = 0.0;
    double delta_cr = 0.0;
};

/// z' = z + broadcast(sum_p alpha_p * n_p): the combined direction vector is
/// added to every one of the d rows.
inline Matrix edit_latent(const Matrix& z, std::span<const double> alpha,
                          const DirectionSet& dirs) {
    if (alpha.size() != dirs.count())
        throw user_error("edit_latent: intensity count does not match direction count");
    if (dirs.dim() != z.cols())
        throw user_error("edit_latent: direction length does not match latent width");
    for (double a : alpha)
        if (!std::isfinite(a)) throw user_error("edit_latent: non-finite intensity");

    std::vector<double> combined(z.cols(), 0.0);
    for (std::size_t p = 0; p < dirs.count(); ++p) {
        const double a = alpha[p];
        if (a == 0.0) continue;
        const std::vector<double>& n = dirs.directions[p];
        for (std::size_t j = 0; j < combined.size(); ++j) combined[j] += a * n[j];
    }
    Matrix out = z;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.data() + i * out.cols();
        for (std::size_t j = 0; j < out.cols(); ++j) row[j] += combined[j];
    }
    return out;
}

/// Edits each face latent with its own intensity row and rebuilds the record.
/// The edited latents replace the originals directly; the image embedding is
/// recomputed through the world linkage when one is supplied.
inline EditedRecord apply_edit(const AdRecord& record, const Matrix& intensities,
                               const DirectionSet& dirs) {
    const std::size_t faces = record.face_latents.size();
    if (faces == 0) throw user_error("apply_edit: record '" + record.id + "' has no face");
    if (intensities.rows() != faces)
        throw user_error("apply_edit: genotype rows do not match the record's face count");
    if (intensities.cols() != dirs.count())
        throw user_error("apply_edit: genotype columns do not match the direction count");

    EditedRecord out;
    out.base = record;
    out.intensities = intensities;
    out.edited_latents.reserve(faces);
    for (std::size_t m = 0; m < faces; ++m)
        out.edited_latents.push_back(edit_latent(record.face_latents[m], intensities.row(m), dirs));
    return out;
}

/// The edited record as a plain AdRecord (latents swapped in, embedding
/// refreshed through the linkage when present).
inline AdRecord edited_as_record(const EditedRecord& er,
                                 const ImageEmbedFn* image_embed = nullptr) {
    AdRecord rec = er.base;
    rec.face_latents = er.edited_latents;
    if (image_embed) rec.image_embedding = (*image_embed)(rec.face_latents);
    return rec;
}

inline double predict_record_cr(const AdRecord& rec, const PredictorModel& model,
                                const EncodeOptions& opts) {
    const FieldBundle b = encode_fields(rec, model.dims.category_count,
                                        static_cast<std::size_t>(model.dims.latent_elems), opts);
    return model.predict_cr(b);
}

/// Fills both predictions (same de-standardization for both) and the delta.
inline double score_edit(EditedRecord& er, const PredictorModel& model,
                         const EncodeOptions& opts, const ImageEmbedFn* image_embed = nullptr) {
    er.predicted_cr_original = predict_record_cr(er.base, model, opts);
    er.predicted_cr_edited = predict_record_cr(edited_as_record(er, image_embed), model, opts);
    er.delta_cr = er.predicted_cr_edited - er.predicted_cr_original;
    return er.delta_cr;
}

/// Fitness of an intensity genotype: the de-standardized predicted click rate
/// of the edited record. Read-only on all inputs; safe to call concurrently.
inline double edit_fitness(const AdRecord& record, const Matrix& intensities,
                           const DirectionSet& dirs, const PredictorModel& model,
                           const EncodeOptions& opts,
                           const ImageEmbedFn* image_embed = nullptr) {
    const EditedRecord er = apply_edit(record, intensities, dirs);
    return predict_record_cr(edited_as_record(er, image_embed), model, opts);
}

inline void to_json(nlohmann::json& j, const EditedRecord& er) {
    j = nlohmann::json{
        {"id", er.base.id},
        {"intensities", er.intensities},
        {"predicted_cr_original", er.predicted_cr_original},
        {"predicted_cr_edited", er.predicted_cr_edited},
        {"delta_cr", er.delta_cr},
    };
}

}  // namespace adsee
