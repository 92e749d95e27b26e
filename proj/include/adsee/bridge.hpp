#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "adsee/editor.hpp"
#include "adsee/matrix.hpp"
#include "json.hpp"

namespace adsee {

// ---------------------------------------------------------------------------
// Extraction manifest: the hand-off format for a real detection/alignment/
// inversion pipeline. Shape-checked on import; ads outside the editable
// face-count bounds are skipped and reported, not fatal.
// ---------------------------------------------------------------------------

struct RejectedAd {
    std::string id;
    std::string reason;
};

struct ImportResult {
    std::vector<AdRecord> records;
    std::vector<RejectedAd> rejected;
};

inline ImportResult import_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open extraction manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw user_error("extraction manifest parse error: " + std::string(e.what()));
    }
    if (j.value("schema_version", "") != "adsee-extraction/1")
        throw user_error("extraction manifest: unsupported schema_version");
    if (!j.contains("latent_shape") || !j.at("latent_shape").is_array() ||
        j.at("latent_shape").size() != 2)
        throw user_error("extraction manifest: latent_shape [d,l] declaration required");
    const auto d = j.at("latent_shape")[0].get<std::size_t>();
    const auto l = j.at("latent_shape")[1].get<std::size_t>();

    ImportResult out;
    for (const nlohmann::json& ad : j.at("ads")) {
        const std::string id = ad.value("id", "<missing id>");
        try {
            AdRecord rec;
            rec.id = id;
            rec.category = ad.at("category").get<int>();
            for (const nlohmann::json& inst : ad.at("instances"))
                rec.class_labels.push_back(inst.at("class_id").get<int>());
            const auto person_crops = ad.at("person_crops").get<std::size_t>();
            const nlohmann::json& faces = ad.at("faces");
            if (faces.size() > person_crops)
                throw user_error("face count exceeds person crop count");
            if (faces.empty()) throw user_error("no aligned face");
            if (faces.size() > kMaxFaces) throw user_error("more than 5 aligned faces");
            for (const nlohmann::json& f : faces) {
                Matrix z = f.at("latent").get<Matrix>();
                if (z.rows() != d || z.cols() != l)
                    throw user_error("latent shape does not match the declared [d,l]");
                rec.face_latents.push_back(std::move(z));
            }
            ad.at("image_embedding").get_to(rec.image_embedding);
            ad.at("text_embedding").get_to(rec.text_embedding);
            rec.impressions = ad.value("impressions", std::uint64_t{0});
            rec.clicks = ad.value("clicks", std::uint64_t{0});
            if (rec.clicks > rec.impressions) throw user_error("clicks exceed impressions");
            out.records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            out.rejected.push_back({id, std::string("malformed entry: ") + e.what()});
        } catch (const user_error& e) {
            out.rejected.push_back({id, e.what()});
        }
    }
    return out;
}

/// Writes records in the extraction-manifest form so a synthetic dataset can
/// stand in for a real detection pipeline. import_manifest(export_manifest(r))
/// gives back the in-scope fields unchanged; person_crops is emitted as the
/// face count since the synthetic pipeline keeps no crop surplus.
inline nlohmann::json manifest_json(const std::vector<AdRecord>& records) {
    if (records.empty()) throw user_error("export_manifest: no records");
    if (records.front().face_latents.empty())
        throw user_error("export_manifest: record '" + records.front().id + "' has no face");
    const std::size_t d = records.front().face_latents.front().rows();
    const std::size_t l = records.front().face_latents.front().cols();
    nlohmann::json ads = nlohmann::json::array();
    for (const AdRecord& rec : records) {
        if (rec.face_latents.empty())
            throw user_error("export_manifest: record '" + rec.id + "' has no face");
        nlohmann::json instances = nlohmann::json::array();
        for (int c : rec.class_labels) instances.push_back({{"class_id", c}});
        nlohmann::json faces = nlohmann::json::array();
        for (const Matrix& z : rec.face_latents) {
            if (z.rows() != d || z.cols() != l)
                throw user_error("export_manifest: record '" + rec.id +
                                 "' latent shape differs from the first record");
            faces.push_back({{"latent", z}});
        }
        ads.push_back({
            {"id", rec.id},
            {"category", rec.category},
            {"instances", instances},
            {"person_crops", rec.face_latents.size()},
            {"faces", faces},
            {"image_embedding", rec.image_embedding},
            {"text_embedding", rec.text_embedding},
            {"impressions", rec.impressions},
            {"clicks", rec.clicks},
        });
    }
    return nlohmann::json{
        {"schema_version", "adsee-extraction/1"},
        {"latent_shape", {d, l}},
        {"ads", ads},
    };
}

inline void export_manifest(const std::vector<AdRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    out << manifest_json(records).dump(2) << '\n';
    if (!out) throw user_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Edit export: everything an external renderer needs to perform the pixel
// face swap — per-face edited latents, the intensity genotype, and the
// predicted gain. Canonical key order keeps re-serialization stable.
// ---------------------------------------------------------------------------

inline nlohmann::json edits_json(const std::vector<EditedRecord>& edits,
                                 const std::string& config_hash, std::uint64_t seed) {
    nlohmann::json arr = nlohmann::json::array();
    for (const EditedRecord& er : edits) {
        arr.push_back({
            {"id", er.base.id},
            {"intensities", er.intensities},
            {"edited_latents", er.edited_latents},
            {"predicted_cr_original", er.predicted_cr_original},
            {"predicted_cr_edited", er.predicted_cr_edited},
            {"delta_cr", er.delta_cr},
        });
    }
    return nlohmann::json{
        {"schema_version", "adsee-edits/1"},
        {"config_hash", config_hash},
        {"seed", seed},
        {"edits", arr},
    };
}

inline void export_edits(const std::vector<EditedRecord>& edits, const std::string& path,
                         const std::string& config_hash = "", std::uint64_t seed = 0) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    out << edits_json(edits, config_hash, seed).dump(2) << '\n';
    if (!out) throw user_error("write failed: " + path);
}

/// Re-import of an edit export. Base records carry only the id; callers that
/// need full records join against the dataset by id.
inline std::vector<EditedRecord> import_edits(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open edit export: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw user_error("edit export parse error: " + std::string(e.what()));
    }
    if (j.value("schema_version", "") != "adsee-edits/1")
        throw user_error("edit export: unsupported schema_version");
    std::vector<EditedRecord> out;
    for (const nlohmann::json& e : j.at("edits")) {
        EditedRecord er;
        er.base.id = e.at("id").get<std::string>();
        e.at("intensities").get_to(er.intensities);
        e.at("edited_latents").get_to(er.edited_latents);
        e.at("predicted_cr_original").get_to(er.predicted_cr_original);
        e.at("predicted_cr_edited").get_to(er.predicted_cr_edited);
        e.at("delta_cr").get_to(er.delta_cr);
        out.push_back(std::move(er));
    }
    return out;
}

}  // namespace adsee
