#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adsee/bridge.hpp"
#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "adsee/editor.hpp"
#include "adsee/predictor.hpp"
#include "adsee/synthworld.hpp"

using namespace adsee;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "adsee_bridge_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json valid_ad(const std::string& id, std::size_t faces) {
    nlohmann::json f = nlohmann::json::array();
    for (std::size_t i = 0; i < faces; ++i) {
        Matrix z(2, 3);
        for (std::size_t k = 0; k < z.size(); ++k)
            z.data()[k] = 0.1 * static_cast<double>(i + k);
        f.push_back({{"latent", z}});
    }
    return nlohmann::json{
        {"id", id},
        {"category", 1},
        {"instances", {{{"class_id", 0}}, {{"class_id", 56}}}},
        {"person_crops", faces + 1},
        {"faces", f},
        {"image_embedding", {0.5, -0.5}},
        {"text_embedding", {0.1, 0.2, 0.3}},
        {"impressions", 4000},
        {"clicks", 150},
    };
}

nlohmann::json valid_manifest(std::vector<nlohmann::json> ads) {
    return nlohmann::json{
        {"schema_version", "adsee-extraction/1"},
        {"latent_shape", {2, 3}},
        {"ads", std::move(ads)},
    };
}

std::string write_json(const nlohmann::json& j, const std::string& name) {
    const std::string path = temp_path(name);
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    return path;
}

}  // namespace

TEST_CASE("a valid manifest imports every ad") {
    const std::string path =
        write_json(valid_manifest({valid_ad("a1", 1), valid_ad("a2", 3)}), "ok.json");
    const ImportResult res = import_manifest(path);
    REQUIRE(res.records.size() == 2);
    CHECK(res.rejected.empty());
    CHECK(res.records[0].id == "a1");
    CHECK(res.records[0].category == 1);
    CHECK(res.records[0].class_labels == std::vector<int>{0, 56});
    CHECK(res.records[0].face_latents.size() == 1);
    CHECK(res.records[1].face_latents.size() == 3);
    CHECK(res.records[0].face_latents[0].rows() == 2);
    CHECK(res.records[0].face_latents[0].cols() == 3);
    CHECK(res.records[0].impressions == 4000);
    CHECK(res.records[0].clicks == 150);
}

TEST_CASE("ads with more than five aligned faces are skipped and reported") {
    const std::string path =
        write_json(valid_manifest({valid_ad("ok", 2), valid_ad("crowded", 6)}), "six.json");
    const ImportResult res = import_manifest(path);
    REQUIRE(res.records.size() == 1);
    CHECK(res.records[0].id == "ok");
    REQUIRE(res.rejected.size() == 1);
    CHECK(res.rejected[0].id == "crowded");
    CHECK_THAT(res.rejected[0].reason, ContainsSubstring("more than 5"));
}

TEST_CASE("per-ad violations are reported without aborting the import") {
    nlohmann::json more_faces_than_crops = valid_ad("impossible", 2);
    more_faces_than_crops["person_crops"] = 1;

    nlohmann::json bad_shape = valid_ad("misshapen", 1);
    bad_shape["faces"][0]["latent"] = Matrix(2, 4);

    nlohmann::json clicky = valid_ad("clicky", 1);
    clicky["clicks"] = 5000;  // impressions stay 4000

    nlohmann::json faceless = valid_ad("faceless", 1);
    faceless["faces"] = nlohmann::json::array();

    nlohmann::json malformed = valid_ad("broken", 1);
    malformed.erase("category");

    const std::string path = write_json(
        valid_manifest(
            {more_faces_than_crops, bad_shape, clicky, faceless, malformed, valid_ad("fine", 1)}),
        "mixed.json");
    const ImportResult res = import_manifest(path);
    REQUIRE(res.records.size() == 1);
    CHECK(res.records[0].id == "fine");
    REQUIRE(res.rejected.size() == 5);
    CHECK(res.rejected[0].id == "impossible");
    CHECK_THAT(res.rejected[0].reason, ContainsSubstring("person crop"));
    CHECK(res.rejected[1].id == "misshapen");
    CHECK_THAT(res.rejected[1].reason, ContainsSubstring("latent shape"));
    CHECK(res.rejected[2].id == "clicky");
    CHECK_THAT(res.rejected[2].reason, ContainsSubstring("clicks exceed"));
    CHECK(res.rejected[3].id == "faceless");
    CHECK_THAT(res.rejected[3].reason, ContainsSubstring("no aligned face"));
    CHECK(res.rejected[4].id == "broken");
    CHECK_THAT(res.rejected[4].reason, ContainsSubstring("malformed entry"));
}

TEST_CASE("manifest-level problems are fatal") {
    nlohmann::json wrong_version = valid_manifest({valid_ad("a", 1)});
    wrong_version["schema_version"] = "adsee-extraction/2";
    CHECK_THROWS_AS(import_manifest(write_json(wrong_version, "v2.json")), user_error);

    nlohmann::json no_shape = valid_manifest({valid_ad("a", 1)});
    no_shape.erase("latent_shape");
    CHECK_THROWS_AS(import_manifest(write_json(no_shape, "noshape.json")), user_error);

    const std::string garbled = temp_path("garbled.json");
    std::ofstream(garbled) << "{not json";
    CHECK_THROWS_WITH(import_manifest(garbled), ContainsSubstring("parse error"));

    CHECK_THROWS_AS(import_manifest(temp_path("missing.json")), user_error);
}

TEST_CASE("export then import of a synthetic dataset is lossless") {
    WorldConfig cfg;
    cfg.seed = 12;
    cfg.latent_rows = 2;
    cfg.latent_cols = 4;
    cfg.obs_rows = 5;
    cfg.text_dim = 3;
    cfg.category_count = 3;
    cfg.attract_weights = {0.4, -0.3};
    const SynthWorld world = SynthWorld::build(cfg);
    const std::vector<AdRecord> records = world.sample_ads(20, 77);

    const std::string path = temp_path("synth_manifest.json");
    export_manifest(records, path);
    const ImportResult res = import_manifest(path);
    CHECK(res.rejected.empty());
    REQUIRE(res.records.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        CHECK(nlohmann::json(res.records[i]) == nlohmann::json(records[i]));

    // byte-level stability: re-exporting the imported records reproduces the file
    const std::string again = temp_path("synth_manifest_2.json");
    export_manifest(res.records, again);
    CHECK(slurp(again) == slurp(path));
}

TEST_CASE("export_manifest validates its input") {
    CHECK_THROWS_AS(export_manifest({}, temp_path("empty_manifest.json")), user_error);
    AdRecord faceless;
    faceless.id = "x";
    faceless.impressions = 1;
    CHECK_THROWS_AS(export_manifest({faceless}, temp_path("faceless_manifest.json")),
                    user_error);
}

TEST_CASE("an empty edit export is valid and round trips") {
    const std::string path = temp_path("empty_edits.json");
    export_edits({}, path, "deadbeef", 5);
    const std::vector<EditedRecord> back = import_edits(path);
    CHECK(back.empty());
    const nlohmann::json j = nlohmann::json::parse(slurp(path));
    CHECK(j.at("schema_version") == "adsee-edits/1");
    CHECK(j.at("config_hash") == "deadbeef");
    CHECK(j.at("seed") == 5);
}

TEST_CASE("edit exports re-serialize byte-identically") {
    AdRecord rec;
    rec.id = "ad-9";
    rec.category = 0;
    rec.class_labels = {4};
    rec.face_latents = {Matrix(1, 3), Matrix(1, 3)};
    rec.face_latents[0](0, 1) = 0.25;
    rec.image_embedding = {0.1};
    rec.text_embedding = {0.2};
    rec.impressions = 900;
    rec.clicks = 80;

    DirectionSet dirs;
    dirs.directions = {{1.0, 0.0, 0.0}};
    dirs.eigenvalues = {1.0};
    Matrix alpha(2, 1);
    alpha(0, 0) = 0.3;
    alpha(1, 0) = -0.6;
    EditedRecord er = apply_edit(rec, alpha, dirs);
    er.predicted_cr_original = 0.11;
    er.predicted_cr_edited = 0.13;
    er.delta_cr = 0.02;

    const std::string a = temp_path("edits_a.json");
    export_edits({er}, a, "cafe", 1);
    const std::vector<EditedRecord> back = import_edits(a);
    REQUIRE(back.size() == 1);
    const std::string b = temp_path("edits_b.json");
    export_edits(back, b, "cafe", 1);
    CHECK(slurp(a) == slurp(b));

    CHECK(back[0].base.id == "ad-9");
    CHECK(back[0].intensities == alpha);
    CHECK(back[0].edited_latents == er.edited_latents);
    CHECK(back[0].delta_cr == 0.02);
}

TEST_CASE("re-imported edits reproduce the delta scores exactly") {
    WorldConfig cfg;
    cfg.seed = 21;
    cfg.latent_rows = 2;
    cfg.latent_cols = 4;
    cfg.obs_rows = 5;
    cfg.text_dim = 3;
    cfg.category_count = 3;
    cfg.attract_weights = {0.4, -0.3};
    const SynthWorld world = SynthWorld::build(cfg);
    const std::vector<AdRecord> records = world.sample_ads(4, 15);

    PredictorDims dims;
    dims.category_count = 3;
    dims.latent_elems = 8;
    dims.image_dim = 5;
    dims.text_dim = 3;
    dims.embed_width = 8;
    dims.layers = 1;
    dims.heads = 2;
    const PredictorModel model(dims, 321);
    const EncodeOptions opts = encode_options(dims);
    const DirectionSet dirs = sefa(world.generator_weight(), 2);

    Rng rng(77);
    std::vector<EditedRecord> edits;
    for (const AdRecord& rec : records) {
        Matrix alpha(rec.face_latents.size(), 2);
        for (std::size_t i = 0; i < alpha.size(); ++i)
            alpha.data()[i] = 0.1 * static_cast<double>(rng.index(21)) - 1.0;
        EditedRecord er = apply_edit(rec, alpha, dirs);
        score_edit(er, model, opts);
        edits.push_back(std::move(er));
    }

    const std::string path = temp_path("rescore_edits.json");
    export_edits(edits, path, "hash", 2);
    const std::vector<EditedRecord> back = import_edits(path);
    REQUIRE(back.size() == edits.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        // join against the dataset by id, then re-score the imported latents
        EditedRecord joined = back[i];
        joined.base = records[i];
        REQUIRE(joined.base.id == back[i].base.id);
        const double delta = score_edit(joined, model, opts);
        CHECK(delta == edits[i].delta_cr);
        CHECK(joined.predicted_cr_original == edits[i].predicted_cr_original);
        CHECK(joined.predicted_cr_edited == edits[i].predicted_cr_edited);
    }
}

TEST_CASE("edit import validates the schema") {
    nlohmann::json j{{"schema_version", "adsee-edits/0"}, {"edits", nlohmann::json::array()}};
    CHECK_THROWS_AS(import_edits(write_json(j, "bad_edits.json")), user_error);
    CHECK_THROWS_AS(import_edits(temp_path("no_such_edits.json")), user_error);
}
