#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/sefa.hpp"
#include "adsee/synthworld.hpp"

using namespace adsee;
using Catch::Matchers::WithinAbs;

namespace {

WorldConfig small_config(std::uint64_t seed = 99) {
    WorldConfig cfg;
    cfg.seed = seed;
    cfg.latent_rows = 2;
    cfg.latent_cols = 6;
    cfg.obs_rows = 8;
    cfg.text_dim = 4;
    cfg.category_count = 4;
    cfg.attract_weights = {0.35, -0.20, 0.12, 0.85};
    return cfg;
}

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "adsee_world_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("same seed builds an identical world") {
    const SynthWorld a = SynthWorld::build(small_config());
    const SynthWorld b = SynthWorld::build(small_config());
    CHECK(a.manifest() == b.manifest());
    CHECK(a.generator_weight() == b.generator_weight());

    const SynthWorld c = SynthWorld::build(small_config(100));
    CHECK(a.generator_weight() != c.generator_weight());
}

TEST_CASE("encode inverts generate") {
    const SynthWorld w = SynthWorld::build(small_config());
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix z(2, 6);
        for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.uniform(-2, 2);
        const std::vector<double> obs = w.generate(z);
        REQUIRE(obs.size() == 2 * 8);
        const Matrix back = w.encode(obs);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK_THAT(back.flat()[i], WithinAbs(z.flat()[i], 1e-6));
    }
}

TEST_CASE("the generator factorization recovers every planted axis") {
    const SynthWorld w = SynthWorld::build(small_config());
    const DirectionSet dirs = sefa(w.generator_weight(), 4);
    for (std::size_t p = 0; p < 4; ++p) {
        const double cs = cosine_similarity(dirs.directions[p], w.planted_axis(p));
        CHECK(std::abs(cs) >= 0.99);
    }
    // eigenvalues match the squared spectrum
    for (std::size_t p = 0; p < 4; ++p) {
        const double s = w.config().spectrum[p];
        CHECK_THAT(dirs.eigenvalues[p], WithinAbs(s * s, 1e-9));
    }
}

TEST_CASE("world configuration is validated") {
    WorldConfig cfg = small_config();
    cfg.spectrum = {3.0, 3.0, 2.0, 1.0, 0.5, 0.25};  // gap below 10%
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.spectrum = {1.0, 2.0, 0.5, 0.25, 0.1, 0.05};  // ascending start
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.spectrum = {3.0, -1.0, 0.5, 0.25, 0.1, 0.05};
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.spectrum = {3.0, 1.0};  // wrong length
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.obs_rows = 4;  // fewer observation channels than latent width
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.attract_weights = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};  // more than latent_cols
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);

    cfg = small_config();
    cfg.impressions_min = 100;
    cfg.impressions_max = 50;
    CHECK_THROWS_AS(SynthWorld::build(cfg), user_error);
}

TEST_CASE("default spectrum is geometric with ratio 0.85") {
    WorldConfig cfg;
    cfg.finalize();
    REQUIRE(cfg.spectrum.size() == cfg.latent_cols);
    CHECK(cfg.spectrum[0] == 3.0);
    for (std::size_t p = 1; p < cfg.spectrum.size(); ++p)
        CHECK_THAT(cfg.spectrum[p], WithinAbs(cfg.spectrum[p - 1] * 0.85, 1e-12));
    cfg.validate();  // satisfies its own gap rule
}

TEST_CASE("sampled ads satisfy the record invariants deterministically") {
    const SynthWorld w = SynthWorld::build(small_config());
    const std::vector<AdRecord> ads = w.sample_ads(200, 31337);
    REQUIRE(ads.size() == 200);

    std::set<std::string> ids;
    for (const AdRecord& r : ads) {
        ids.insert(r.id);
        validate_record(r, w.config().category_count);
        CHECK(r.clicks <= r.impressions);
        CHECK(r.impressions >= w.config().impressions_min);
        CHECK(r.impressions <= w.config().impressions_max);
        CHECK(r.face_latents.size() >= 1);
        CHECK(r.face_latents.size() <= kMaxFaces);
        CHECK(r.image_embedding.size() == w.config().obs_rows);
        CHECK(r.text_embedding.size() == w.config().text_dim);
        // linked image embedding: recomputing from the latents reproduces it
        CHECK(r.image_embedding == w.image_embedding(r.face_latents));
    }
    CHECK(ids.size() == 200);

    const std::vector<AdRecord> again = w.sample_ads(200, 31337);
    for (std::size_t i = 0; i < 200; ++i) {
        CHECK(nlohmann::json(again[i]) == nlohmann::json(ads[i]));
    }
    const std::vector<AdRecord> other = w.sample_ads(200, 31338);
    CHECK(nlohmann::json(other[0]) != nlohmann::json(ads[0]));
}

TEST_CASE("every face count appears in a large sample") {
    const SynthWorld w = SynthWorld::build(small_config());
    const std::vector<AdRecord> ads = w.sample_ads(10000, 2222);
    std::set<std::size_t> counts;
    for (const AdRecord& r : ads) counts.insert(r.face_latents.size());
    CHECK(counts == std::set<std::size_t>{1, 2, 3, 4, 5});
}

TEST_CASE("noiseless sampling concentrates on the true click rate") {
    WorldConfig cfg = small_config(424242);
    cfg.noise_level = 0.0;
    cfg.impressions_min = 1000000;
    cfg.impressions_max = 1000000;
    const SynthWorld w = SynthWorld::build(cfg);
    const std::vector<AdRecord> ads = w.sample_ads(10, 101);
    for (const AdRecord& r : ads) {
        const double empirical =
            static_cast<double>(r.clicks) / static_cast<double>(r.impressions);
        const double truth = w.true_cr(r);
        CHECK(std::abs(empirical - truth) / truth <= 0.01);
    }
}

TEST_CASE("the attractiveness oracle is monotone along each planted axis") {
    const SynthWorld w = SynthWorld::build(small_config());
    AdRecord base;
    base.id = "probe";
    base.category = 0;
    base.class_labels = {1};
    base.face_latents = {Matrix(2, 6)};
    base.image_embedding.assign(8, 0.0);
    base.text_embedding.assign(4, 0.0);
    base.impressions = 1000;
    base.clicks = 10;

    for (std::size_t p = 0; p < w.config().attract_weights.size(); ++p) {
        const std::vector<double> axis = w.planted_axis(p);
        const double sign = w.config().attract_weights[p] > 0 ? 1.0 : -1.0;
        double prev = -1e300;
        for (const double t : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
            AdRecord probe = base;
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t c = 0; c < 6; ++c)
                    probe.face_latents[0](r, c) = sign * t * axis[c];
            const double logit = w.true_logit(probe);
            CHECK(logit > prev);
            prev = logit;
        }
    }
}

TEST_CASE("the dominant axis carries the largest attractiveness weight") {
    const SynthWorld small = SynthWorld::build(small_config());
    CHECK(small.dominant_axis() == 3);  // weight 0.85

    WorldConfig cfg;  // stock configuration
    cfg.finalize();
    const SynthWorld stock = SynthWorld::build(cfg);
    CHECK(stock.dominant_axis() == 3);
}

TEST_CASE("image embedding averages generated observations over faces and rows") {
    const SynthWorld w = SynthWorld::build(small_config());
    Rng rng(5);
    Matrix z(2, 6);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.uniform(-1, 1);

    const std::vector<double> obs = w.generate(z);
    const std::vector<double> emb = w.image_embedding({z});
    REQUIRE(emb.size() == 8);
    for (std::size_t o = 0; o < 8; ++o) {
        const double expected = (obs[o] + obs[8 + o]) / 2.0;
        CHECK_THAT(emb[o], WithinAbs(expected, 1e-12));
    }

    const ImageEmbedFn fn = w.image_embed_fn();
    CHECK(fn({z}) == emb);
}

TEST_CASE("world manifest round trips through disk") {
    const SynthWorld w = SynthWorld::build(small_config());
    const std::string path = temp_path("world.json");
    w.save(path);
    const SynthWorld back = SynthWorld::load(path);
    CHECK(back.manifest() == w.manifest());

    Rng rng(6);
    Matrix z(2, 6);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = rng.uniform(-1, 1);
    CHECK(back.generate(z) == w.generate(z));

    const AdRecord probe = w.sample_ads(1, 9)[0];
    CHECK(back.true_cr(probe) == w.true_cr(probe));

    SECTION("schema and shape violations are rejected") {
        nlohmann::json j = w.manifest();
        j["schema_version"] = "adsee-world/9";
        CHECK_THROWS_AS(SynthWorld::from_manifest(j), user_error);

        j = w.manifest();
        j["category_offsets"].erase(0);
        CHECK_THROWS_AS(SynthWorld::from_manifest(j), user_error);

        j = w.manifest();
        j["generator_weight"].erase(0);
        CHECK_THROWS_AS(SynthWorld::from_manifest(j), user_error);

        CHECK_THROWS_AS(SynthWorld::load(temp_path("missing_world.json")), user_error);
    }
}
