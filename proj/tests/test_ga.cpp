#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/ga.hpp"

using namespace adsee;
using Catch::Matchers::WithinAbs;

namespace {

double quadratic(const Genotype& g, const std::vector<double>& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = g.flat()[i] - target[i];
        acc -= d * d;
    }
    return acc;
}

}  // namespace

TEST_CASE("gene snapping lands exactly on the grid") {
    const GaConfig cfg;
    CHECK(snap_gene(0.0, cfg) == 0.0);
    CHECK(snap_gene(0.24, cfg) == 0.2);
    CHECK(snap_gene(0.26, cfg) == 0.3);
    CHECK(snap_gene(-0.24, cfg) == -0.2);
    CHECK(snap_gene(2.97, cfg) == 3.0);
    CHECK(snap_gene(100.0, cfg) == 3.0);
    CHECK(snap_gene(-100.0, cfg) == -3.0);
    CHECK(snap_gene(3.0, cfg) == 3.0);
    CHECK(snap_gene(-3.0, cfg) == -3.0);
    CHECK_THROWS_AS(snap_gene(std::nan(""), cfg), user_error);

    // every representable grid point is a fixed point
    for (int k = -30; k <= 30; ++k) {
        const double v = static_cast<double>(k) / 10.0;
        CHECK(snap_gene(v, cfg) == v);
        CHECK(on_gene_grid(v, cfg));
    }
    // accumulation artifacts are off-grid until snapped
    const double drift = 0.1 + 0.1 + 0.1;  // 0.30000000000000004
    CHECK_FALSE(on_gene_grid(drift, cfg));
    CHECK(on_gene_grid(snap_gene(drift, cfg), cfg));
}

TEST_CASE("snapping honors asymmetric bounds") {
    GaConfig cfg;
    cfg.gene_min = -0.35;
    cfg.gene_max = 0.25;
    CHECK(snap_gene(5.0, cfg) == 0.2);    // floor(2.5 + eps) = 2
    CHECK(snap_gene(-5.0, cfg) == -0.3);  // ceil(-3.5 - eps) = -3
}

TEST_CASE("random genotypes stay within the init range and on the grid") {
    const GaConfig cfg;
    Rng rng(41);
    for (int rep = 0; rep < 50; ++rep) {
        const Genotype g = random_genotype(2, 3, cfg, rng);
        for (double v : g.flat()) {
            CHECK(on_gene_grid(v, cfg));
            CHECK(v >= cfg.init_min - 0.05);
            CHECK(v <= cfg.init_max + 0.05);
        }
    }
}

TEST_CASE("rank selection with k equal to population size returns everyone") {
    Rng rng(1);
    const std::vector<double> fitness = {0.3, -1.0, 2.0, 0.0, 0.5};
    const std::vector<std::size_t> sel = rank_select(fitness, 5, rng);
    CHECK(std::set<std::size_t>(sel.begin(), sel.end()) ==
          std::set<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(rank_select(fitness, 6, rng), user_error);
}

TEST_CASE("rank selection frequency follows the rank weights") {
    const std::vector<double> fitness = {0.1, 0.2, 0.3, 0.4};
    Rng rng(55);
    int best_hits = 0, worst_hits = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const std::vector<std::size_t> sel = rank_select(fitness, 1, rng);
        REQUIRE(sel.size() == 1);
        if (sel[0] == 3) ++best_hits;
        if (sel[0] == 0) ++worst_hits;
    }
    // weights 1..4 over total 10
    CHECK_THAT(best_hits / double(trials), WithinAbs(0.4, 0.02));
    CHECK_THAT(worst_hits / double(trials), WithinAbs(0.1, 0.02));
}

TEST_CASE("fitness ties rank earlier genotypes higher") {
    const std::vector<double> fitness = {5.0, 5.0, 5.0, 5.0};
    Rng rng(56);
    int first_hits = 0, last_hits = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const std::vector<std::size_t> sel = rank_select(fitness, 1, rng);
        if (sel[0] == 0) ++first_hits;
        if (sel[0] == 3) ++last_hits;
    }
    CHECK_THAT(first_hits / double(trials), WithinAbs(0.4, 0.02));
    CHECK_THAT(last_hits / double(trials), WithinAbs(0.1, 0.02));
}

TEST_CASE("uniform crossover copies each gene from one of the parents") {
    Rng rng(57);
    const GaConfig cfg;
    Genotype a(2, 2), b(2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        a.data()[i] = 0.1 * static_cast<double>(i + 1);
        b.data()[i] = -0.1 * static_cast<double>(i + 1);
    }
    SECTION("identical parents breed identical offspring") {
        const Genotype child = uniform_crossover(a, a, rng);
        CHECK(child == a);
    }
    SECTION("every gene comes from a parent, roughly evenly") {
        std::size_t from_b = 0, total = 0;
        for (int t = 0; t < 2500; ++t) {
            const Genotype child = uniform_crossover(a, b, rng);
            for (std::size_t i = 0; i < 4; ++i) {
                const double v = child.flat()[i];
                const bool is_a = v == a.flat()[i];
                const bool is_b = v == b.flat()[i];
                CHECK((is_a || is_b));
                from_b += is_b ? 1 : 0;
                ++total;
            }
        }
        CHECK_THAT(from_b / double(total), WithinAbs(0.5, 0.02));
    }
    SECTION("shape mismatch is rejected") {
        CHECK_THROWS_AS(uniform_crossover(a, Genotype(1, 4), rng), user_error);
    }
}

TEST_CASE("mutation perturbs at most one gene by one grid step") {
    const GaConfig cfg;
    Rng rng(58);
    for (int rep = 0; rep < 200; ++rep) {
        Genotype g = random_genotype(1, 5, cfg, rng);
        const Genotype before = g;
        mutate_one_gene(g, cfg, rng);
        std::size_t diffs = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(on_gene_grid(g.flat()[i], cfg));
            if (g.flat()[i] != before.flat()[i]) {
                ++diffs;
                CHECK_THAT(std::abs(g.flat()[i] - before.flat()[i]), WithinAbs(0.1, 1e-12));
            }
        }
        CHECK(diffs <= 1);
    }
}

TEST_CASE("evolution solves the quadratic fixture with the default settings") {
    const std::vector<double> target = {0.7, -0.5, 0.3};
    for (const std::uint64_t seed : {3ULL, 5ULL, 11ULL}) {
        GaConfig cfg;
        cfg.seed = seed;
        const auto fit = [&](const Genotype& g) { return quadratic(g, target); };
        const EvolveResult res = evolve(1, 3, fit, cfg);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::abs(res.best.flat()[i] - target[i]) <= 0.2);
        CHECK(res.best_fitness >= -0.05);
    }
}

TEST_CASE("best fitness history never regresses") {
    const std::vector<double> target = {0.2, -0.9, 0.5, 0.8};
    for (const std::uint64_t seed : {1ULL, 2ULL, 9ULL}) {
        GaConfig cfg;
        cfg.seed = seed;
        const auto fit = [&](const Genotype& g) { return quadratic(g, target); };
        const EvolveResult res = evolve(2, 2, fit, cfg);
        REQUIRE(res.history.size() == cfg.num_generations);
        for (std::size_t g = 1; g < res.history.size(); ++g)
            CHECK(res.history[g].best_fitness >= res.history[g - 1].best_fitness);
        CHECK(res.best_fitness == res.history.back().best_fitness);
        CHECK(res.history.front().generation == 1);
        CHECK(res.history.back().generation == cfg.num_generations);
    }
}

TEST_CASE("every evaluated genotype stays on the grid and population size holds") {
    GaConfig cfg;
    cfg.seed = 77;
    std::size_t calls = 0;
    bool all_on_grid = true;
    bool all_in_bounds = true;
    const auto fit = [&](const Genotype& g) {
        ++calls;
        for (double v : g.flat()) {
            all_on_grid = all_on_grid && on_gene_grid(v, cfg);
            all_in_bounds = all_in_bounds && v >= cfg.gene_min && v <= cfg.gene_max;
        }
        return -std::abs(g.flat()[0] - 0.4);
    };
    evolve(1, 4, fit, cfg);
    CHECK(calls == cfg.population_size * cfg.num_generations);
    CHECK(all_on_grid);
    CHECK(all_in_bounds);
}

TEST_CASE("the zero genotype seeds generation zero and floors the result") {
    GaConfig cfg;
    cfg.seed = 5;
    // fitness is maximal exactly at the all-zero genotype
    const std::vector<double> target = {0.0, 0.0};
    const auto fit = [&](const Genotype& g) { return quadratic(g, target); };
    const EvolveResult res = evolve(1, 2, fit, cfg);
    CHECK(res.best_fitness == 0.0);
    CHECK(res.best == Genotype(1, 2));

    // with an off-zero optimum the zero fitness is still a floor
    const std::vector<double> off = {0.6, -0.2};
    const auto fit2 = [&](const Genotype& g) { return quadratic(g, off); };
    cfg.seed = 6;
    const EvolveResult res2 = evolve(1, 2, fit2, cfg);
    CHECK(res2.best_fitness >= quadratic(Genotype(1, 2), off));

    cfg.zero_seed = false;
    cfg.seed = 6;
    const EvolveResult res3 = evolve(1, 2, fit2, cfg);
    CHECK(res3.best_fitness >= res3.history.front().best_fitness);
}

TEST_CASE("identical seeds give identical traces and results") {
    const std::vector<double> target = {0.1, 0.9, -0.3};
    GaConfig cfg;
    cfg.seed = 31;
    const auto fit = [&](const Genotype& g) { return quadratic(g, target); };
    const EvolveResult a = evolve(1, 3, fit, cfg);
    const EvolveResult b = evolve(1, 3, fit, cfg);
    CHECK(a.best == b.best);
    CHECK(a.best_fitness == b.best_fitness);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].best_fitness == b.history[i].best_fitness);
        CHECK(a.history[i].mean_fitness == b.history[i].mean_fitness);
    }

    cfg.seed = 32;
    const EvolveResult c = evolve(1, 3, fit, cfg);
    CHECK(a.history.back().mean_fitness != c.history.back().mean_fitness);
}

TEST_CASE("worker count never changes the evolution trace") {
    const std::vector<double> target = {-0.4, 0.2, 0.8, 0.5};
    GaConfig cfg;
    cfg.seed = 13;
    const auto fit = [&](const Genotype& g) { return quadratic(g, target); };
    cfg.threads = 1;
    const EvolveResult serial = evolve(2, 2, fit, cfg);
    cfg.threads = 3;
    const EvolveResult parallel = evolve(2, 2, fit, cfg);
    CHECK(serial.best == parallel.best);
    CHECK(serial.best_fitness == parallel.best_fitness);
    REQUIRE(serial.history.size() == parallel.history.size());
    for (std::size_t i = 0; i < serial.history.size(); ++i) {
        CHECK(serial.history[i].best_fitness == parallel.history[i].best_fitness);
        CHECK(serial.history[i].mean_fitness == parallel.history[i].mean_fitness);
    }
}

TEST_CASE("trace csv is stable and parseable") {
    const std::vector<GenerationStats> history = {{1, -0.5, -1.25}, {2, -0.25, -0.75}};
    const auto dir = std::filesystem::temp_directory_path() / "adsee_ga_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "trace.csv").string();
    write_trace_csv(history, path);

    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() ==
          "generation,best_fitness,mean_fitness\n"
          "1,-0.5,-1.25\n"
          "2,-0.25,-0.75\n");
}

TEST_CASE("config validation rejects inconsistent settings") {
    GaConfig cfg;
    cfg.num_parents = cfg.population_size;
    CHECK_THROWS_AS(cfg.validate(), user_error);
    cfg = GaConfig{};
    cfg.percent_mutation = 1.5;
    CHECK_THROWS_AS(cfg.validate(), user_error);
    cfg = GaConfig{};
    cfg.gene_step = 0.0;
    CHECK_THROWS_AS(cfg.validate(), user_error);
    cfg = GaConfig{};
    cfg.gene_min = 1.0;
    cfg.gene_max = -1.0;
    CHECK_THROWS_AS(cfg.validate(), user_error);
}

TEST_CASE("config json round trip excludes the worker count") {
    GaConfig cfg;
    cfg.population_size = 33;
    cfg.seed = 9;
    cfg.threads = 8;
    const nlohmann::json j = cfg;
    CHECK_FALSE(j.contains("threads"));
    const auto back = j.get<GaConfig>();
    CHECK(back.population_size == 33);
    CHECK(back.seed == 9);
    CHECK(back.threads == 1);  // default, not serialized
}
