#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/matrix.hpp"
#include "json.hpp"

namespace adsee {

/// An edit-intensity genotype: one row of q intensities per face.
using Genotype = Matrix;

struct GaConfig {
    std::size_t population_size = 75;
    std::size_t num_generations = 20;
    std::size_t num_parents = 10;
    double percent_mutation = 0.20;
    double gene_min = -3.0;
    double gene_max = 3.0;
    double gene_step = 0.1;
    double init_min = -1.0;
    double init_max = 1.0;
    double mutation_min = -0.1;
    double mutation_max = 0.1;
    std::uint64_t seed = 0;
    bool zero_seed = true;       // plant the all-zero genotype in generation 0
    bool mutate_parents = false; // widen the mutation pool to the whole next population
    std::size_t threads = 1;     // fitness evaluation workers; never changes the trace

    void validate() const {
        if (population_size < 2) throw user_error("ga config: population_size must be >= 2");
        if (num_parents < 1 || num_parents >= population_size)
            throw user_error("ga config: need 1 <= num_parents < population_size");
        if (num_generations < 1) throw user_error("ga config: num_generations must be >= 1");
        if (percent_mutation < 0.0 || percent_mutation > 1.0)
            throw user_error("ga config: percent_mutation must lie in [0,1]");
        if (!(gene_min < gene_max)) throw user_error("ga config: gene bounds are empty");
        if (gene_step <= 0.0) throw user_error("ga config: gene_step must be > 0");
        if (!(init_min <= init_max) || init_min < gene_min || init_max > gene_max)
            throw user_error("ga config: init range must sit inside the gene bounds");
        if (!(mutation_min < mutation_max))
            throw user_error("ga config: mutation range is empty");
        if (threads < 1) throw user_error("ga config: threads must be >= 1");
    }
};

/// Quantize-and-clip in integer index space so bound values like 3.0 are hit
/// exactly: k = clamp(round(v/step)), gene = k/(1/step).
inline double snap_gene(double v, const GaConfig& cfg) {
    if (!std::isfinite(v)) throw user_error("snap_gene: non-finite gene");
    const double inv = 1.0 / cfg.gene_step;
    const double kmin = std::ceil(cfg.gene_min * inv - 1e-9);
    const double kmax = std::floor(cfg.gene_max * inv + 1e-9);
    double k = std::round(v * inv);
    k = std::clamp(k, kmin, kmax);
    return k / inv;
}

inline bool on_gene_grid(double v, const GaConfig& cfg) {
    return v == snap_gene(v, cfg);
}

inline Genotype random_genotype(std::size_t rows, std::size_t cols, const GaConfig& cfg,
                                Rng& rng) {
    Genotype g(rows, cols);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = snap_gene(rng.uniform(cfg.init_min, cfg.init_max), cfg);
    return g;
}

/// Rank selection without replacement: ranks run worst = 1 ... best = P and
/// selection weight is the rank. Fitness ties are broken by insertion order
/// (the earlier genotype outranks the later one).
inline std::vector<std::size_t> rank_select(const std::vector<double>& fitness, std::size_t k,
                                            Rng& rng) {
    const std::size_t n = fitness.size();
    if (k > n) throw user_error("rank_select: k exceeds population size");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (fitness[a] != fitness[b]) return fitness[a] < fitness[b];
        return a > b;  // earlier insertion gets the higher rank
    });
    std::vector<double> weight(n, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos)
        weight[order[pos]] = static_cast<double>(pos + 1);

    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    std::vector<bool> taken(n, false);
    double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
    for (std::size_t draw = 0; draw < k; ++draw) {
        const double u = rng.unit() * total;
        double acc = 0.0;
        std::size_t pick = n;  // fallback guards accumulated rounding
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            acc += weight[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        if (pick == n) {
            for (std::size_t i = n; i-- > 0;)
                if (!taken[i]) {
                    pick = i;
                    break;
                }
        }
        chosen.push_back(pick);
        taken[pick] = true;
        total -= weight[pick];
    }
    return chosen;
}

/// Each gene copied from parent a or b with probability 1/2.
inline Genotype uniform_crossover(const Genotype& a, const Genotype& b, Rng& rng) {
    if (!a.same_shape(b)) throw user_error("uniform_crossover: parent shapes differ");
    Genotype child = a;
    for (std::size_t i = 0; i < child.size(); ++i)
        if (rng.unit() < 0.5) child.data()[i] = b.data()[i];
    return child;
}

/// Perturbs exactly one uniformly chosen gene, then re-quantizes and re-clips.
inline void mutate_one_gene(Genotype& g, const GaConfig& cfg, Rng& rng) {
    const std::size_t idx = rng.index(g.size());
    const double perturbed = g.data()[idx] + rng.uniform(cfg.mutation_min, cfg.mutation_max);
    g.data()[idx] = snap_gene(perturbed, cfg);
}

struct GenerationStats {
    std::size_t generation = 0;   // 1-based
    double best_fitness = 0.0;    // best fitness achieved up to this generation
    double mean_fitness = 0.0;    // mean fitness of this generation's population
};

struct EvolveResult {
    Genotype best;
    double best_fitness = 0.0;
    std::vector<GenerationStats> history;
};

namespace detail {
template <typename FitnessFn>
void evaluate_population(const std::vector<Genotype>& pop, const FitnessFn& fitness,
                         std::size_t threads, std::vector<double>& out) {
    out.resize(pop.size());
    if (threads <= 1 || pop.size() < 2) {
        for (std::size_t i = 0; i < pop.size(); ++i) out[i] = fitness(pop[i]);
        return;
    }
    // Workers claim fixed index stripes; results land by index, so the trace
    // is identical for any worker count.
    const std::size_t workers = std::min(threads, pop.size());
    std::vector<std::thread> crew;
    crew.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        crew.emplace_back([&, w] {
            for (std::size_t i = w; i < pop.size(); i += workers) out[i] = fitness(pop[i]);
        });
    }
    for (std::thread& t : crew) t.join();
}
}  // namespace detail

/// One full run of the evolutionary search. Each of the num_generations
/// iterations evaluates the current population, rank-selects parents, breeds
/// population_size - num_parents offspring by uniform crossover, mutates a
/// fixed percentage of them (one gene each), and carries parents + offspring
/// into the next generation. Returns the best genotype ever evaluated.
template <typename FitnessFn>
EvolveResult evolve(std::size_t rows, std::size_t cols, const FitnessFn& fitness,
                    const GaConfig& cfg) {
    cfg.validate();
    if (rows == 0 || cols == 0) throw user_error("evolve: genotype shape must be non-empty");

    Rng rng(cfg.seed);
    std::vector<Genotype> pop;
    pop.reserve(cfg.population_size);
    if (cfg.zero_seed) pop.push_back(Genotype(rows, cols));
    while (pop.size() < cfg.population_size)
        pop.push_back(random_genotype(rows, cols, cfg, rng));

    EvolveResult result;
    result.best = pop.front();
    result.best_fitness = -std::numeric_limits<double>::infinity();

    std::vector<double> fit;
    for (std::size_t gen = 1; gen <= cfg.num_generations; ++gen) {
        detail::evaluate_population(pop, fitness, cfg.threads, fit);

        double best = fit[0], mean = 0.0;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < fit.size(); ++i) {
            mean += fit[i];
            if (fit[i] > best) {
                best = fit[i];
                best_idx = i;
            }
        }
        mean /= static_cast<double>(fit.size());
        if (best > result.best_fitness) {
            result.best_fitness = best;
            result.best = pop[best_idx];
        }
        // History tracks the best fitness achieved so far: stochastic parent
        // selection can drop a generation's champion, but the best-ever curve
        // never regresses.
        result.history.push_back({gen, result.best_fitness, mean});

        const std::vector<std::size_t> parent_idx = rank_select(fit, cfg.num_parents, rng);
        std::vector<Genotype> next;
        next.reserve(cfg.population_size);
        for (std::size_t i : parent_idx) next.push_back(pop[i]);

        const std::size_t offspring_count = cfg.population_size - cfg.num_parents;
        for (std::size_t i = 0; i < offspring_count; ++i) {
            const std::size_t a = rng.index(cfg.num_parents);
            std::size_t b = rng.index(cfg.num_parents - 1);
            if (b >= a) ++b;  // distinct mates
            next.push_back(uniform_crossover(next[a], next[b], rng));
        }
        if (next.size() != cfg.population_size)
            throw user_error("evolve: internal population bookkeeping error");

        // Mutation pool: offspring only, unless configured to include parents.
        const std::size_t pool_begin = cfg.mutate_parents ? 0 : cfg.num_parents;
        const std::size_t pool_size = cfg.population_size - pool_begin;
        const auto mutations = static_cast<std::size_t>(
            std::llround(cfg.percent_mutation * static_cast<double>(pool_size)));
        std::vector<std::size_t> pool(pool_size);
        std::iota(pool.begin(), pool.end(), pool_begin);
        rng.shuffle(pool);
        for (std::size_t i = 0; i < mutations && i < pool.size(); ++i)
            mutate_one_gene(next[pool[i]], cfg, rng);

        pop = std::move(next);
    }
    return result;
}

inline void write_trace_csv(const std::vector<GenerationStats>& history,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path);
    out << "generation,best_fitness,mean_fitness\n";
    for (const GenerationStats& g : history)
        out << g.generation << ',' << fmt_double(g.best_fitness) << ','
            << fmt_double(g.mean_fitness) << '\n';
    if (!out) throw user_error("write failed: " + path);
}

inline void to_json(nlohmann::json& j, const GaConfig& c) {
    j = nlohmann::json{
        {"population_size", c.population_size},
        {"num_generations", c.num_generations},
        {"num_parents", c.num_parents},
        {"percent_mutation", c.percent_mutation},
        {"gene_min", c.gene_min},
        {"gene_max", c.gene_max},
        {"gene_step", c.gene_step},
        {"init_min", c.init_min},
        {"init_max", c.init_max},
        {"mutation_min", c.mutation_min},
        {"mutation_max", c.mutation_max},
        {"seed", c.seed},
        {"zero_seed", c.zero_seed},
        {"mutate_parents", c.mutate_parents},
    };
}

inline void from_json(const nlohmann::json& j, GaConfig& c) {
    c.population_size = j.value("population_size", c.population_size);
    c.num_generations = j.value("num_generations", c.num_generations);
    c.num_parents = j.value("num_parents", c.num_parents);
    c.percent_mutation = j.value("percent_mutation", c.percent_mutation);
    c.gene_min = j.value("gene_min", c.gene_min);
    c.gene_max = j.value("gene_max", c.gene_max);
    c.gene_step = j.value("gene_step", c.gene_step);
    c.init_min = j.value("init_min", c.init_min);
    c.init_max = j.value("init_max", c.init_max);
    c.mutation_min = j.value("mutation_min", c.mutation_min);
    c.mutation_max = j.value("mutation_max", c.mutation_max);
    c.seed = j.value("seed", c.seed);
    c.zero_seed = j.value("zero_seed", c.zero_seed);
    c.mutate_parents = j.value("mutate_parents", c.mutate_parents);
}

}  // namespace adsee
