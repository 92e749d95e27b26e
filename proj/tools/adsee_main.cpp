// Command-line front end: synth-gen | train | eval | sefa | optimize | report.
// Exit codes: 0 success, 1 user error (bad flags, bad files, missing
// prerequisites), 2 internal error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "adsee/pipeline.hpp"

namespace {

namespace fs = std::filesystem;

std::string default_artifact(const std::string& explicit_path, const std::string& out_dir,
                             const char* name, bool required, const char* flag) {
    if (!explicit_path.empty()) return explicit_path;
    const fs::path candidate = fs::path(out_dir) / name;
    if (fs::exists(candidate)) return candidate.string();
    if (required)
        throw adsee::user_error(std::string("missing prerequisite artifact: ") +
                                candidate.string() + " (pass " + flag +
                                " or run the producing command first)");
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surrogate-guided creative editing: synthetic data, click-rate "
                 "prediction, closed-form edit directions, and evolutionary search."};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "run";
    std::size_t threads = 1;
    std::uint64_t global_seed = 0;
    bool seed_given = false;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--out-dir", out_dir, "artifact directory")->capture_default_str();
    app.add_option("--threads", threads, "fitness evaluation workers (never changes results)")
        ->capture_default_str();
    app.add_option("--seed", global_seed, "master seed; re-derives all stage seeds")
        ->each([&](const std::string&) { seed_given = true; });

    // synth-gen
    CLI::App* gen = app.add_subcommand("synth-gen", "generate a synthetic ad dataset + world manifest");
    std::size_t g_n_ads = 0;
    int g_categories = 0;
    std::size_t g_latent_rows = 0, g_latent_cols = 0;
    double g_noise = -1.0;
    gen->add_option("--n-ads", g_n_ads, "number of ads to sample");
    gen->add_option("--categories", g_categories, "number of ad categories");
    gen->add_option("--latent-rows", g_latent_rows, "latent rows d");
    gen->add_option("--latent-cols", g_latent_cols, "latent channel width l");
    gen->add_option("--noise", g_noise, "click-rate logit noise level");

    // train
    CLI::App* train = app.add_subcommand("train", "split the dataset and fit the click-rate predictor");
    std::string t_dataset, t_world;
    double t_lr = 0.0, t_alpha = -1.0;
    std::size_t t_batch = 0, t_epochs = 0, t_patience = 0;
    int t_width = 0, t_layers = 0, t_heads = 0;
    std::string t_pool;
    train->add_option("--dataset", t_dataset, "JSONL dataset (default: <out-dir>/dataset.jsonl)");
    train->add_option("--world", t_world, "world manifest for the category count (optional)");
    train->add_option("--lr", t_lr, "learning rate");
    train->add_option("--batch-size", t_batch, "mini-batch size");
    train->add_option("--max-epochs", t_epochs, "epoch cap");
    train->add_option("--patience", t_patience, "early-stop patience (epochs)");
    train->add_option("--alpha-reg", t_alpha, "weight-norm regularization strength");
    train->add_option("--embed-width", t_width, "field embedding width");
    train->add_option("--layers", t_layers, "attention layers");
    train->add_option("--heads", t_heads, "attention heads");
    train->add_option("--pool", t_pool, "face latent pooling: max | average");

    // eval
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a trained model on one split partition");
    std::string e_dataset, e_split, e_checkpoint, e_partition = "test";
    eval_cmd->add_option("--dataset", e_dataset, "JSONL dataset (default: <out-dir>/dataset.jsonl)");
    eval_cmd->add_option("--split", e_split, "split manifest (default: <out-dir>/split.json)");
    eval_cmd->add_option("--checkpoint", e_checkpoint,
                         "model checkpoint (default: <out-dir>/checkpoint.json)");
    eval_cmd->add_option("--partition", e_partition, "train | validation | test | all")
        ->capture_default_str();

    // sefa
    CLI::App* sefa_cmd = app.add_subcommand("sefa", "factor the generator weight into edit directions");
    std::string s_world;
    std::size_t s_q = 0;
    sefa_cmd->add_option("--world", s_world, "world manifest (default: <out-dir>/world_manifest.json)");
    sefa_cmd->add_option("--q", s_q, "number of directions (default: min(20, latent width))");

    // optimize
    CLI::App* opt = app.add_subcommand("optimize", "evolve edit intensities for each selected ad");
    std::string o_dataset, o_split, o_checkpoint, o_directions, o_world;
    bool o_no_world = false;
    std::size_t o_max_ads = 0, o_population = 0, o_generations = 0, o_parents = 0;
    double o_mutation = -1.0;
    bool o_no_zero_seed = false;
    opt->add_option("--dataset", o_dataset, "JSONL dataset (default: <out-dir>/dataset.jsonl)");
    opt->add_option("--split", o_split, "split manifest (default: <out-dir>/split.json)");
    opt->add_option("--checkpoint", o_checkpoint,
                    "model checkpoint (default: <out-dir>/checkpoint.json)");
    opt->add_option("--directions", o_directions,
                    "direction set (default: <out-dir>/directions.json)");
    opt->add_option("--world", o_world,
                    "world manifest for the embedding linkage and true-rate scoring "
                    "(default: <out-dir>/world_manifest.json when present)");
    opt->add_flag("--no-world", o_no_world, "ignore any world manifest (carry embeddings over)");
    opt->add_option("--max-ads", o_max_ads, "optimize at most this many ads");
    opt->add_option("--population", o_population, "population size");
    opt->add_option("--generations", o_generations, "generation count");
    opt->add_option("--parents", o_parents, "parents kept per generation");
    opt->add_option("--mutation", o_mutation, "fraction of offspring mutated");
    opt->add_flag("--no-zero-seed", o_no_zero_seed, "drop the all-zero genotype from generation 0");

    // report
    CLI::App* rep = app.add_subcommand("report", "summarize predicted gains; optional per-direction table");
    std::string r_edits, r_dataset, r_split, r_checkpoint, r_directions, r_world;
    std::size_t r_bins = 0;
    bool r_per_direction = false;
    rep->add_option("--edits", r_edits, "edit export (default: <out-dir>/edits.json)");
    rep->add_option("--bins", r_bins, "histogram bin count");
    rep->add_flag("--per-direction", r_per_direction,
                  "also run the single-direction search and rank directions");
    rep->add_option("--dataset", r_dataset, "dataset (per-direction mode)");
    rep->add_option("--split", r_split, "split manifest (per-direction mode)");
    rep->add_option("--checkpoint", r_checkpoint, "model checkpoint (per-direction mode)");
    rep->add_option("--directions", r_directions, "direction set (per-direction mode)");
    rep->add_option("--world", r_world, "world manifest (per-direction mode, optional)");

    // Shared flags (--config, --out-dir, --threads, --seed) are accepted on
    // either side of the subcommand name.
    for (CLI::App* sub : {gen, train, eval_cmd, sefa_cmd, opt, rep}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        adsee::PipelineConfig cfg;
        if (!config_path.empty()) cfg = adsee::load_pipeline_config(config_path);
        if (seed_given) {
            cfg.world.seed = global_seed;
            cfg.split.seed = global_seed ^ 0x5917ULL;
            cfg.train.seed = global_seed ^ 0x7261ULL;
            cfg.ga.seed = global_seed ^ 0x6741ULL;
        }

        if (gen->parsed()) {
            if (gen->count("--n-ads")) cfg.world.n_ads = g_n_ads;
            if (gen->count("--categories")) cfg.world.category_count = g_categories;
            if (gen->count("--latent-rows")) cfg.world.latent_rows = g_latent_rows;
            if (gen->count("--latent-cols")) cfg.world.latent_cols = g_latent_cols;
            if (gen->count("--noise")) cfg.world.noise_level = g_noise;
            adsee::run_synth_gen(cfg, out_dir);
            std::cout << "wrote " << (fs::path(out_dir) / adsee::kDatasetFile).string() << " ("
                      << cfg.world.n_ads << " ads) and "
                      << (fs::path(out_dir) / adsee::kWorldManifestFile).string() << "\n";
        } else if (train->parsed()) {
            if (train->count("--lr")) cfg.train.learning_rate = t_lr;
            if (train->count("--batch-size")) cfg.train.batch_size = t_batch;
            if (train->count("--max-epochs")) cfg.train.max_epochs = t_epochs;
            if (train->count("--patience")) cfg.train.patience = t_patience;
            if (train->count("--alpha-reg")) cfg.train.alpha_reg = t_alpha;
            if (train->count("--embed-width")) cfg.model.embed_width = t_width;
            if (train->count("--layers")) cfg.model.layers = t_layers;
            if (train->count("--heads")) cfg.model.heads = t_heads;
            if (train->count("--pool")) cfg.model.pool = t_pool;
            const std::string dataset =
                default_artifact(t_dataset, out_dir, adsee::kDatasetFile, true, "--dataset");
            const std::string world =
                default_artifact(t_world, out_dir, adsee::kWorldManifestFile, false, "--world");
            const adsee::TrainOutcome outcome = adsee::run_train(cfg, dataset, world, out_dir);
            std::cout << "trained " << outcome.param_count << " parameters; best epoch "
                      << outcome.best_epoch << "/" << outcome.epochs_run
                      << ", validation MAE " << outcome.best_val_mae << "\n";
        } else if (eval_cmd->parsed()) {
            const std::string dataset =
                default_artifact(e_dataset, out_dir, adsee::kDatasetFile, true, "--dataset");
            const std::string checkpoint = default_artifact(
                e_checkpoint, out_dir, adsee::kCheckpointFile, true, "--checkpoint");
            std::string partition = e_partition == "all" ? "" : e_partition;
            const std::string split =
                partition.empty()
                    ? ""
                    : default_artifact(e_split, out_dir, adsee::kSplitFile, true, "--split");
            const adsee::EvalOutcome outcome =
                adsee::run_eval(cfg, dataset, split, checkpoint, partition, out_dir);
            std::cout << adsee::format_report_table(outcome.report);
            std::cout << "constant-mean baseline MAE " << outcome.baseline_constant_mae << "\n";
        } else if (sefa_cmd->parsed()) {
            if (sefa_cmd->count("--q")) cfg.sefa_q = s_q;
            const std::string world =
                default_artifact(s_world, out_dir, adsee::kWorldManifestFile, true, "--world");
            const adsee::DirectionSet dirs = adsee::run_sefa(cfg, world, out_dir);
            std::cout << "wrote " << (fs::path(out_dir) / adsee::kDirectionsFile).string() << " ("
                      << dirs.count() << " directions of width " << dirs.dim() << ")\n";
        } else if (opt->parsed()) {
            if (opt->count("--max-ads")) cfg.optimize.max_ads = o_max_ads;
            if (opt->count("--population")) cfg.ga.population_size = o_population;
            if (opt->count("--generations")) cfg.ga.num_generations = o_generations;
            if (opt->count("--parents")) cfg.ga.num_parents = o_parents;
            if (opt->count("--mutation")) cfg.ga.percent_mutation = o_mutation;
            if (o_no_zero_seed) cfg.ga.zero_seed = false;
            const std::string dataset =
                default_artifact(o_dataset, out_dir, adsee::kDatasetFile, true, "--dataset");
            const std::string split =
                default_artifact(o_split, out_dir, adsee::kSplitFile, false, "--split");
            const std::string checkpoint = default_artifact(
                o_checkpoint, out_dir, adsee::kCheckpointFile, true, "--checkpoint");
            const std::string directions = default_artifact(
                o_directions, out_dir, adsee::kDirectionsFile, true, "--directions");
            const std::string world =
                o_no_world ? ""
                           : default_artifact(o_world, out_dir, adsee::kWorldManifestFile, false,
                                              "--world");
            const adsee::OptimizeOutcome outcome = adsee::run_optimize(
                cfg, dataset, split, checkpoint, directions, world, out_dir, threads);
            std::cout << "optimized " << outcome.n_ads << " ads: mean predicted gain "
                      << outcome.mean_delta << ", min " << outcome.min_delta << ", "
                      << outcome.fraction_nonnegative * 100.0 << "% non-negative";
            if (outcome.has_true_improvement)
                std::cout << ", mean true-rate improvement " << outcome.mean_true_improvement;
            std::cout << "\n";
        } else if (rep->parsed()) {
            if (rep->count("--bins")) cfg.report.bins = r_bins;
            const std::string edits =
                default_artifact(r_edits, out_dir, adsee::kEditsFile, true, "--edits");
            const adsee::DeltaSummary summary = adsee::run_report(cfg, edits, out_dir);
            std::cout << "predicted gain over " << summary.n << " ads: mean " << summary.mean
                      << ", median " << summary.median << ", skewness " << summary.skewness
                      << ", " << summary.fraction_negative * 100.0 << "% negative\n";
            if (r_per_direction) {
                const std::string dataset =
                    default_artifact(r_dataset, out_dir, adsee::kDatasetFile, true, "--dataset");
                const std::string split =
                    default_artifact(r_split, out_dir, adsee::kSplitFile, false, "--split");
                const std::string checkpoint = default_artifact(
                    r_checkpoint, out_dir, adsee::kCheckpointFile, true, "--checkpoint");
                const std::string directions = default_artifact(
                    r_directions, out_dir, adsee::kDirectionsFile, true, "--directions");
                const std::string world = default_artifact(
                    r_world, out_dir, adsee::kWorldManifestFile, false, "--world");
                const std::vector<adsee::DirectionEffect> ranked = adsee::run_per_direction(
                    cfg, dataset, split, checkpoint, directions, world, out_dir, threads);
                std::cout << "per-direction mean predicted gain (best first):\n";
                for (const adsee::DirectionEffect& d : ranked)
                    std::cout << "  direction " << d.direction << ": " << d.mean_delta << "\n";
            }
        }
        return 0;
    } catch (const adsee::user_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
