#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "adsee/bridge.hpp"
#include "adsee/common.hpp"
#include "adsee/data.hpp"
#include "adsee/editor.hpp"
#include "adsee/ga.hpp"
#include "adsee/metrics.hpp"
#include "adsee/predictor.hpp"
#include "adsee/sefa.hpp"
#include "adsee/synthworld.hpp"
#include "json.hpp"

namespace adsee {

// Canonical artifact names inside a run directory.
inline constexpr const char* kDatasetFile = "dataset.jsonl";
inline constexpr const char* kWorldManifestFile = "world_manifest.json";
inline constexpr const char* kSplitFile = "split.json";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kTrainingLogFile = "training_log.csv";
inline constexpr const char* kEvalReportJson = "eval_report.json";
inline constexpr const char* kEvalReportText = "eval_report.txt";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kDirectionsFile = "directions.json";
inline constexpr const char* kEditsFile = "edits.json";
inline constexpr const char* kOptimizeSummaryFile = "optimize_summary.json";
inline constexpr const char* kTracesDir = "traces";
inline constexpr const char* kReportDir = "report";
inline constexpr const char* kRunManifestFile = "run_manifest.json";

struct ModelSettings {
    int embed_width = 16;
    int layers = 2;
    int heads = 2;
    std::string pool = "max";  // or "average"
    bool allow_zero_faces = false;
};

struct SplitSettings {
    SplitFractions fractions;
    std::uint64_t seed = 11;
};

struct OptimizeSettings {
    std::size_t max_ads = 200;
    std::string partition = "test";
};

struct PerDirectionSettings {
    std::size_t ads = 30;
    std::size_t top = 10;
};

struct ReportSettings {
    std::size_t bins = 20;
};

struct PipelineConfig {
    WorldConfig world;
    SplitSettings split;
    ModelSettings model;
    TrainConfig train;
    std::size_t sefa_q = 0;  // 0 = min(20, latent width)
    GaConfig ga;
    OptimizeSettings optimize;
    PerDirectionSettings per_direction;
    ReportSettings report;
};

inline void to_json(nlohmann::json& j, const ModelSettings& m) {
    j = nlohmann::json{{"embed_width", m.embed_width},
                       {"layers", m.layers},
                       {"heads", m.heads},
                       {"pool", m.pool},
                       {"allow_zero_faces", m.allow_zero_faces}};
}
inline void from_json(const nlohmann::json& j, ModelSettings& m) {
    m.embed_width = j.value("embed_width", m.embed_width);
    m.layers = j.value("layers", m.layers);
    m.heads = j.value("heads", m.heads);
    m.pool = j.value("pool", m.pool);
    m.allow_zero_faces = j.value("allow_zero_faces", m.allow_zero_faces);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},       {"patience", c.patience},
                       {"alpha_reg", c.alpha_reg},         {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.alpha_reg = j.value("alpha_reg", c.alpha_reg);
    c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const SplitSettings& s) {
    j = nlohmann::json{{"train", s.fractions.train},
                       {"validation", s.fractions.validation},
                       {"test", s.fractions.test},
                       {"seed", s.seed}};
}
inline void from_json(const nlohmann::json& j, SplitSettings& s) {
    s.fractions.train = j.value("train", s.fractions.train);
    s.fractions.validation = j.value("validation", s.fractions.validation);
    s.fractions.test = j.value("test", s.fractions.test);
    s.seed = j.value("seed", s.seed);
}

inline void to_json(nlohmann::json& j, const OptimizeSettings& o) {
    j = nlohmann::json{{"max_ads", o.max_ads}, {"partition", o.partition}};
}
inline void from_json(const nlohmann::json& j, OptimizeSettings& o) {
    o.max_ads = j.value("max_ads", o.max_ads);
    o.partition = j.value("partition", o.partition);
}

inline void to_json(nlohmann::json& j, const PerDirectionSettings& p) {
    j = nlohmann::json{{"ads", p.ads}, {"top", p.top}};
}
inline void from_json(const nlohmann::json& j, PerDirectionSettings& p) {
    p.ads = j.value("ads", p.ads);
    p.top = j.value("top", p.top);
}

inline void to_json(nlohmann::json& j, const ReportSettings& r) {
    j = nlohmann::json{{"bins", r.bins}};
}
inline void from_json(const nlohmann::json& j, ReportSettings& r) {
    r.bins = j.value("bins", r.bins);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = nlohmann::json{{"world", c.world},
                       {"split", c.split},
                       {"model", c.model},
                       {"train", c.train},
                       {"sefa", nlohmann::json{{"q", c.sefa_q}}},
                       {"ga", c.ga},
                       {"optimize", c.optimize},
                       {"per_direction", c.per_direction},
                       {"report", c.report}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
    if (j.contains("world")) j.at("world").get_to(c.world);
    if (j.contains("split")) j.at("split").get_to(c.split);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("sefa")) c.sefa_q = j.at("sefa").value("q", c.sefa_q);
    if (j.contains("ga")) j.at("ga").get_to(c.ga);
    if (j.contains("optimize")) j.at("optimize").get_to(c.optimize);
    if (j.contains("per_direction")) j.at("per_direction").get_to(c.per_direction);
    if (j.contains("report")) j.at("report").get_to(c.report);
}

/// Hash of the canonical config serialization. Deliberately excludes anything
/// about where artifacts go or how many workers run: those must never change
/// results.
inline std::string config_hash(const PipelineConfig& cfg) {
    nlohmann::json j = cfg;
    return hex64(fnv1a64(j.dump()));
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw user_error("config parse error: " + std::string(e.what()));
    }
    PipelineConfig cfg;
    j.get_to(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace detail {
inline std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& ch : out)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
    return out;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw user_error("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw user_error("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw user_error("cannot open: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw user_error(path.string() + ": parse error: " + e.what());
    }
    return j;
}

inline std::string csv_meta_line(const std::string& hash, std::uint64_t seed) {
    return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}
}  // namespace detail

inline void update_run_manifest(const std::filesystem::path& out_dir, const std::string& stage,
                                const std::vector<std::string>& artifacts,
                                const std::string& hash, std::uint64_t seed) {
    const std::filesystem::path path = out_dir / kRunManifestFile;
    nlohmann::json j;
    if (std::filesystem::exists(path)) {
        try {
            j = detail::read_json_file(path);
        } catch (const user_error&) {
            j = nlohmann::json::object();
        }
    }
    j["schema_version"] = "adsee-run/1";
    j["stages"][stage] = {{"artifacts", artifacts}, {"config_hash", hash}, {"seed", seed}};
    detail::write_json_file(j, path);
}

/// Select one named partition from a dataset using a split manifest; an
/// empty partition name returns the whole dataset.
inline std::vector<AdRecord> select_partition(const std::vector<AdRecord>& records,
                                              const std::string& split_path,
                                              const std::string& partition) {
    if (partition.empty()) return records;
    const nlohmann::json split = detail::read_json_file(split_path);
    if (!split.contains(partition))
        throw user_error("split manifest has no partition named '" + partition + "'");
    const auto ids = split.at(partition).get<std::vector<std::string>>();
    const std::set<std::string> want(ids.begin(), ids.end());
    std::vector<AdRecord> out;
    out.reserve(ids.size());
    for (const AdRecord& r : records)
        if (want.count(r.id)) out.push_back(r);
    if (out.size() != ids.size())
        throw user_error("split manifest references ids missing from the dataset");
    return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void run_synth_gen(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    const SynthWorld world = SynthWorld::build(cfg.world);
    const std::vector<AdRecord> records =
        world.sample_ads(cfg.world.n_ads, cfg.world.seed + 1);

    const nlohmann::json meta = {{"schema_version", "adsee-dataset/1"},
                                 {"config_hash", hash},
                                 {"seed", cfg.world.seed},
                                 {"n_ads", records.size()}};
    write_jsonl(records, (out_dir / kDatasetFile).string(), &meta);

    nlohmann::json manifest = world.manifest();
    manifest["config_hash"] = hash;
    manifest["seed"] = cfg.world.seed;
    detail::write_json_file(manifest, out_dir / kWorldManifestFile);

    update_run_manifest(out_dir, "synth-gen", {kDatasetFile, kWorldManifestFile}, hash,
                        cfg.world.seed);
}

/// Derives model dimensions from the data plus settings. category_count
/// comes from the world manifest when available, else from the data.
inline PredictorDims derive_dims(const std::vector<AdRecord>& records, int category_count,
                                 const ModelSettings& model) {
    if (records.empty()) throw user_error("dataset is empty");
    const AdRecord* with_face = nullptr;
    for (const AdRecord& r : records)
        if (!r.face_latents.empty()) {
            with_face = &r;
            break;
        }
    if (!with_face) throw user_error("dataset has no record with a face");
    PredictorDims dims;
    dims.category_count = category_count;
    dims.face_slots = model.allow_zero_faces ? kMaxFaces + 1 : kMaxFaces;
    dims.latent_elems = static_cast<int>(with_face->face_latents.front().size());
    dims.image_dim = static_cast<int>(with_face->image_embedding.size());
    dims.text_dim = static_cast<int>(with_face->text_embedding.size());
    dims.embed_width = model.embed_width;
    dims.layers = model.layers;
    dims.heads = model.heads;
    if (model.pool == "max")
        dims.pool_kind = 0;
    else if (model.pool == "average")
        dims.pool_kind = 1;
    else
        throw user_error("model.pool must be 'max' or 'average'");
    dims.validate();
    return dims;
}

struct TrainOutcome {
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    std::size_t epochs_run = 0;
    std::size_t param_count = 0;
};

inline TrainOutcome run_train(const PipelineConfig& cfg, const std::string& dataset_path,
                              const std::string& world_manifest_path,
                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    const std::vector<AdRecord> records = read_jsonl(dataset_path);

    int category_count;
    if (!world_manifest_path.empty()) {
        const SynthWorld world = SynthWorld::load(world_manifest_path);
        category_count = world.config().category_count;
    } else {
        category_count = infer_category_count(records);
    }

    const DatasetSplit split = split_dataset(records, cfg.split.fractions, cfg.split.seed);
    nlohmann::json split_json = split_manifest(split, cfg.split.fractions);
    split_json["config_hash"] = hash;
    detail::write_json_file(split_json, out_dir / kSplitFile);

    const PredictorDims dims = derive_dims(records, category_count, cfg.model);
    const EncodeOptions opts = encode_options(dims);
    const EncodedSet train_set = encode_set(split.train, dims.category_count,
                                            static_cast<std::size_t>(dims.latent_elems), opts);
    const EncodedSet val_set = encode_set(split.validation, dims.category_count,
                                          static_cast<std::size_t>(dims.latent_elems), opts);

    TrainResult result = train_predictor(train_set, val_set, dims, cfg.train);

    nlohmann::json ckpt = checkpoint_json(result.model);
    ckpt["config_hash"] = hash;
    ckpt["seed"] = cfg.train.seed;
    detail::write_json_file(ckpt, out_dir / kCheckpointFile);

    {
        std::ofstream log(out_dir / kTrainingLogFile);
        if (!log) throw user_error("cannot open for writing: " + (out_dir / kTrainingLogFile).string());
        log << detail::csv_meta_line(hash, cfg.train.seed);
        log << "epoch,train_loss,val_mae\n";
        for (const EpochLog& e : result.log)
            log << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.val_mae)
                << '\n';
    }

    update_run_manifest(out_dir, "train", {kSplitFile, kCheckpointFile, kTrainingLogFile}, hash,
                        cfg.train.seed);
    return {result.best_epoch, result.best_val_mae, result.log.size(),
            result.model.param_count()};
}

struct EvalOutcome {
    EvalReport report;
    double baseline_constant_mae = 0.0;
};

inline EvalOutcome run_eval(const PipelineConfig& cfg, const std::string& dataset_path,
                            const std::string& split_path, const std::string& checkpoint_path,
                            const std::string& partition, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    const PredictorModel model = load_checkpoint(checkpoint_path);
    const std::vector<AdRecord> all = read_jsonl(dataset_path);
    const std::vector<AdRecord> records = select_partition(all, split_path, partition);
    if (records.size() < 2) throw user_error("eval: partition has fewer than 2 records");

    const EncodeOptions opts = encode_options(model.dims);
    std::vector<double> pred, truth;
    pred.reserve(records.size());
    truth.reserve(records.size());
    for (const AdRecord& r : records) {
        pred.push_back(predict_record_cr(r, model, opts));
        truth.push_back(compute_cr(r.clicks, r.impressions));
    }

    EvalOutcome outcome;
    outcome.report = evaluate_predictions(pred, truth);
    for (double t : truth) outcome.baseline_constant_mae += std::abs(model.label_mean - t);
    outcome.baseline_constant_mae /= static_cast<double>(truth.size());

    nlohmann::json j = outcome.report;
    j["config_hash"] = hash;
    j["seed"] = cfg.train.seed;
    j["partition"] = partition.empty() ? "all" : partition;
    j["baseline_constant_mae"] = outcome.baseline_constant_mae;
    detail::write_json_file(j, out_dir / kEvalReportJson);

    {
        std::ofstream txt(out_dir / kEvalReportText);
        if (!txt) throw user_error("cannot open for writing: " + (out_dir / kEvalReportText).string());
        txt << detail::csv_meta_line(hash, cfg.train.seed) << format_report_table(outcome.report);
    }
    {
        std::ofstream csv(out_dir / kPredictionsFile);
        if (!csv) throw user_error("cannot open for writing: " + (out_dir / kPredictionsFile).string());
        csv << detail::csv_meta_line(hash, cfg.train.seed);
        csv << "id,true_cr,predicted_cr\n";
        for (std::size_t i = 0; i < records.size(); ++i)
            csv << records[i].id << ',' << fmt_double(truth[i]) << ',' << fmt_double(pred[i])
                << '\n';
    }

    update_run_manifest(out_dir, "eval", {kEvalReportJson, kEvalReportText, kPredictionsFile},
                        hash, cfg.train.seed);
    return outcome;
}

inline DirectionSet run_sefa(const PipelineConfig& cfg, const std::string& world_manifest_path,
                             const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    const SynthWorld world = SynthWorld::load(world_manifest_path);
    const Matrix& a = world.generator_weight();
    const std::size_t q = cfg.sefa_q > 0 ? cfg.sefa_q : std::min<std::size_t>(20, a.cols());
    const DirectionSet dirs = sefa(a, q, "generator weight from world manifest");

    nlohmann::json j = dirs;
    j["config_hash"] = hash;
    j["seed"] = world.config().seed;
    detail::write_json_file(j, out_dir / kDirectionsFile);
    update_run_manifest(out_dir, "sefa", {kDirectionsFile}, hash, world.config().seed);
    return dirs;
}

inline DirectionSet load_directions(const std::string& path) {
    DirectionSet dirs;
    detail::read_json_file(path).get_to(dirs);
    return dirs;
}

struct OptimizeOutcome {
    std::size_t n_ads = 0;
    double mean_delta = 0.0;
    double min_delta = 0.0;
    double fraction_nonnegative = 0.0;
    bool has_true_improvement = false;
    double mean_true_improvement = 0.0;
};

/// Per-ad evolutionary search seeds are derived from the base seed and the
/// ad id, so results do not depend on ad order or batch composition.
inline std::uint64_t ad_seed(std::uint64_t base, const std::string& id) {
    return base ^ fnv1a64(id);
}

inline OptimizeOutcome run_optimize(const PipelineConfig& cfg, const std::string& dataset_path,
                                    const std::string& split_path,
                                    const std::string& checkpoint_path,
                                    const std::string& directions_path,
                                    const std::string& world_manifest_path,
                                    const std::filesystem::path& out_dir, std::size_t threads) {
    std::filesystem::create_directories(out_dir / kTracesDir);
    const std::string hash = config_hash(cfg);
    const PredictorModel model = load_checkpoint(checkpoint_path);
    const DirectionSet dirs = load_directions(directions_path);
    const std::vector<AdRecord> all = read_jsonl(dataset_path);
    std::vector<AdRecord> records =
        select_partition(all, split_path, split_path.empty() ? "" : cfg.optimize.partition);
    if (records.size() > cfg.optimize.max_ads) records.resize(cfg.optimize.max_ads);
    if (records.empty()) throw user_error("optimize: no records selected");

    const EncodeOptions opts = encode_options(model.dims);
    ImageEmbedFn link;
    const ImageEmbedFn* link_ptr = nullptr;
    SynthWorld world;
    const bool has_world = !world_manifest_path.empty();
    if (has_world) {
        world = SynthWorld::load(world_manifest_path);
        link = world.image_embed_fn();
        link_ptr = &link;
    }

    std::vector<EditedRecord> edits;
    edits.reserve(records.size());
    double sum_true_improvement = 0.0;
    for (const AdRecord& rec : records) {
        GaConfig ga = cfg.ga;
        ga.seed = ad_seed(cfg.ga.seed, rec.id);
        ga.threads = threads;
        const std::size_t faces = rec.face_latents.size();

        const auto fitness = [&](const Genotype& g) {
            return edit_fitness(rec, g, dirs, model, opts, link_ptr);
        };
        const EvolveResult evo = evolve(faces, dirs.count(), fitness, ga);

        EditedRecord er = apply_edit(rec, evo.best, dirs);
        score_edit(er, model, opts, link_ptr);
        if (has_world)
            sum_true_improvement +=
                world.true_cr(edited_as_record(er, link_ptr)) - world.true_cr(rec);

        {
            const std::filesystem::path trace =
                out_dir / kTracesDir / (detail::sanitize_id(rec.id) + ".csv");
            std::ofstream csv(trace);
            if (!csv) throw user_error("cannot open for writing: " + trace.string());
            csv << detail::csv_meta_line(hash, ga.seed);
            csv << "generation,best_fitness,mean_fitness\n";
            for (const GenerationStats& g : evo.history)
                csv << g.generation << ',' << fmt_double(g.best_fitness) << ','
                    << fmt_double(g.mean_fitness) << '\n';
        }
        edits.push_back(std::move(er));
    }

    export_edits(edits, (out_dir / kEditsFile).string(), hash, cfg.ga.seed);

    OptimizeOutcome outcome;
    outcome.n_ads = edits.size();
    outcome.min_delta = edits.front().delta_cr;
    for (const EditedRecord& er : edits) {
        outcome.mean_delta += er.delta_cr;
        outcome.min_delta = std::min(outcome.min_delta, er.delta_cr);
        if (er.delta_cr >= 0.0) outcome.fraction_nonnegative += 1.0;
    }
    outcome.mean_delta /= static_cast<double>(edits.size());
    outcome.fraction_nonnegative /= static_cast<double>(edits.size());
    if (has_world) {
        outcome.has_true_improvement = true;
        outcome.mean_true_improvement = sum_true_improvement / static_cast<double>(edits.size());
    }

    nlohmann::json summary = {{"config_hash", hash},
                              {"seed", cfg.ga.seed},
                              {"n_ads", outcome.n_ads},
                              {"mean_delta_cr", outcome.mean_delta},
                              {"min_delta_cr", outcome.min_delta},
                              {"fraction_nonnegative", outcome.fraction_nonnegative}};
    if (has_world) summary["mean_true_cr_improvement"] = outcome.mean_true_improvement;
    detail::write_json_file(summary, out_dir / kOptimizeSummaryFile);

    update_run_manifest(out_dir, "optimize", {kEditsFile, kOptimizeSummaryFile, kTracesDir},
                        hash, cfg.ga.seed);
    return outcome;
}

inline DeltaSummary run_report(const PipelineConfig& cfg, const std::string& edits_path,
                               const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / kReportDir);
    const std::string hash = config_hash(cfg);
    const nlohmann::json edits_file = detail::read_json_file(edits_path);
    const std::vector<EditedRecord> edits = import_edits(edits_path);
    if (edits.empty()) throw user_error("report: edit export contains no ads");
    const std::uint64_t seed = edits_file.value("seed", std::uint64_t{0});

    std::vector<double> deltas;
    deltas.reserve(edits.size());
    for (const EditedRecord& er : edits) deltas.push_back(er.delta_cr);
    const DeltaSummary summary = delta_summary(deltas, cfg.report.bins);

    {
        const std::filesystem::path path = out_dir / kReportDir / "delta_histogram.csv";
        std::ofstream csv(path);
        if (!csv) throw user_error("cannot open for writing: " + path.string());
        csv << detail::csv_meta_line(hash, seed);
        csv << "bin_low,bin_high,count\n";
        for (std::size_t b = 0; b < summary.histogram.size(); ++b) {
            const double lo = summary.min + summary.bin_width * static_cast<double>(b);
            const double hi = b + 1 == summary.histogram.size()
                                  ? summary.max
                                  : summary.min + summary.bin_width * static_cast<double>(b + 1);
            csv << fmt_double(lo) << ',' << fmt_double(hi) << ',' << summary.histogram[b] << '\n';
        }
    }
    nlohmann::json j = summary;
    j["config_hash"] = hash;
    j["seed"] = seed;
    j["source_config_hash"] = edits_file.value("config_hash", "");
    detail::write_json_file(j, out_dir / kReportDir / "delta_summary.json");

    update_run_manifest(out_dir, "report",
                        {std::string(kReportDir) + "/delta_histogram.csv",
                         std::string(kReportDir) + "/delta_summary.json"},
                        hash, seed);
    return summary;
}

struct DirectionEffect {
    std::size_t direction = 0;
    double mean_delta = 0.0;
};

/// Single-direction search: genes are restricted to one direction at a time
/// and the mean predicted gain is tabulated per direction, largest first.
inline std::vector<DirectionEffect> run_per_direction(
    const PipelineConfig& cfg, const std::string& dataset_path, const std::string& split_path,
    const std::string& checkpoint_path, const std::string& directions_path,
    const std::string& world_manifest_path, const std::filesystem::path& out_dir,
    std::size_t threads) {
    std::filesystem::create_directories(out_dir / kReportDir);
    const std::string hash = config_hash(cfg);
    const PredictorModel model = load_checkpoint(checkpoint_path);
    const DirectionSet dirs = load_directions(directions_path);
    const std::vector<AdRecord> all = read_jsonl(dataset_path);
    std::vector<AdRecord> records =
        select_partition(all, split_path, split_path.empty() ? "" : cfg.optimize.partition);
    if (records.size() > cfg.per_direction.ads) records.resize(cfg.per_direction.ads);
    if (records.empty()) throw user_error("per-direction analysis: no records selected");

    const EncodeOptions opts = encode_options(model.dims);
    ImageEmbedFn link;
    const ImageEmbedFn* link_ptr = nullptr;
    if (!world_manifest_path.empty()) {
        const SynthWorld world = SynthWorld::load(world_manifest_path);
        link = world.image_embed_fn();
        link_ptr = &link;
    }

    const std::size_t top = std::min(cfg.per_direction.top, dirs.count());
    std::vector<DirectionEffect> effects;
    effects.reserve(top);
    for (std::size_t p = 0; p < top; ++p) {
        double sum_delta = 0.0;
        for (const AdRecord& rec : records) {
            GaConfig ga = cfg.ga;
            ga.seed = ad_seed(cfg.ga.seed ^ (0x1000 + p), rec.id);
            ga.threads = threads;
            const std::size_t faces = rec.face_latents.size();
            const double original = predict_record_cr(rec, model, opts);

            // genotype spans one column; embed into column p before editing
            const auto embed = [&](const Genotype& g1) {
                Genotype full(faces, dirs.count());
                for (std::size_t m = 0; m < faces; ++m) full(m, p) = g1(m, 0);
                return full;
            };
            const auto fitness = [&](const Genotype& g1) {
                return edit_fitness(rec, embed(g1), dirs, model, opts, link_ptr);
            };
            const EvolveResult evo = evolve(faces, 1, fitness, ga);
            sum_delta += evo.best_fitness - original;
        }
        effects.push_back({p, sum_delta / static_cast<double>(records.size())});
    }

    std::vector<DirectionEffect> ranked = effects;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const DirectionEffect& a, const DirectionEffect& b) {
                         return a.mean_delta > b.mean_delta;
                     });

    {
        const std::filesystem::path path = out_dir / kReportDir / "per_direction.csv";
        std::ofstream csv(path);
        if (!csv) throw user_error("cannot open for writing: " + path.string());
        csv << detail::csv_meta_line(hash, cfg.ga.seed);
        csv << "rank,direction,mean_delta_cr\n";
        for (std::size_t r = 0; r < ranked.size(); ++r)
            csv << (r + 1) << ',' << ranked[r].direction << ','
                << fmt_double(ranked[r].mean_delta) << '\n';
    }
    update_run_manifest(out_dir, "per-direction",
                        {std::string(kReportDir) + "/per_direction.csv"}, hash, cfg.ga.seed);
    return ranked;
}

}  // namespace adsee
