// evex: command-line front end for segmentation, single explanations,
// evolution runs and cross-seed analysis.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evex/evex.hpp"

namespace fs = std::filesystem;
using namespace evex;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kClassifier = 2, kIo = 3 };

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("evex");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("EVEX_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"; only honour it when asked for.
        if (level != spdlog::level::off || std::string(env) == "off")
            spdlog::set_level(level);
        else
            spdlog::warn("ignoring unknown EVEX_LOG level '{}'", env);
    }
}

void write_json(const fs::path& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(IoError::Kind::WriteFailed, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fixed2(double v)
{
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << std::fixed << std::setprecision(2) << v;
    return s.str();
}

struct ParamOptions {
    double scale = 100.0;
    double sigma = 0.5;
    double min_size = 50;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--scale", scale, "FHA scale in [1, 1000]")->capture_default_str();
        cmd->add_option("--sigma", sigma, "Gaussian pre-blur sigma in [0, 5]")->capture_default_str();
        cmd->add_option("--min-size", min_size, "minimum segment size in [15, 500]")->capture_default_str();
    }

    SegmentationParams params() const { return SegmentationParams::validated(scale, sigma, min_size); }
};

RunConfig config_or_default(const std::string& path)
{
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

std::unique_ptr<Classifier> open_classifier(const RunConfig& cfg)
{
    auto classifier = make_classifier(cfg.classifier);
    spdlog::info("classifier '{}' with {} classes", classifier->name(), classifier->class_count());
    if (cfg.target_class >= classifier->class_count())
        throw ValidationError("target_class " + std::to_string(cfg.target_class) + " is not below the classifier's " +
                              std::to_string(classifier->class_count()) + " classes");
    return classifier;
}

// ---------------------------------------------------------------------------

int cmd_init(const std::string& out, const std::string& image)
{
    RunConfig cfg;
    cfg.image = image;
    write_json(out.empty() ? fs::path("evex.json") : fs::path(out), to_json(cfg));
    return kOk;
}

int cmd_segment(const std::string& image_path, const ParamOptions& opts, const std::string& out)
{
    const auto params = opts.params();
    const auto image = load_png(image_path);
    const auto segmap = felzenszwalb(image, params);
    spdlog::info("{} segments", segmap.segment_count);
    const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    ensure_dir(dir);
    save_png(overlay_boundaries(image, segmap), dir / "overlay.png");
    save_segmap(segmap, dir / "segments.evexseg");
    return kOk;
}

int cmd_explain(const std::string& image_path, const ParamOptions& opts, const std::string& config_path,
                const std::vector<std::uint64_t>& seeds, HeatmapScale scale, const std::string& out)
{
    const auto params = opts.params();
    const auto cfg = config_or_default(config_path);
    if (seeds.size() > 1) throw ValidationError("explain takes a single --seed");
    const std::uint64_t seed = seeds.empty() ? cfg.seeds.front() : seeds.front();
    const auto image = load_png(image_path.empty() ? cfg.image : image_path);
    auto classifier = open_classifier(cfg);

    const auto segmap = felzenszwalb(image, params);
    const auto e = explain(image, segmap, *classifier, cfg.target_class, cfg.lime, seed);
    spdlog::info("{} segments, explanation score {:.4f}", segmap.segment_count, e.score);

    const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    ensure_dir(dir);
    save_grid(e.pixel_grid, dir / "explanation.evexmap");
    save_png(render_heatmap(e.pixel_grid, scale), dir / "heatmap.png");
    write_json(dir / "explanation.json", explanation_to_json(e, params, seed, "explanation.evexmap"));
    return kOk;
}

int cmd_evolve(const std::string& config_path, const std::string& image_path, const std::vector<std::uint64_t>& seeds,
               std::optional<int> jobs, HeatmapScale scale, const std::string& out)
{
    auto cfg = config_or_default(config_path);
    if (!image_path.empty()) cfg.image = image_path;
    if (!seeds.empty()) cfg.seeds = seeds;
    if (jobs) cfg.jobs = *jobs;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    if (cfg.image.empty()) throw ValidationError("no input image (set \"image\" in the config or pass --image)");

    // Everything that can fail cheaply is checked before any evolution work.
    const auto image = load_png(cfg.image);
    auto classifier = open_classifier(cfg);

    const fs::path root(cfg.output_dir);
    ensure_dir(root);
    write_json(root / "config.json", to_json(cfg));

    for (const auto seed : cfg.seeds) {
        auto ga = cfg.ga;
        ga.seed = seed;
        spdlog::info("seed {}: population {}, up to {} generations", seed, ga.population_size, ga.max_generations);
        EvolveOptions options;
        options.jobs = cfg.jobs;
        options.on_generation = [seed](const GenerationRecord& g) {
            spdlog::debug("seed {} gen {}: front {} hv {:.6f} archive {:.6f} evals {} stall {}", seed, g.generation,
                          g.front.size(), g.hypervolume, g.archive_hypervolume, g.evaluations, g.stall_counter);
        };
        auto result = evolve(image, *classifier, cfg.target_class, ga, cfg.lime, options);
        result.record.classifier = cfg.classifier;
        result.record.averaged_grid_path = "averaged.evexmap";

        const fs::path dir = root / ("seed-" + std::to_string(seed));
        ensure_dir(dir);
        std::vector<std::string> front_paths;
        for (std::size_t i = 0; i < result.front_grids.size(); ++i) {
            std::ostringstream name;
            name << "front_" << std::setw(2) << std::setfill('0') << i << ".evexmap";
            front_paths.push_back(name.str());
            save_grid(result.front_grids[i], dir / name.str());
        }
        save_grid(result.averaged_grid, dir / "averaged.evexmap");
        save_png(render_heatmap(result.averaged_grid, scale), dir / "averaged.png");
        write_text_file(dir / "hv.csv", hypervolume_csv(result.record));
        write_json(dir / "run_record.json", to_json(result.record, front_paths));
        const auto& last = result.record.generations.back();
        spdlog::info("seed {}: {} after generation {}, front {}, hv {:.6f}, {} evaluations", seed,
                     to_string(result.record.termination), last.generation, result.record.final_front.size(),
                     last.hypervolume, result.record.total_evaluations);
    }
    return kOk;
}

int cmd_rsd(const std::vector<std::string>& record_paths, double threshold, const std::vector<double>& sweep,
            const std::string& out)
{
    if (record_paths.size() < 2) throw ValidationError("rsd needs run records from at least 2 seeds");
    HeatMapStack stack;
    for (const auto& p : record_paths) {
        const auto record = load_run_record(p);
        const auto grid = load_grid(fs::path(p).parent_path() / record.averaged_grid_path);
        if (grid.width() != record.image_width || grid.height() != record.image_height)
            throw ValidationError(p + ": averaged grid does not match the recorded image size");
        if (!stack.grids.empty() && !grid.same_shape(stack.grids.front()))
            throw ValidationError(p + ": image dimensions differ from the first record");
        stack.grids.push_back(grid);
        stack.labels.push_back("seed-" + std::to_string(record.seed));
    }

    const auto report = pixel_rsd(stack, threshold);
    const auto curve = threshold_sweep(stack, sweep);
    const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    ensure_dir(dir);
    save_grid(report.sd, dir / "sd.evexmap");
    save_grid(report.mean, dir / "mean.evexmap");
    save_grid(report.rsd, dir / "rsd.evexmap");
    save_png(render_grayscale(report.sd, 1.0), dir / "sd.png");
    save_png(render_grayscale(pixel_rsd(stack, 0.0).rsd, 1.0), dir / "rsd.png");
    save_png(render_grayscale(report.rsd, 1.0, report.excluded), dir / "rsd_thresholded.png");
    save_png(render_heatmap(report.mean, HeatmapScale::Fixed), dir / "mean.png");
    for (double t : sweep) {
        const auto r = pixel_rsd(stack, t);
        save_png(render_grayscale(r.rsd, 1.0, r.excluded), dir / ("rsd_thresholded_" + fixed2(t) + ".png"));
    }
    write_json(dir / "rsd_report.json", to_json(report, stack.labels));
    write_text_file(dir / "sweep.csv", sweep_csv(curve));
    spdlog::info("max RSD {:.4f} at threshold {}, {:.1f}% excluded", report.max_rsd, threshold,
                 100.0 * report.excluded_fraction);
    return kOk;
}

int cmd_hv_curve(const std::string& record_path, const std::string& out)
{
    const auto record = load_run_record(record_path);
    if (record.generations.empty()) throw ValidationError(record_path + ": run record has no generations");
    for (std::size_t i = 1; i < record.generations.size(); ++i)
        if (record.generations[i].archive_hypervolume < record.generations[i - 1].archive_hypervolume)
            throw ValidationError(record_path + ": archive hypervolume decreases at generation " +
                                  std::to_string(record.generations[i].generation));
    const fs::path target = out.empty() ? fs::path(record_path).parent_path() / "hv_curve.csv" : fs::path(out);
    write_text_file(target, hypervolume_curve_csv(record));
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"evex: evolved segmentation parameters for perturbation explanations"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string image_path;
    std::vector<std::uint64_t> seeds;
    std::optional<int> jobs;
    ParamOptions param_opts;
    std::vector<std::string> records;
    std::string record;
    double threshold = 0.5;
    std::vector<double> sweep{0.1, 0.3, 0.5, 0.8};
    // "fixed" maps weights in [-1, 1] onto the colour ramp; "auto" divides by the largest |weight|.
    const std::map<std::string, HeatmapScale> scale_names{{"fixed", HeatmapScale::Fixed}, {"auto", HeatmapScale::Auto}};
    HeatmapScale heatmap_scale = HeatmapScale::Fixed;

    auto* init = app.add_subcommand("init", "write a configuration file with every default filled in");
    init->add_option("--out", out, "config file to write (default evex.json)");
    init->add_option("--image", image_path, "input image to record in the config");

    auto* segment = app.add_subcommand("segment", "segment an image and write a boundary overlay");
    segment->add_option("image", image_path, "input PNG")->required();
    param_opts.add_to(segment);
    segment->add_option("--out", out, "output directory");

    auto* expl = app.add_subcommand("explain", "one perturbation explanation for fixed segmentation parameters");
    expl->add_option("image", image_path, "input PNG (defaults to the config's image)");
    param_opts.add_to(expl);
    expl->add_option("--config", config_path, "run configuration (classifier, target class, LIME settings)");
    expl->add_option("--seed", seeds, "perturbation seed");
    expl->add_option("--heatmap-scale", heatmap_scale, "fixed or auto colour normalization")
        ->transform(CLI::CheckedTransformer(scale_names, CLI::ignore_case))
        ->option_text("fixed|auto");
    expl->add_option("--out", out, "output directory");

    auto* evo = app.add_subcommand("evolve", "evolve segmentation parameters, one run per seed");
    evo->add_option("--config", config_path, "run configuration");
    evo->add_option("--image", image_path, "override the config's input image");
    evo->add_option("--seed", seeds, "seed (repeatable; replaces the config's list)");
    evo->add_option("--jobs", jobs, "worker threads for fitness evaluation")->check(CLI::PositiveNumber);
    evo->add_option("--heatmap-scale", heatmap_scale, "fixed or auto colour normalization of averaged.png")
        ->transform(CLI::CheckedTransformer(scale_names, CLI::ignore_case))
        ->option_text("fixed|auto");
    evo->add_option("--out", out, "output directory (overrides the config)");

    auto* rsd = app.add_subcommand("rsd", "cross-seed SD / RSD analysis of averaged explanations");
    rsd->add_option("records", records, "run_record.json files, one per seed")->required();
    rsd->add_option("--threshold", threshold, "exclude pixels whose |mean| is below this")->capture_default_str();
    rsd->add_option("--sweep", sweep, "ascending thresholds for the sweep CSV")->delimiter(',');
    rsd->add_option("--out", out, "output directory");

    auto* hv = app.add_subcommand("hv-curve", "per-generation hypervolume CSV from a run record");
    hv->add_option("record", record, "run_record.json")->required();
    hv->add_option("--out", out, "CSV file (default: hv_curve.csv beside the record)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        if (*init) return cmd_init(out, image_path);
        if (*segment) return cmd_segment(image_path, param_opts, out);
        if (*expl) return cmd_explain(image_path, param_opts, config_path, seeds, heatmap_scale, out);
        if (*evo) return cmd_evolve(config_path, image_path, seeds, jobs, heatmap_scale, out);
        if (*rsd) return cmd_rsd(records, threshold, sweep, out);
        if (*hv) return cmd_hv_curve(record, out);
    } catch (const ClassifierError& e) {
        spdlog::error("classifier failure: {}", e.what());
        return kClassifier;
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return kIo;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        spdlog::error("unexpected failure: {}", e.what());
        return kValidation;
    }
    return kValidation;
}
