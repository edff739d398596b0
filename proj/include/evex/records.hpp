#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evex/analysis.hpp"
#include "evex/classifier.hpp"
#include "evex/evolution.hpp"
#include "evex/io.hpp"
#include "evex/lime.hpp"

namespace evex {

using ordered_json = nlohmann::ordered_json;

/// Everything needed to replay an evolution across seeds.
struct RunConfig {
    std::string image;
    ClassifierSpec classifier;
    int target_class = 1;
    GAConfig ga;
    LimeConfig lime;
    std::vector<std::uint64_t> seeds{42, 43, 44, 45};
    std::string output_dir = "evex-out";
    int jobs = 1;

    void validate() const
    {
        ga.validate();
        lime.validate();
        if (seeds.empty()) throw ValidationError("at least one seed is required");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw ValidationError("seeds must be distinct");
        if (target_class < 0) throw ValidationError("target_class must be >= 0");
        if (jobs < 1) throw ValidationError("jobs must be >= 1");
    }
};

namespace detail {

template <typename Json>
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& context)
{
    if (!j.is_object()) throw ValidationError(context + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ValidationError("unknown key '" + it.key() + "' in " + context);
    }
}

template <typename T, typename Json>
T get_or(const Json& j, const char* key, T fallback, const std::string& context)
{
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(context + "." + key + " has the wrong type");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Config pieces

inline const char* to_string(ClassifierKind k)
{
    switch (k) {
    case ClassifierKind::BuiltinBlob: return "builtin-blob";
    case ClassifierKind::BuiltinConstant: return "builtin-constant";
    case ClassifierKind::External: return "external";
    }
    return "unknown";
}

inline ClassifierKind parse_classifier_kind(const std::string& s)
{
    if (s == "builtin-blob") return ClassifierKind::BuiltinBlob;
    if (s == "builtin-constant") return ClassifierKind::BuiltinConstant;
    if (s == "external") return ClassifierKind::External;
    throw ValidationError("unknown classifier kind '" + s + "'");
}

inline ordered_json params_to_json(const SegmentationParams& p)
{
    return {{"scale", p.scale()}, {"sigma", p.sigma()}, {"min_size", p.min_size()}};
}

template <typename Json>
SegmentationParams params_from_json(const Json& j)
{
    detail::check_keys(j, {"scale", "sigma", "min_size"}, "params");
    return SegmentationParams::validated(j.at("scale").template get<double>(), j.at("sigma").template get<double>(),
                                         j.at("min_size").template get<double>());
}

inline ordered_json to_json(const LimeConfig& c)
{
    return {{"n_samples", c.n_samples},
            {"kernel_width", c.kernel_width},
            {"ridge_alpha", c.ridge_alpha},
            {"mask_fill", {c.mask_fill.r, c.mask_fill.g, c.mask_fill.b}}};
}

template <typename Json>
LimeConfig lime_from_json(const Json& j)
{
    detail::check_keys(j, {"n_samples", "kernel_width", "ridge_alpha", "mask_fill"}, "lime");
    LimeConfig c;
    c.n_samples = detail::get_or(j, "n_samples", c.n_samples, "lime");
    c.kernel_width = detail::get_or(j, "kernel_width", c.kernel_width, "lime");
    c.ridge_alpha = detail::get_or(j, "ridge_alpha", c.ridge_alpha, "lime");
    if (const auto it = j.find("mask_fill"); it != j.end()) {
        const auto rgb = it->template get<std::vector<int>>();
        if (rgb.size() != 3 || std::any_of(rgb.begin(), rgb.end(), [](int v) { return v < 0 || v > 255; }))
            throw ValidationError("lime.mask_fill must be three integers in [0, 255]");
        c.mask_fill = {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                       static_cast<std::uint8_t>(rgb[2])};
    }
    c.validate();
    return c;
}

inline ordered_json to_json(const GAConfig& c)
{
    return {{"population_size", c.population_size},
            {"max_generations", c.max_generations},
            {"cxpb", c.cxpb},
            {"mutpb", c.mutpb},
            {"indpb_crossover", c.indpb_crossover},
            {"indpb_mutation", c.indpb_mutation},
            {"scale_mutation_sigma", c.scale_mutation_sigma},
            {"sigma_mutation_sigma", c.sigma_mutation_sigma},
            {"min_size_mutation_range", {c.min_size_mutation_low, c.min_size_mutation_high}},
            {"patience", c.patience},
            {"seed", c.seed}};
}

template <typename Json>
GAConfig ga_from_json(const Json& j)
{
    detail::check_keys(j,
                       {"population_size", "max_generations", "cxpb", "mutpb", "indpb_crossover", "indpb_mutation",
                        "scale_mutation_sigma", "sigma_mutation_sigma", "min_size_mutation_range", "patience", "seed"},
                       "ga");
    GAConfig c;
    c.population_size = detail::get_or(j, "population_size", c.population_size, "ga");
    c.max_generations = detail::get_or(j, "max_generations", c.max_generations, "ga");
    c.cxpb = detail::get_or(j, "cxpb", c.cxpb, "ga");
    c.mutpb = detail::get_or(j, "mutpb", c.mutpb, "ga");
    c.indpb_crossover = detail::get_or(j, "indpb_crossover", c.indpb_crossover, "ga");
    c.indpb_mutation = detail::get_or(j, "indpb_mutation", c.indpb_mutation, "ga");
    c.scale_mutation_sigma = detail::get_or(j, "scale_mutation_sigma", c.scale_mutation_sigma, "ga");
    c.sigma_mutation_sigma = detail::get_or(j, "sigma_mutation_sigma", c.sigma_mutation_sigma, "ga");
    if (const auto it = j.find("min_size_mutation_range"); it != j.end()) {
        const auto range = it->template get<std::vector<int>>();
        if (range.size() != 2) throw ValidationError("ga.min_size_mutation_range must be [low, high]");
        c.min_size_mutation_low = range[0];
        c.min_size_mutation_high = range[1];
    }
    c.patience = detail::get_or(j, "patience", c.patience, "ga");
    c.seed = detail::get_or(j, "seed", c.seed, "ga");
    c.validate();
    return c;
}

inline ordered_json to_json(const ClassifierSpec& s)
{
    return {{"kind", to_string(s.kind)},
            {"class_count", s.class_count},
            {"blob",
             {{"region_width", s.blob.region_width},
              {"region_height", s.blob.region_height},
              {"green_margin", s.blob.green_margin},
              {"gain", s.blob.gain},
              {"offset", s.blob.offset}}},
            {"constant", {{"p1", s.constant.p1}}},
            {"external", {{"command", s.external.command}, {"timeout_seconds", s.external.timeout_seconds}}}};
}

template <typename Json>
ClassifierSpec classifier_from_json(const Json& j)
{
    detail::check_keys(j, {"kind", "class_count", "blob", "constant", "external"}, "classifier");
    ClassifierSpec s;
    s.kind = parse_classifier_kind(detail::get_or<std::string>(j, "kind", "builtin-blob", "classifier"));
    s.class_count = detail::get_or(j, "class_count", s.kind == ClassifierKind::External ? 0 : 2, "classifier");
    if (const auto b = j.find("blob"); b != j.end()) {
        detail::check_keys(*b, {"region_width", "region_height", "green_margin", "gain", "offset"}, "classifier.blob");
        s.blob.region_width = detail::get_or(*b, "region_width", s.blob.region_width, "classifier.blob");
        s.blob.region_height = detail::get_or(*b, "region_height", s.blob.region_height, "classifier.blob");
        s.blob.green_margin = detail::get_or(*b, "green_margin", s.blob.green_margin, "classifier.blob");
        s.blob.gain = detail::get_or(*b, "gain", s.blob.gain, "classifier.blob");
        s.blob.offset = detail::get_or(*b, "offset", s.blob.offset, "classifier.blob");
    }
    if (const auto c = j.find("constant"); c != j.end()) {
        detail::check_keys(*c, {"p1"}, "classifier.constant");
        s.constant.p1 = detail::get_or(*c, "p1", s.constant.p1, "classifier.constant");
    }
    if (const auto e = j.find("external"); e != j.end()) {
        detail::check_keys(*e, {"command", "timeout_seconds"}, "classifier.external");
        s.external.command = detail::get_or(*e, "command", s.external.command, "classifier.external");
        s.external.timeout_seconds =
            detail::get_or(*e, "timeout_seconds", s.external.timeout_seconds, "classifier.external");
    }
    if (s.kind == ClassifierKind::External && s.external.command.empty())
        throw ValidationError("classifier.external.command must name a program");
    if (s.class_count < 0 || s.class_count == 1) throw ValidationError("classifier.class_count must be >= 2");
    return s;
}

inline ordered_json to_json(const RunConfig& c)
{
    return {{"image", c.image},
            {"classifier", to_json(c.classifier)},
            {"target_class", c.target_class},
            {"ga", to_json(c.ga)},
            {"lime", to_json(c.lime)},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir},
            {"jobs", c.jobs}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    detail::check_keys(j, {"image", "classifier", "target_class", "ga", "lime", "seeds", "output_dir", "jobs"},
                       "config");
    RunConfig c;
    c.image = detail::get_or(j, "image", c.image, "config");
    if (const auto it = j.find("classifier"); it != j.end()) c.classifier = classifier_from_json(*it);
    c.target_class = detail::get_or(j, "target_class", c.target_class, "config");
    if (const auto it = j.find("ga"); it != j.end()) c.ga = ga_from_json(*it);
    if (const auto it = j.find("lime"); it != j.end()) c.lime = lime_from_json(*it);
    c.seeds = detail::get_or(j, "seeds", c.seeds, "config");
    c.output_dir = detail::get_or(j, "output_dir", c.output_dir, "config");
    c.jobs = detail::get_or(j, "jobs", c.jobs, "config");
    c.validate();
    return c;
}

inline RunConfig load_run_config(const fs::path& path)
{
    const auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": not valid JSON");
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Run records

inline ordered_json to_json(const EvaluatedIndividual& ind)
{
    return {{"genome", params_to_json(ind.genome)}, {"goals", ind.goals}};
}

template <typename Json>
EvaluatedIndividual individual_from_json(const Json& j)
{
    EvaluatedIndividual ind;
    ind.genome = params_from_json(j.at("genome"));
    ind.goals = j.at("goals").template get<GoalVector>();
    return ind;
}

inline ordered_json to_json(const RunRecord& r, const std::vector<std::string>& front_grid_paths = {})
{
    ordered_json gens = ordered_json::array();
    for (const auto& g : r.generations) {
        ordered_json front = ordered_json::array();
        for (const auto& m : g.front) front.push_back(to_json(m));
        gens.push_back({{"generation", g.generation},
                        {"hypervolume", g.hypervolume},
                        {"archive_hypervolume", g.archive_hypervolume},
                        {"front_size", g.front.size()},
                        {"evaluations", g.evaluations},
                        {"stall_counter", g.stall_counter},
                        {"front", std::move(front)}});
    }
    ordered_json final_front = ordered_json::array();
    for (const auto& m : r.final_front) final_front.push_back(to_json(m));
    return {{"format", "evex-run-record"},
            {"version", 1},
            {"seed", r.seed},
            {"image", {{"width", r.image_width}, {"height", r.image_height}}},
            {"classifier", to_json(r.classifier)},
            {"classifier_name", r.classifier_name},
            {"target_class", r.target_class},
            {"ga", to_json(r.ga)},
            {"lime", to_json(r.lime)},
            {"sd_convention", "population"},
            {"termination", to_string(r.termination)},
            {"total_evaluations", r.total_evaluations},
            {"generations", std::move(gens)},
            {"final_front", std::move(final_front)},
            {"averaged_grid_path", r.averaged_grid_path},
            {"front_grid_paths", front_grid_paths}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != "evex-run-record" || j.value("version", 0) != 1)
        throw ValidationError("not an evex run record (format/version mismatch)");
    try {
        RunRecord r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.image_width = j.at("image").at("width").get<int>();
        r.image_height = j.at("image").at("height").get<int>();
        r.classifier = classifier_from_json(j.at("classifier"));
        r.classifier_name = j.at("classifier_name").get<std::string>();
        r.target_class = j.at("target_class").get<int>();
        r.ga = ga_from_json(j.at("ga"));
        r.lime = lime_from_json(j.at("lime"));
        const auto term = j.at("termination").get<std::string>();
        if (term != "early-stop" && term != "max-generations") throw ValidationError("unknown termination '" + term + "'");
        r.termination = term == "early-stop" ? Termination::EarlyStop : Termination::MaxGenerations;
        r.total_evaluations = j.at("total_evaluations").get<std::size_t>();
        for (const auto& g : j.at("generations")) {
            GenerationRecord gen;
            gen.generation = g.at("generation").get<int>();
            gen.hypervolume = g.at("hypervolume").get<double>();
            gen.archive_hypervolume = g.at("archive_hypervolume").get<double>();
            gen.evaluations = g.at("evaluations").get<std::size_t>();
            gen.stall_counter = g.at("stall_counter").get<int>();
            for (const auto& m : g.at("front")) gen.front.push_back(individual_from_json(m));
            r.generations.push_back(std::move(gen));
        }
        for (const auto& m : j.at("final_front")) r.final_front.push_back(individual_from_json(m));
        r.averaged_grid_path = j.at("averaged_grid_path").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed run record: ") + e.what());
    }
}

inline RunRecord load_run_record(const fs::path& path)
{
    const auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": not valid JSON");
    return run_record_from_json(j);
}

/// "generation,hypervolume,front_size,evaluations"
inline std::string hypervolume_csv(const RunRecord& r)
{
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17) << "generation,hypervolume,front_size,evaluations\n";
    for (const auto& g : r.generations)
        out << g.generation << ',' << g.hypervolume << ',' << g.front.size() << ',' << g.evaluations << '\n';
    return out.str();
}

/// The per-generation curve with the cumulative-archive column appended.
inline std::string hypervolume_curve_csv(const RunRecord& r)
{
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17) << "generation,hypervolume,front_size,evaluations,archive_hypervolume\n";
    for (const auto& g : r.generations)
        out << g.generation << ',' << g.hypervolume << ',' << g.front.size() << ',' << g.evaluations << ','
            << g.archive_hypervolume << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Explanations and RSD reports

inline ordered_json explanation_to_json(const Explanation& e, const SegmentationParams& params, std::uint64_t seed,
                                        const std::string& pixel_grid_path)
{
    const auto g = goals(e);
    return {{"params", params_to_json(params)},
            {"seed", seed},
            {"score", e.score},
            {"r2", e.r2},
            {"intercept", e.intercept},
            {"weights", e.weights},
            {"argmax_segment", most_relevant_segment(e)},
            {"goal_vector", g},
            {"pixel_grid_path", pixel_grid_path}};
}

inline ordered_json to_json(const RSDReport& r, const std::vector<std::string>& labels)
{
    return {{"threshold", r.threshold},
            {"max_rsd", r.max_rsd},
            {"excluded_fraction", r.excluded_fraction},
            {"sd_convention", "population"},
            {"seeds", labels},
            {"sd_grid_path", "sd.evexmap"},
            {"mean_grid_path", "mean.evexmap"},
            {"rsd_grid_path", "rsd.evexmap"}};
}

/// "threshold,max_rsd,excluded_fraction"
inline std::string sweep_csv(std::span<const SweepPoint> sweep)
{
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17) << "threshold,max_rsd,excluded_fraction\n";
    for (const auto& p : sweep) out << p.threshold << ',' << p.max_rsd << ',' << p.excluded_fraction << '\n';
    return out.str();
}

} // namespace evex
