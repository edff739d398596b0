#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "evex/classifier.hpp"
#include "evex/hypervolume.hpp"
#include "evex/image.hpp"
#include "evex/lime.hpp"
#include "evex/pareto.hpp"
#include "evex/random.hpp"
#include "evex/segmentation.hpp"

namespace evex {

struct GAConfig {
    int population_size = 80;
    int max_generations = 200;
    double cxpb = 0.5;
    double mutpb = 0.2;
    double indpb_crossover = 0.2;
    double indpb_mutation = 0.2;
    double scale_mutation_sigma = 10.0;
    double sigma_mutation_sigma = 0.05;
    int min_size_mutation_low = 15;
    int min_size_mutation_high = 500;
    int patience = 70;
    std::uint64_t seed = 42;

    void validate() const
    {
        auto probability = [](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must be in [0, 1]");
        };
        probability(cxpb, "cxpb");
        probability(mutpb, "mutpb");
        probability(indpb_crossover, "indpb_crossover");
        probability(indpb_mutation, "indpb_mutation");
        if (population_size < 2) throw ValidationError("population_size must be >= 2");
        if (max_generations < 0) throw ValidationError("max_generations must be >= 0");
        if (patience < 1) throw ValidationError("patience must be >= 1");
        if (!(scale_mutation_sigma >= 0.0) || !(sigma_mutation_sigma >= 0.0))
            throw ValidationError("mutation standard deviations must be >= 0");
        if (min_size_mutation_low > min_size_mutation_high)
            throw ValidationError("min_size mutation range is empty");
    }

    friend bool operator==(const GAConfig&, const GAConfig&) = default;
};

struct EvaluatedIndividual {
    SegmentationParams genome;
    GoalVector goals{};

    friend bool operator==(const EvaluatedIndividual&, const EvaluatedIndividual&) = default;
};

// ---------------------------------------------------------------------------
// Fitness

/// Uncached fitness of one genome. Fewer than two segments yields the (1,1,1) penalty.
inline GoalVector evaluate_genome(const SegmentationParams& genome, const Image& image, Classifier& classifier,
                                  int target_class, const LimeConfig& lime, std::uint64_t run_seed)
{
    const auto segmap = felzenszwalb(image, genome);
    if (segmap.segment_count < 2) return kPenaltyGoals;
    return goals(explain(image, segmap, classifier, target_class, lime, run_seed));
}

/// The explanation behind a genome's fitness; an all-zero grid for degenerate segmentations.
inline FloatGrid genome_explanation_grid(const SegmentationParams& genome, const Image& image, Classifier& classifier,
                                         int target_class, const LimeConfig& lime, std::uint64_t run_seed)
{
    const auto segmap = felzenszwalb(image, genome);
    if (segmap.segment_count < 2) return FloatGrid(image.width(), image.height());
    return explain(image, segmap, classifier, target_class, lime, run_seed).pixel_grid;
}

/**
 * Memoized fitness for one run. Equal quantized genomes always map to the
 * same goals; the first caller for a key computes it and concurrent callers
 * wait on the same shared future.
 */
class FitnessCache {
public:
    FitnessCache(const Image& image, Classifier& classifier, int target_class, LimeConfig lime, std::uint64_t run_seed)
        : image_(image), classifier_(classifier), target_class_(target_class), lime_(lime), run_seed_(run_seed)
    {
        lime_.validate();
        if (target_class < 0 || target_class >= classifier.class_count())
            throw ValidationError("target class " + std::to_string(target_class) + " outside [0, " +
                                  std::to_string(classifier.class_count()) + ")");
    }

    GoalVector evaluate(const SegmentationParams& genome)
    {
        std::shared_future<GoalVector> result;
        std::promise<GoalVector> promise;
        bool owner = false;
        {
            std::lock_guard lock(mutex_);
            auto [it, inserted] = cache_.try_emplace(genome.key());
            if (inserted) {
                it->second = promise.get_future().share();
                owner = true;
            }
            result = it->second;
        }
        if (owner) {
            try {
                promise.set_value(evaluate_genome(genome, image_, classifier_, target_class_, lime_, run_seed_));
            } catch (...) {
                promise.set_exception(std::current_exception());
            }
        }
        return result.get();
    }

    /// Evaluates every genome not yet cached, on up to `jobs` threads.
    void evaluate_all(std::span<const SegmentationParams> genomes, int jobs)
    {
        std::vector<SegmentationParams> pending;
        {
            std::lock_guard lock(mutex_);
            std::set<SegmentationParams::Key> seen;
            for (const auto& g : genomes)
                if (!cache_.contains(g.key()) && seen.insert(g.key()).second) pending.push_back(g);
        }
        const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(pending.size(), 1))));
        if (workers <= 1) {
            for (const auto& g : pending) evaluate(g);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> threads;
            for (std::size_t t = 0; t < workers; ++t) {
                threads.emplace_back([&, t] {
                    try {
                        for (std::size_t i = next++; i < pending.size(); i = next++) evaluate(pending[i]);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            }
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    /// Distinct genomes evaluated so far.
    std::size_t evaluations() const
    {
        std::lock_guard lock(mutex_);
        return cache_.size();
    }

    const Image& image() const noexcept { return image_; }
    Classifier& classifier() const noexcept { return classifier_; }
    int target_class() const noexcept { return target_class_; }
    const LimeConfig& lime() const noexcept { return lime_; }
    std::uint64_t run_seed() const noexcept { return run_seed_; }

private:
    const Image& image_;
    Classifier& classifier_;
    int target_class_;
    LimeConfig lime_;
    std::uint64_t run_seed_;
    mutable std::mutex mutex_;
    std::map<SegmentationParams::Key, std::shared_future<GoalVector>> cache_;
};

// ---------------------------------------------------------------------------
// Variation

inline SegmentationParams random_genome(SplitMix64& rng)
{
    const double scale = rng.uniform(SegmentationParams::kScaleMin, SegmentationParams::kScaleMax);
    const double sigma = rng.uniform(SegmentationParams::kSigmaMin, SegmentationParams::kSigmaMax);
    const auto min_size = rng.uniform_int(SegmentationParams::kMinSizeMin, SegmentationParams::kMinSizeMax);
    return SegmentationParams::clamped(scale, sigma, static_cast<double>(min_size));
}

/**
 * Uniform crossover on consecutive pairs, then per-gene mutation:
 * scale += N(0, 10), sigma += N(0, 0.05), min_size <- U{15..500}.
 * Offspring are clamped and quantized back into the gene ranges.
 */
inline std::vector<SegmentationParams> vary(std::span<const SegmentationParams> parents, const GAConfig& cfg,
                                            SplitMix64& rng)
{
    struct Genes {
        std::array<double, 3> v;
    };
    std::vector<Genes> genes;
    genes.reserve(parents.size());
    for (const auto& p : parents) genes.push_back({{p.scale(), p.sigma(), static_cast<double>(p.min_size())}});

    for (std::size_t i = 1; i < genes.size(); i += 2) {
        if (rng.uniform01() < cfg.cxpb) {
            for (std::size_t g = 0; g < 3; ++g)
                if (rng.uniform01() < cfg.indpb_crossover) std::swap(genes[i - 1].v[g], genes[i].v[g]);
        }
    }
    for (auto& ind : genes) {
        if (!(rng.uniform01() < cfg.mutpb)) continue;
        if (rng.uniform01() < cfg.indpb_mutation) ind.v[0] += rng.normal(0.0, cfg.scale_mutation_sigma);
        if (rng.uniform01() < cfg.indpb_mutation) ind.v[1] += rng.normal(0.0, cfg.sigma_mutation_sigma);
        if (rng.uniform01() < cfg.indpb_mutation)
            ind.v[2] = static_cast<double>(rng.uniform_int(cfg.min_size_mutation_low, cfg.min_size_mutation_high));
    }

    std::vector<SegmentationParams> offspring;
    offspring.reserve(genes.size());
    for (const auto& ind : genes) offspring.push_back(SegmentationParams::clamped(ind.v[0], ind.v[1], ind.v[2]));
    return offspring;
}

// ---------------------------------------------------------------------------
// Selection

struct RankCrowding {
    std::vector<std::size_t> rank;
    std::vector<double> crowding;
};

inline RankCrowding rank_and_crowding(std::span<const GoalVector> goals)
{
    const auto fronts = non_dominated_sort<3>(goals);
    RankCrowding rc{front_ranks(fronts, goals.size()), std::vector<double>(goals.size(), 0.0)};
    for (const auto& front : fronts) {
        std::vector<GoalVector> members;
        for (std::size_t i : front) members.push_back(goals[i]);
        const auto d = crowding_distance<3>(members);
        for (std::size_t j = 0; j < front.size(); ++j) rc.crowding[front[j]] = d[j];
    }
    return rc;
}

/// Binary tournaments on (lower rank, then larger crowding, then first drawn).
inline std::vector<std::size_t> tournament_select(const RankCrowding& rc, std::size_t count, SplitMix64& rng)
{
    const auto n = static_cast<std::int64_t>(rc.rank.size());
    std::vector<std::size_t> winners;
    winners.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto a = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
        const auto b = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
        bool pick_b = rc.rank[b] < rc.rank[a] || (rc.rank[b] == rc.rank[a] && rc.crowding[b] > rc.crowding[a]);
        winners.push_back(pick_b ? b : a);
    }
    return winners;
}

/// NSGA-II environmental selection: whole fronts, then the last front by descending crowding.
inline std::vector<std::size_t> environmental_select(std::span<const GoalVector> goals, std::size_t mu)
{
    const auto fronts = non_dominated_sort<3>(goals);
    std::vector<std::size_t> chosen;
    chosen.reserve(mu);
    for (const auto& front : fronts) {
        if (chosen.size() + front.size() <= mu) {
            chosen.insert(chosen.end(), front.begin(), front.end());
            if (chosen.size() == mu) break;
            continue;
        }
        std::vector<GoalVector> members;
        for (std::size_t i : front) members.push_back(goals[i]);
        const auto d = crowding_distance<3>(members);
        std::vector<std::size_t> order(front.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
        for (std::size_t j = 0; chosen.size() < mu; ++j) chosen.push_back(front[order[j]]);
        break;
    }
    return chosen;
}

// ---------------------------------------------------------------------------
// Early stopping

using CanonicalFront = std::vector<std::array<std::int64_t, 3>>;

/// Goal vectors quantized to 6 decimals, sorted, duplicates removed.
inline CanonicalFront canonical_front(std::span<const GoalVector> front)
{
    CanonicalFront out;
    out.reserve(front.size());
    for (const auto& g : front)
        out.push_back({std::llround(g[0] * 1e6), std::llround(g[1] * 1e6), std::llround(g[2] * 1e6)});
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/**
 * Counts consecutive generations whose front was already seen. A novel
 * front resets the counter to 0 and is remembered; the run stops once the
 * counter reaches `patience`.
 */
class EarlyStop {
public:
    explicit EarlyStop(int patience) : patience_(patience)
    {
        if (patience < 1) throw ValidationError("patience must be >= 1");
    }

    /// Returns true when the run should stop.
    bool update(std::span<const GoalVector> front)
    {
        if (seen_.insert(canonical_front(front)).second)
            counter_ = 0;
        else
            ++counter_;
        return counter_ >= patience_;
    }

    int counter() const noexcept { return counter_; }
    std::size_t fronts_seen() const noexcept { return seen_.size(); }

private:
    int patience_;
    int counter_ = 0;
    std::set<CanonicalFront> seen_;
};

// ---------------------------------------------------------------------------
// Evolution

enum class Termination { MaxGenerations, EarlyStop };

inline const char* to_string(Termination t) { return t == Termination::EarlyStop ? "early-stop" : "max-generations"; }

struct GenerationRecord {
    int generation = 0;
    /// Unique genomes of the population's first front, in population order.
    std::vector<EvaluatedIndividual> front;
    double hypervolume = 0.0;
    /// Hypervolume of every goal vector evaluated so far.
    double archive_hypervolume = 0.0;
    /// Distinct genomes evaluated up to and including this generation.
    std::size_t evaluations = 0;
    int stall_counter = 0;

    friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

struct RunRecord {
    GAConfig ga;
    LimeConfig lime;
    ClassifierSpec classifier;
    std::string classifier_name;
    int target_class = 1;
    int image_width = 0;
    int image_height = 0;
    std::uint64_t seed = 0;
    std::vector<GenerationRecord> generations;
    std::size_t total_evaluations = 0;
    Termination termination = Termination::MaxGenerations;
    std::vector<EvaluatedIndividual> final_front;
    std::string averaged_grid_path;
};

struct EvolutionResult {
    RunRecord record;
    /// Pixel-wise mean of the final-front explanation grids.
    FloatGrid averaged_grid{1, 1};
    /// One grid per final-front member, same order as record.final_front.
    std::vector<FloatGrid> front_grids;
};

struct EvolveOptions {
    int jobs = 1;
    std::function<void(const GenerationRecord&)> on_generation;
};

namespace detail {

inline std::vector<EvaluatedIndividual> unique_front(std::span<const SegmentationParams> pop,
                                                     std::span<const GoalVector> goals)
{
    const auto fronts = non_dominated_sort<3>(goals);
    std::vector<EvaluatedIndividual> out;
    std::set<SegmentationParams::Key> seen;
    for (std::size_t i : fronts.front())
        if (seen.insert(pop[i].key()).second) out.push_back({pop[i], goals[i]});
    return out;
}

inline std::vector<GoalVector> nondominated_points(std::span<const GoalVector> points)
{
    std::vector<GoalVector> out;
    for (const auto& p : points) {
        if (std::any_of(out.begin(), out.end(), [&](const GoalVector& q) { return dominates(q, p) || q == p; }))
            continue;
        std::erase_if(out, [&](const GoalVector& q) { return dominates(p, q); });
        out.push_back(p);
    }
    return out;
}

/// Pixel-wise arithmetic mean.
inline FloatGrid mean_grid(std::span<const FloatGrid> grids)
{
    FloatGrid mean(grids.front().width(), grids.front().height());
    for (const auto& g : grids)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
    for (auto& v : mean.values()) v /= static_cast<double>(grids.size());
    return mean;
}

} // namespace detail

/// The GA master stream is separated from the perturbation stream of the same seed.
inline SplitMix64 master_rng(std::uint64_t seed) { return SplitMix64(splitmix64_mix(seed ^ 0x6A09E667F3BCC909ULL)); }

/**
 * NSGA-II over segmentation genomes: uniform random initial population,
 * binary tournament on (rank, crowding), uniform crossover and per-gene
 * mutation, (mu + lambda) environmental selection. Stops after
 * max_generations or once `patience` consecutive generations bring no novel
 * front. The result averages the explanations of the final front.
 */
inline EvolutionResult evolve(const Image& image, Classifier& classifier, int target_class, const GAConfig& ga,
                              const LimeConfig& lime, const EvolveOptions& options = {})
{
    ga.validate();
    FitnessCache cache(image, classifier, target_class, lime, ga.seed);
    SplitMix64 rng = master_rng(ga.seed);
    const auto mu = static_cast<std::size_t>(ga.population_size);

    EvolutionResult result;
    RunRecord& record = result.record;
    record.ga = ga;
    record.lime = lime;
    record.classifier_name = classifier.name();
    record.target_class = target_class;
    record.image_width = image.width();
    record.image_height = image.height();
    record.seed = ga.seed;

    std::vector<SegmentationParams> population;
    population.reserve(mu);
    for (std::size_t i = 0; i < mu; ++i) population.push_back(random_genome(rng));
    cache.evaluate_all(population, options.jobs);
    std::vector<GoalVector> goals_of;
    for (const auto& g : population) goals_of.push_back(cache.evaluate(g));

    EarlyStop stopper(ga.patience);
    std::vector<GoalVector> archive;
    double archive_hv = 0.0;
    std::set<SegmentationParams::Key> archived;

    auto record_generation = [&](int generation, std::span<const SegmentationParams> evaluated) {
        for (const auto& g : evaluated)
            if (archived.insert(g.key()).second) archive.push_back(cache.evaluate(g));
        archive = detail::nondominated_points(archive);
        // Mathematically monotone; the running max absorbs summation-order rounding.
        archive_hv = std::max(archive_hv, hypervolume3(archive));

        GenerationRecord gen;
        gen.generation = generation;
        gen.front = detail::unique_front(population, goals_of);
        std::vector<GoalVector> front_goals;
        for (const auto& m : gen.front) front_goals.push_back(m.goals);
        gen.hypervolume = hypervolume3(front_goals);
        gen.archive_hypervolume = archive_hv;
        gen.evaluations = cache.evaluations();
        const bool stop = stopper.update(front_goals);
        gen.stall_counter = stopper.counter();
        if (options.on_generation) options.on_generation(gen);
        record.generations.push_back(std::move(gen));
        return stop;
    };

    bool stopped = record_generation(0, population);
    for (int generation = 1; !stopped && generation <= ga.max_generations; ++generation) {
        const auto rc = rank_and_crowding(goals_of);
        std::vector<SegmentationParams> parents;
        for (std::size_t i : tournament_select(rc, mu, rng)) parents.push_back(population[i]);
        auto offspring = vary(parents, ga, rng);
        cache.evaluate_all(offspring, options.jobs);

        std::vector<SegmentationParams> combined = population;
        combined.insert(combined.end(), offspring.begin(), offspring.end());
        std::vector<GoalVector> combined_goals = goals_of;
        for (const auto& g : offspring) combined_goals.push_back(cache.evaluate(g));

        const auto survivors = environmental_select(combined_goals, mu);
        population.clear();
        goals_of.clear();
        for (std::size_t i : survivors) {
            population.push_back(combined[i]);
            goals_of.push_back(combined_goals[i]);
        }
        stopped = record_generation(generation, offspring);
    }
    record.termination = stopped ? Termination::EarlyStop : Termination::MaxGenerations;
    record.total_evaluations = cache.evaluations();
    record.final_front = record.generations.back().front;

    for (const auto& member : record.final_front)
        result.front_grids.push_back(
            genome_explanation_grid(member.genome, image, classifier, target_class, lime, ga.seed));
    result.averaged_grid = detail::mean_grid(result.front_grids);
    return result;
}

} // namespace evex
