#pragma once

#include <algorithm>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/grammar.hpp"
#include "voxcam/optim.hpp"

// Evolution loop: tournament selection, one-point codon crossover, per-codon
// uniform mutation, elitism. Fitness is best validation accuracy after a
// budgeted training run; invalid genomes (derivation overrun, shape underflow,
// diverged training) score zero instead of aborting the run.

namespace voxcam {

struct EvolutionConfig {
  int population_size = 20;
  int generations = 10;
  float crossover_rate = 0.9f;
  float mutation_rate = 0.05f;
  int tournament_size = 3;
  int elitism_count = 1;
  int fitness_epochs = 10;
  int genome_length = 64;
  int max_wraps = 2;
  std::uint64_t seed = 1234;
  int workers = 0;  // 0: hardware concurrency (capped)

  void validate() const {
    require(population_size >= 2, Errc::config_error, "population must be >= 2");
    require(generations >= 0, Errc::config_error, "generations must be >= 0");
    require(crossover_rate >= 0.0f && crossover_rate <= 1.0f, Errc::config_error,
            "crossover rate in [0,1]");
    require(mutation_rate >= 0.0f && mutation_rate <= 1.0f, Errc::config_error,
            "mutation rate in [0,1]");
    require(tournament_size >= 1, Errc::config_error, "tournament size >= 1");
    require(elitism_count >= 1 && elitism_count <= population_size, Errc::config_error,
            "elitism in [1, population]");
    require(fitness_epochs >= 0, Errc::config_error, "fitness epochs >= 0");
    require(genome_length >= 16, Errc::config_error, "genome length >= 16");
  }
};

// Memoizes fitness by genome hash; shared across a run so elites and repeated
// offspring never retrain.
class FitnessCache {
 public:
  bool lookup(std::uint64_t key, float* out) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return false;
    *out = it->second;
    return true;
  }
  void store(std::uint64_t key, float fitness) {
    std::lock_guard<std::mutex> lock(mu_);
    map_.emplace(key, fitness);
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return map_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, float> map_;
};

struct FitnessStats {
  int trained = 0;    // evaluations that actually ran training
  int memo_hits = 0;
  int invalid = 0;    // derivation/shape failures
  int diverged = 0;   // NonFiniteLoss mapped to fitness 0
  std::vector<std::string> notes;
};

// Build -> train fitness_epochs -> best validation accuracy. The training
// seed is derived from the genome hash, so a genome's fitness is a pure
// function of (genome, grammar, data, budget, run seed).
inline float evaluate_fitness(const Genome& genome, const Grammar& grammar,
                              const Dataset& train_set, const Dataset& val_set,
                              int fitness_epochs, std::uint64_t seed,
                              FitnessCache* cache = nullptr, FitnessStats* stats = nullptr,
                              std::mutex* stats_mu = nullptr) {
  const std::uint64_t key = genome.hash();
  float fitness = 0.0f;
  if (cache && cache->lookup(key, &fitness)) {
    if (stats) {
      std::unique_lock<std::mutex> lock;
      if (stats_mu) lock = std::unique_lock<std::mutex>(*stats_mu);
      ++stats->memo_hits;
    }
    return fitness;
  }
  auto note = [&](const std::string& msg, int FitnessStats::*counter) {
    if (!stats) return;
    std::unique_lock<std::mutex> lock;
    if (stats_mu) lock = std::unique_lock<std::mutex>(*stats_mu);
    ++(stats->*counter);
    stats->notes.push_back(msg);
  };
  try {
    const BrainVolume& v0 = train_set.items.front().volume;
    const Shape input_shape{v0.nz(), v0.ny(), v0.nx()};  // slices as channels
    const DerivedIndividual ind = derive_architecture(genome, grammar, input_shape);
    TrainConfig cfg;
    cfg.learning_rate = ind.learning_rate;
    cfg.epochs = fitness_epochs;
    cfg.batch_size = 16;
    cfg.seed = mix_seed(seed, key);
    TrainResult r = train(ind.spec, train_set, val_set, cfg);
    fitness = static_cast<float>(r.best_val_acc);
    if (stats) {
      std::unique_lock<std::mutex> lock;
      if (stats_mu) lock = std::unique_lock<std::mutex>(*stats_mu);
      ++stats->trained;
    }
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::derivation_overrun:
      case Errc::shape_underflow:
      case Errc::shape_mismatch:
        note(std::string("invalid genome: ") + e.what(), &FitnessStats::invalid);
        break;
      case Errc::non_finite_loss:
        note(std::string("diverged: ") + e.what(), &FitnessStats::diverged);
        break;
      default:
        throw;
    }
    fitness = 0.0f;
  }
  if (cache) cache->store(key, fitness);
  return fitness;
}

struct GenerationStats {
  int generation = 0;
  float best = 0.0f;
  float mean = 0.0f;
  float median = 0.0f;
};

struct EvolutionResult {
  Genome best_genome;
  float best_fitness = 0.0f;
  std::vector<GenerationStats> log;
  FitnessStats fitness_stats;
  std::vector<Genome> final_population;
  std::vector<float> final_fitness;
};

namespace detail {

inline std::vector<float> evaluate_population(const std::vector<Genome>& pop,
                                              const Grammar& grammar, const Dataset& train_set,
                                              const Dataset& val_set, const EvolutionConfig& cfg,
                                              FitnessCache& cache, FitnessStats& stats,
                                              std::mutex& stats_mu) {
  std::vector<float> fitness(pop.size(), 0.0f);
  int workers = cfg.workers > 0
                    ? cfg.workers
                    : static_cast<int>(std::max(1u, std::min(std::thread::hardware_concurrency(), 4u)));
  workers = std::min<int>(workers, static_cast<int>(pop.size()));
  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pop.size()) return;
      fitness[i] = evaluate_fitness(pop[i], grammar, train_set, val_set, cfg.fitness_epochs,
                                    cfg.seed, &cache, &stats, &stats_mu);
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) threads.emplace_back(run);
  for (auto& t : threads) t.join();
  return fitness;
}

inline GenerationStats population_stats(int generation, std::vector<float> fitness) {
  GenerationStats s;
  s.generation = generation;
  double sum = 0.0;
  s.best = 0.0f;
  for (float f : fitness) {
    sum += f;
    s.best = std::max(s.best, f);
  }
  s.mean = static_cast<float>(sum / static_cast<double>(fitness.size()));
  std::sort(fitness.begin(), fitness.end());
  const std::size_t n = fitness.size();
  s.median = n % 2 ? fitness[n / 2] : 0.5f * (fitness[n / 2 - 1] + fitness[n / 2]);
  return s;
}

// Index of the tournament winner; ties go to the earlier population index.
inline std::size_t tournament(const std::vector<float>& fitness, int size, Rng& rng) {
  std::size_t best = rng.below(fitness.size());
  for (int i = 1; i < size; ++i) {
    const std::size_t cand = rng.below(fitness.size());
    if (fitness[cand] > fitness[best] || (fitness[cand] == fitness[best] && cand < best))
      best = cand;
  }
  return best;
}

}  // namespace detail

inline EvolutionResult evolve(const Grammar& grammar, const Dataset& train_set,
                              const Dataset& val_set, const EvolutionConfig& cfg) {
  cfg.validate();
  grammar.validate();
  Rng rng(mix_seed(cfg.seed, 0x65766f6cull));
  FitnessCache cache;
  EvolutionResult result;
  std::mutex stats_mu;

  std::vector<Genome> pop;
  pop.reserve(cfg.population_size);
  for (int i = 0; i < cfg.population_size; ++i)
    pop.push_back(Genome::random(cfg.genome_length, rng, cfg.max_wraps));

  std::vector<float> fitness = detail::evaluate_population(
      pop, grammar, train_set, val_set, cfg, cache, result.fitness_stats, stats_mu);
  result.log.push_back(detail::population_stats(0, fitness));

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    // rank current population best-first (stable on ties)
    std::vector<std::size_t> order(pop.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

    std::vector<Genome> next;
    next.reserve(pop.size());
    for (int e = 0; e < cfg.elitism_count; ++e) next.push_back(pop[order[e]]);

    while (next.size() < pop.size()) {
      const Genome& p1 = pop[detail::tournament(fitness, cfg.tournament_size, rng)];
      const Genome& p2 = pop[detail::tournament(fitness, cfg.tournament_size, rng)];
      Genome c1 = p1, c2 = p2;
      if (rng.uniform() < cfg.crossover_rate) {
        const std::size_t cut = 1 + rng.below(c1.codons.size() - 1);
        for (std::size_t i = cut; i < c1.codons.size(); ++i)
          std::swap(c1.codons[i], c2.codons[i]);
      }
      for (Genome* child : {&c1, &c2}) {
        for (auto& codon : child->codons) {
          if (rng.uniform() < cfg.mutation_rate)
            codon = static_cast<std::uint32_t>(rng.next_u64());
        }
      }
      next.push_back(std::move(c1));
      if (next.size() < pop.size()) next.push_back(std::move(c2));
    }
    pop = std::move(next);
    fitness = detail::evaluate_population(pop, grammar, train_set, val_set, cfg, cache,
                                          result.fitness_stats, stats_mu);
    result.log.push_back(detail::population_stats(gen, fitness));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i)
    if (fitness[i] > fitness[best]) best = i;
  result.best_genome = pop[best];
  result.best_fitness = fitness[best];
  result.final_population = std::move(pop);
  result.final_fitness = std::move(fitness);
  return result;
}

inline std::string evolution_log_to_csv(const std::vector<GenerationStats>& log) {
  std::ostringstream out;
  out << "generation,best,mean,median\n";
  for (const auto& g : log)
    out << g.generation << "," << g.best << "," << g.mean << "," << g.median << "\n";
  return out.str();
}

}  // namespace voxcam
