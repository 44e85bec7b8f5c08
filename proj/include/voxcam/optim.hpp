#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "voxcam/augment.hpp"
#include "voxcam/core.hpp"
#include "voxcam/dataset.hpp"
#include "voxcam/nn.hpp"

namespace voxcam {

// ---------------------------------------------------------------------------
// Stratified dataset splitting.
//
// Split totals are round(fraction * N); each total is spread across classes by
// largest remainder, with leftover seats assigned in opposite class orders for
// val and test so neither class is systematically favored. Remaining subjects
// go to train. For the 16+16 layout this yields train 26, val 3, test 3 with
// 1-2 subjects per class in val/test; for 40+40 it is exactly 64/8/8.
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

namespace detail {

// Seats per class for one split: floor of the per-class quota, then leftover
// seats by descending fractional remainder; `reverse_ties` flips the class
// order used to break remainder ties.
inline std::array<int, 2> split_seats(int total, const std::array<int, 2>& class_sizes, double frac,
                                      bool reverse_ties) {
  std::array<int, 2> seats{0, 0};
  std::array<double, 2> rem{0.0, 0.0};
  int assigned = 0;
  for (int c = 0; c < 2; ++c) {
    const double quota = frac * class_sizes[c];
    seats[c] = static_cast<int>(std::floor(quota));
    seats[c] = std::min(seats[c], class_sizes[c]);
    rem[c] = quota - std::floor(quota);
    assigned += seats[c];
  }
  int leftover = total - assigned;
  std::array<int, 2> order =
      reverse_ties ? std::array<int, 2>{1, 0} : std::array<int, 2>{0, 1};
  if (rem[order[1]] > rem[order[0]]) std::swap(order[0], order[1]);
  for (int i = 0; i < 2 && leftover > 0; ++i) {
    if (seats[order[i]] < class_sizes[order[i]]) {
      ++seats[order[i]];
      --leftover;
    }
  }
  // degenerate leftovers (tiny classes) go wherever room remains
  for (int c = 0; c < 2 && leftover > 0; ++c) {
    while (leftover > 0 && seats[c] < class_sizes[c]) {
      ++seats[c];
      --leftover;
    }
  }
  return seats;
}

}  // namespace detail

inline SplitResult split_dataset(const Dataset& ds, SplitFractions fractions, std::uint64_t seed) {
  ds.validate();
  const auto class_sizes = ds.class_counts();
  for (int c = 0; c < 2; ++c)
    require(class_sizes[c] >= 3, Errc::class_too_small,
            "class " + std::to_string(c) + " has fewer than 3 subjects");
  require(std::abs(fractions.train + fractions.val + fractions.test - 1.0) < 1e-9,
          Errc::config_error, "split fractions must sum to 1");

  const int n_total = static_cast<int>(ds.size());
  const int val_total = static_cast<int>(std::lround(fractions.val * n_total));
  const int test_total = static_cast<int>(std::lround(fractions.test * n_total));
  const auto val_seats = detail::split_seats(val_total, class_sizes, fractions.val, false);
  const auto test_seats = detail::split_seats(test_total, class_sizes, fractions.test, true);

  // Per-class subject order: deterministic shuffle by seed.
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    by_class[ds.items[i].label].push_back(i);
  Rng rng(mix_seed(seed, 0x73706c69));
  for (int c = 0; c < 2; ++c) rng.fork(static_cast<std::uint64_t>(c)).shuffle(by_class[c]);

  SplitResult out;
  out.train.mask = out.val.mask = out.test.mask = ds.mask;
  out.train.role = SplitRole::train;
  out.val.role = SplitRole::val;
  out.test.role = SplitRole::test;
  for (int c = 0; c < 2; ++c) {
    std::size_t k = 0;
    for (int i = 0; i < val_seats[c]; ++i) out.val.items.push_back(ds.items[by_class[c][k++]]);
    for (int i = 0; i < test_seats[c]; ++i) out.test.items.push_back(ds.items[by_class[c][k++]]);
    for (; k < by_class[c].size(); ++k) out.train.items.push_back(ds.items[by_class[c][k]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamParams {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class AdamOptimizer {
 public:
  AdamOptimizer(float lr, AdamParams p = {}) : lr_(lr), p_(p) {}

  // One update over (parameter, gradient) pairs; call once per mini-batch.
  void step(std::vector<std::pair<std::string, Tensor>>& params,
            const std::function<const std::vector<float>*(const Tensor&)>& grad_of) {
    if (m_.empty()) {
      for (auto& [name, t] : params) {
        m_.emplace_back(static_cast<std::size_t>(t.size()), 0.0f);
        v_.emplace_back(static_cast<std::size_t>(t.size()), 0.0f);
      }
    }
    ++t_;
    const float bc1 = 1.0f - std::pow(p_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(p_.beta2, static_cast<float>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor& theta = params[pi].second;
      const std::vector<float>* g = grad_of(theta);
      if (!g) continue;
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::int64_t i = 0; i < theta.size(); ++i) {
        const float gi = (*g)[static_cast<std::size_t>(i)];
        m[i] = p_.beta1 * m[i] + (1.0f - p_.beta1) * gi;
        v[i] = p_.beta2 * v[i] + (1.0f - p_.beta2) * gi * gi;
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        theta.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + p_.eps);
      }
    }
  }

  int steps() const { return t_; }

 private:
  float lr_;
  AdamParams p_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  float learning_rate = 0.001f;
  float drop_p = 0.5f;  // 1.0 disables dropout
  int epochs = 10;
  int batch_size = 16;
  int fc_units = 32;
  std::uint64_t seed = 1234;
  AdamParams adam;

  std::string describe() const {
    std::ostringstream out;
    out << "lr=" << learning_rate << " drop=" << drop_p << " epochs=" << epochs
        << " batch=" << batch_size << " fc=" << fc_units;
    return out.str();
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best-validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

namespace detail {

inline Tensor make_batch(const ArchitectureSpec& spec, const Dataset& ds,
                         const std::vector<std::size_t>& idx, std::size_t beg, std::size_t end) {
  Shape shape{static_cast<int>(end - beg)};
  for (int e : spec.input_shape) shape.push_back(e);
  Tensor batch(shape);
  const std::int64_t per = shape_size(spec.input_shape);
  for (std::size_t i = beg; i < end; ++i) {
    const BrainVolume& v = ds.items[idx[i]].volume;
    require(static_cast<std::int64_t>(v.size()) == per, Errc::dim_mismatch,
            "subject dims do not match spec input");
    std::copy(v.data.begin(), v.data.end(), batch.data() + (i - beg) * per);
  }
  return batch;
}

}  // namespace detail

// Fraction of argmax-correct predictions; ties resolve to the lower class index.
inline double evaluate(Model& model, const Dataset& ds) {
  require(!ds.items.empty(), Errc::empty_split, "evaluate on empty split");
  const Mode saved = model.mode;
  model.set_mode(Mode::eval);
  std::size_t correct = 0;
  for (const auto& s : ds.items) {
    const BrainVolume masked = apply_mask(s.volume, ds.mask);
    const Tensor logits = forward_logits(model, masked);
    int arg = 0;
    for (int k = 1; k < static_cast<int>(logits.size()); ++k)
      if (logits.data()[k] > logits.data()[arg]) arg = k;
    correct += arg == s.label;
  }
  model.set_mode(saved);
  return static_cast<double>(correct) / static_cast<double>(ds.items.size());
}

// Minimizes mean softmax cross-entropy with Adam over shuffled mini-batches.
// Keeps the parameters of the best-validation epoch (early selection, not
// early stopping). A trailing 1-sample batch is dropped: batchnorm train mode
// needs at least two samples.
inline TrainResult train(const ArchitectureSpec& spec, const Dataset& train_set,
                         const Dataset& val_set, const TrainConfig& cfg,
                         const std::optional<AugmentConfig>& augmenter = std::nullopt) {
  require(train_set.role != SplitRole::val && train_set.role != SplitRole::test,
          Errc::applied_to_eval_split, "training on a non-train split");
  Dataset working = train_set;
  if (augmenter && augmenter->copies_per_subject > 0) {
    working.role = SplitRole::train;
    working = augment_dataset(working, *augmenter);
  }
  for (const auto& v : val_set.items)
    for (const auto& t : working.items)
      require(source_subject_id(t.id) != source_subject_id(v.id), Errc::config_error,
              "train/val sets are not disjoint: " + v.id);

  TrainResult result;
  result.model = build_model(spec, cfg.seed);
  Model& model = result.model;
  AdamOptimizer adam(cfg.learning_rate, cfg.adam);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566));

  Model best = model.clone();
  double best_acc = -1.0;
  int best_epoch = 0;

  std::vector<std::size_t> order(working.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  // Pre-mask volumes once.
  Dataset masked = working;
  for (auto& s : masked.items) s.volume = apply_mask(s.volume, working.mask);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.set_mode(Mode::train);
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t beg = 0; beg < order.size(); beg += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), beg + cfg.batch_size);
      if (end - beg < 2) break;  // batchnorm train mode floor
      Tensor batch = detail::make_batch(spec, masked, order, beg, end);
      std::vector<int> labels;
      for (std::size_t i = beg; i < end; ++i) labels.push_back(masked.items[order[i]].label);
      Graph g;
      Tensor logits = forward(model, batch, &g);
      Tensor loss = softmax_cross_entropy(&g, logits, labels);
      if (!std::isfinite(loss.item())) {
        raise(Errc::non_finite_loss, "epoch " + std::to_string(epoch) + " batch " +
                                         std::to_string(batches) + ": loss is not finite");
      }
      g.backward(loss);
      adam.step(model.params,
                [&g](const Tensor& t) -> const std::vector<float>* { return g.grad_ptr(t); });
      loss_sum += loss.item();
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    stats.val_acc = val_set.items.empty() ? 0.0 : evaluate(model, val_set);
    result.history.push_back(stats);
    // ties go to the later epoch: more training at equal validation accuracy
    if (stats.val_acc >= best_acc) {
      best_acc = stats.val_acc;
      best_epoch = epoch;
      best = model.clone();
    }
  }

  if (cfg.epochs > 0 && best_acc >= 0.0) {
    result.model = std::move(best);
    result.best_epoch = best_epoch;
    result.best_val_acc = best_acc;
  } else {
    result.best_epoch = 0;
    result.best_val_acc = val_set.items.empty() ? 0.0 : evaluate(model, val_set);
  }
  result.model.set_mode(Mode::eval);
  return result;
}

inline std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_acc\n";
  for (const auto& e : history) out << e.epoch << "," << e.train_loss << "," << e.val_acc << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Hyperparameter grid (Table-2 axes; batch size fixed at 16)
// ---------------------------------------------------------------------------

struct HyperGrid {
  std::vector<float> learning_rates{1.0f, 0.1f, 0.01f, 0.001f, 0.0001f, 0.00001f};
  std::vector<float> dropout_rates{0.1f, 0.5f, 1.0f};  // 1 = disabled
  std::vector<int> epoch_counts{10, 50, 100};
  std::vector<int> fc_unit_counts{32, 64, 128, 256, 512};

  std::vector<TrainConfig> expand(std::uint64_t seed) const {
    std::vector<TrainConfig> cells;
    for (float lr : learning_rates)
      for (float dp : dropout_rates)
        for (int ep : epoch_counts)
          for (int fc : fc_unit_counts) {
            TrainConfig c;
            c.learning_rate = lr;
            c.drop_p = dp;
            c.epochs = ep;
            c.fc_units = fc;
            c.seed = seed;
            cells.push_back(c);
          }
    return cells;
  }
};

struct GridCell {
  TrainConfig config;
  double val_acc = 0.0;
  std::int64_t params = 0;
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  std::vector<GridCell> leaderboard;  // ranked best-first
  TrainConfig best;
};

// Exhaustive evaluation of one spec builder over the grid, ranked by
// validation accuracy; ties prefer the lower learning rate, then fewer
// parameters. Failed cells (e.g. diverged training) are kept on the board and
// ranked last. Cells run on a small worker pool; every cell is deterministic
// in the run seed.
inline GridSearchResult grid_search(
    const std::function<ArchitectureSpec(const TrainConfig&)>& builder, const Dataset& train_set,
    const Dataset& val_set, const std::vector<TrainConfig>& grid,
    const std::optional<AugmentConfig>& augmenter = std::nullopt, int workers = 0) {
  require(!grid.empty(), Errc::config_error, "grid is empty");
  std::vector<GridCell> cells(grid.size());
  if (workers <= 0)
    workers = std::max(1u, std::min(std::thread::hardware_concurrency(), 4u));
  workers = std::min<int>(workers, static_cast<int>(grid.size()));

  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      GridCell& cell = cells[i];
      cell.config = grid[i];
      try {
        const ArchitectureSpec spec = builder(grid[i]);
        cell.params = count_parameters(spec);
        TrainResult r = train(spec, train_set, val_set, grid[i], augmenter);
        cell.val_acc = r.best_val_acc;
      } catch (const Error& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();

  std::stable_sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.val_acc != b.val_acc) return a.val_acc > b.val_acc;
    if (a.config.learning_rate != b.config.learning_rate)
      return a.config.learning_rate < b.config.learning_rate;
    return a.params < b.params;
  });
  GridSearchResult out;
  out.leaderboard = std::move(cells);
  out.best = out.leaderboard.front().config;
  return out;
}

inline std::string leaderboard_to_csv(const std::vector<GridCell>& board) {
  std::ostringstream out;
  out << "rank,config,val_acc\n";
  for (std::size_t i = 0; i < board.size(); ++i) {
    out << (i + 1) << "," << board[i].config.describe() << ","
        << (board[i].failed ? std::string("failed: ") + board[i].error
                            : std::to_string(board[i].val_acc))
        << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Result reporting, one fixed-width row per technique
// ---------------------------------------------------------------------------

inline std::string summary_line(const std::string& technique, double accuracy) {
  std::ostringstream out;
  out << technique;
  for (std::size_t i = technique.size(); i < 44; ++i) out << ' ';
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f%%", accuracy * 100.0);
  out << buf;
  return out.str();
}

inline std::string summary_table(const std::vector<std::pair<std::string, double>>& rows) {
  std::ostringstream out;
  out << "Technique";
  for (std::size_t i = 9; i < 44; ++i) out << ' ';
  out << "Accuracy\n";
  for (const auto& [name, acc] : rows) out << summary_line(name, acc) << "\n";
  return out.str();
}

}  // namespace voxcam
