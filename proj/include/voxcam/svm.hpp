#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "voxcam/core.hpp"
#include "voxcam/dataset.hpp"

// Linear SVM baseline over masked voxels, solved in the primal by Pegasos-style
// stochastic subgradient descent: lambda = 1/(C*n), step 1/(lambda*t), bias
// updated without regularization, averaged iterate returned.

namespace voxcam {

// Per-voxel standardizer fitted on training features only.
struct Standardizer {
  std::vector<float> mean;
  std::vector<float> stdev;

  void fit(const std::vector<std::vector<float>>& rows) {
    require(!rows.empty(), Errc::empty_split, "standardizer fit on empty data");
    const std::size_t dim = rows.front().size();
    mean.assign(dim, 0.0f);
    stdev.assign(dim, 0.0f);
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < dim; ++j) {
        sum[j] += r[j];
        sumsq[j] += static_cast<double>(r[j]) * r[j];
      }
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < dim; ++j) {
      const double mu = sum[j] / n;
      const double var = std::max(0.0, sumsq[j] / n - mu * mu);
      mean[j] = static_cast<float>(mu);
      stdev[j] = static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0);
    }
  }

  void transform(std::vector<float>& row) const {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stdev[j];
  }
};

struct SvmModel {
  std::vector<float> weights;             // one per nonzero mask voxel
  float bias = 0.0f;
  float C = 1.0f;
  Standardizer scaler;
  std::vector<std::size_t> mask_index;    // linear voxel indices the features map to
};

inline std::vector<std::size_t> mask_indices(const BrainMask& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) idx.push_back(i);
  return idx;
}

inline std::vector<float> masked_features(const BrainVolume& v,
                                          const std::vector<std::size_t>& idx) {
  std::vector<float> row(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) row[j] = v.data[idx[j]];
  return row;
}

inline double svm_objective(const SvmModel& m, const std::vector<std::vector<float>>& X,
                            const std::vector<int>& y, float bias, const std::vector<float>& w) {
  const double lambda = 1.0 / (static_cast<double>(m.C) * static_cast<double>(X.size()));
  double norm2 = 0.0;
  for (float wi : w) norm2 += static_cast<double>(wi) * wi;
  double hinge = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double score = bias;
    for (std::size_t j = 0; j < w.size(); ++j) score += static_cast<double>(w[j]) * X[i][j];
    const double margin = (y[i] == 1 ? 1.0 : -1.0) * score;
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * lambda * norm2 + hinge / static_cast<double>(X.size());
}

struct SvmTrainTrace {
  std::vector<double> epoch_objective;  // objective of the averaged iterate per epoch
};

inline SvmModel train_svm(const Dataset& train_set, float C, int epochs, std::uint64_t seed,
                          SvmTrainTrace* trace = nullptr) {
  train_set.validate();
  require(C > 0.0f, Errc::config_error, "C must be positive");
  require(epochs >= 1, Errc::config_error, "epochs must be >= 1");

  SvmModel model;
  model.C = C;
  model.mask_index = mask_indices(train_set.mask);

  const std::size_t n = train_set.items.size();
  const std::size_t dim = model.mask_index.size();
  std::vector<std::vector<float>> X;
  std::vector<int> y;
  X.reserve(n);
  for (const auto& s : train_set.items) {
    X.push_back(masked_features(s.volume, model.mask_index));
    y.push_back(s.label);
  }
  model.scaler.fit(X);
  for (auto& row : X) model.scaler.transform(row);

  const double lambda = 1.0 / (static_cast<double>(C) * static_cast<double>(n));
  std::vector<double> w(dim, 0.0), wavg(dim, 0.0);
  double b = 0.0, bavg = 0.0;
  Rng rng(mix_seed(seed, 0x7376'6d00ull));
  std::size_t t = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t step = 0; step < n; ++step) {
      ++t;
      const std::size_t i = rng.below(n);
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double yi = y[i] == 1 ? 1.0 : -1.0;
      double score = b;
      for (std::size_t j = 0; j < dim; ++j) score += w[j] * X[i][j];
      const bool violated = yi * score < 1.0;
      const double shrink = 1.0 - eta * lambda;
      for (std::size_t j = 0; j < dim; ++j) {
        w[j] *= shrink;
        if (violated) w[j] += eta * yi * X[i][j];
      }
      if (violated) b += eta * yi;
      const double blend = 1.0 / static_cast<double>(t);
      for (std::size_t j = 0; j < dim; ++j) wavg[j] += blend * (w[j] - wavg[j]);
      bavg += blend * (b - bavg);
      require(std::isfinite(b) && std::isfinite(w[0]), Errc::non_finite_loss,
              "svm weights diverged at step " + std::to_string(t));
    }
    if (trace) {
      std::vector<float> wf(dim);
      for (std::size_t j = 0; j < dim; ++j) wf[j] = static_cast<float>(wavg[j]);
      SvmModel probe = model;
      probe.weights = wf;
      trace->epoch_objective.push_back(
          svm_objective(probe, X, y, static_cast<float>(bavg), wf));
    }
  }
  model.weights.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) model.weights[j] = static_cast<float>(wavg[j]);
  model.bias = static_cast<float>(bavg);
  return model;
}

inline int svm_predict(const SvmModel& m, const BrainVolume& v) {
  std::vector<float> row = masked_features(v, m.mask_index);
  m.scaler.transform(row);
  double score = m.bias;
  for (std::size_t j = 0; j < row.size(); ++j)
    score += static_cast<double>(m.weights[j]) * row[j];
  return score >= 0.0 ? 1 : 0;
}

inline double evaluate(const SvmModel& m, const Dataset& ds) {
  require(!ds.items.empty(), Errc::empty_split, "evaluate on empty split");
  std::size_t correct = 0;
  for (const auto& s : ds.items) correct += svm_predict(m, s.volume) == s.label;
  return static_cast<double>(correct) / static_cast<double>(ds.items.size());
}

inline std::vector<std::uint8_t> svm_to_bytes(const SvmModel& m) {
  std::vector<std::uint8_t> buf;
  le::append<std::uint32_t>(buf, 0x53564d31);  // "SVM1"
  le::append<float>(buf, m.C);
  le::append<float>(buf, m.bias);
  le::append<std::uint64_t>(buf, m.weights.size());
  auto put_floats = [&buf](const std::vector<float>& v) {
    const std::size_t off = buf.size();
    buf.resize(off + v.size() * 4);
    std::memcpy(buf.data() + off, v.data(), v.size() * 4);
  };
  put_floats(m.weights);
  put_floats(m.scaler.mean);
  put_floats(m.scaler.stdev);
  for (std::size_t i : m.mask_index) le::append<std::uint64_t>(buf, i);
  return buf;
}

inline SvmModel svm_from_bytes(std::span<const std::uint8_t> buf) {
  std::size_t off = 0;
  require(le::get<std::uint32_t>(buf, off) == 0x53564d31, Errc::bad_magic, "not an svm blob");
  off += 4;
  SvmModel m;
  m.C = le::get<float>(buf, off);
  off += 4;
  m.bias = le::get<float>(buf, off);
  off += 4;
  const auto dim = static_cast<std::size_t>(le::get<std::uint64_t>(buf, off));
  off += 8;
  auto get_floats = [&](std::vector<float>& v) {
    v.resize(dim);
    require(off + dim * 4 <= buf.size(), Errc::truncated_data, "svm blob too short");
    std::memcpy(v.data(), buf.data() + off, dim * 4);
    off += dim * 4;
  };
  get_floats(m.weights);
  get_floats(m.scaler.mean);
  get_floats(m.scaler.stdev);
  m.mask_index.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    m.mask_index[j] = static_cast<std::size_t>(le::get<std::uint64_t>(buf, off));
    off += 8;
  }
  return m;
}

}  // namespace voxcam
