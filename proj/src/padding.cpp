#include "mrsm/padding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace mrsm {

NoiseModel NoiseModel::for_partition(std::size_t real_dims, double pseudo_ratio,
                                     std::optional<std::size_t> active, double sigma,
                                     std::uint64_t seed) {
  if (pseudo_ratio < 0.0) throw Error("pseudo-keyword ratio must be non-negative");
  NoiseModel m;
  m.pseudo_count = static_cast<std::size_t>(std::ceil(pseudo_ratio * static_cast<double>(real_dims)));
  m.active = active ? *active : (m.pseudo_count + 1) / 2;
  m.sigma = sigma;
  m.seed = seed;
  m.validate();
  return m;
}

void NoiseModel::validate() const {
  if (active > pseudo_count) {
    throw Error("omega=" + std::to_string(active) + " exceeds U=" + std::to_string(pseudo_count));
  }
  if (sigma < 0.0 || uniform_half_width < 0.0) throw Error("noise spread must be non-negative");
}

double NoiseModel::entry_sigma() const {
  if (scale == Scale::aggregate && active > 0) return sigma / std::sqrt(static_cast<double>(active));
  return sigma;
}

SecureWeightedIndex pad_index(const WeightedIndex& index, const NoiseModel& model) {
  model.validate();
  SecureWeightedIndex out;
  out.doc = index.doc;
  out.owner = index.owner;
  out.partition = index.partition;
  out.real_dims = static_cast<std::size_t>(index.values.size());
  out.values = Vector::Zero(index.values.size() + static_cast<Eigen::Index>(model.pseudo_count));
  out.values.head(index.values.size()) = index.values;
  if (model.pseudo_count == 0 || model.active == 0) return out;

  Rng rng = make_rng(model.seed, static_cast<std::uint64_t>(index.doc));
  std::vector<std::size_t> slots(model.pseudo_count);
  std::iota(slots.begin(), slots.end(), 0);
  for (std::size_t i = 0; i < model.active; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, slots.size() - 1)(rng);
    std::swap(slots[i], slots[j]);
  }
  std::sort(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(model.active));
  std::normal_distribution<double> standard(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < model.active; ++i) {
    double eps;
    if (model.distribution == NoiseModel::Distribution::normal) {
      eps = model.entry_sigma() * standard(rng);
    } else {
      eps = model.uniform_center + model.uniform_half_width * unit(rng);
    }
    out.values[index.values.size() + static_cast<Eigen::Index>(slots[i])] =
        std::clamp(eps, -1.0, 1.0);
  }
  return out;
}

std::vector<SecureWeightedIndex> pad_partition(std::span<const WeightedIndex> indexes,
                                               const NoiseModel& model) {
  std::vector<SecureWeightedIndex> out;
  out.reserve(indexes.size());
  for (const auto& idx : indexes) out.push_back(pad_index(idx, model));
  return out;
}

NormalApproximation uniform_to_normal(double center, double half_width, std::size_t summands) {
  if (half_width < 0.0) throw Error("uniform half-width must be non-negative");
  if (summands == 0) throw Error("need at least one summand");
  const double w = static_cast<double>(summands);
  return {w * center, w * half_width * half_width / 3.0};
}

double distinguishability(std::span<const double> padded, std::span<const double> unpadded,
                          std::uint64_t seed) {
  if (padded.empty() || unpadded.empty()) {
    throw Error("distinguishability needs samples from both classes");
  }
  if (padded.size() != unpadded.size()) throw Error("distinguishability needs equal sample sizes");
  if (padded.size() < 2) throw Error("distinguishability needs at least two samples per class");

  struct Sample {
    double x;
    double label;
  };
  std::vector<Sample> data;
  data.reserve(2 * padded.size());
  for (double v : padded) data.push_back({v, 1.0});
  for (double v : unpadded) data.push_back({v, 0.0});
  Rng rng = make_rng(seed, 11);
  std::shuffle(data.begin(), data.end(), rng);

  const std::size_t train = std::max<std::size_t>(1, data.size() * 7 / 10);
  double mean = 0.0;
  for (std::size_t i = 0; i < train; ++i) mean += data[i].x;
  mean /= static_cast<double>(train);
  double var = 0.0;
  for (std::size_t i = 0; i < train; ++i) var += (data[i].x - mean) * (data[i].x - mean);
  const double sd = std::sqrt(var / static_cast<double>(train));
  const double scale = sd > 0.0 ? sd : 1.0;

  auto features = [&](double x) {
    const double z = (x - mean) / scale;
    return std::array<double, 3>{1.0, z, z * z};
  };

  constexpr int kEpochs = 500;
  constexpr double kLearningRate = 0.5;
  std::array<double, 3> w{0.0, 0.0, 0.0};
  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    std::array<double, 3> grad{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < train; ++i) {
      const auto f = features(data[i].x);
      const double logit = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
      const double p = 1.0 / (1.0 + std::exp(-std::clamp(logit, -40.0, 40.0)));
      for (int k = 0; k < 3; ++k) grad[k] += (p - data[i].label) * f[k];
    }
    for (int k = 0; k < 3; ++k) w[k] -= kLearningRate * grad[k] / static_cast<double>(train);
  }

  const std::size_t test_begin = train < data.size() ? train : 0;
  std::size_t correct = 0, total = 0;
  for (std::size_t i = test_begin; i < data.size(); ++i) {
    const auto f = features(data[i].x);
    const double logit = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
    const double predicted = logit > 0.0 ? 1.0 : 0.0;
    correct += predicted == data[i].label;
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace mrsm
