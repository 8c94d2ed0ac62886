#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "menan/features.hpp"
#include "menan/params.hpp"

namespace menan::model {

using numerics::ParamSet;
using numerics::Tensor;

inline constexpr std::size_t kInputChannels = dsp::kFeatureChannels;
inline constexpr std::size_t kChannels = 32;
inline constexpr std::size_t kEmbeddingDim = 3 * kChannels;
inline constexpr std::size_t kConv1Kernel = 10;
inline constexpr std::size_t kConv2Kernel = 5;
inline constexpr std::size_t kConvStride = 2;
inline constexpr std::size_t kHeadHidden = 32;
inline constexpr std::size_t kHeadBottleneck = 10;
inline constexpr std::size_t kMinFrames = 24;
inline constexpr double kInitialSlope = 0.25;
inline constexpr double kStdEpsilon = 1e-8;

/// Fixed per-channel affine map applied to features before the encoder,
/// fitted once on a training split (all frames pooled, never per speaker or
/// per utterance).
struct InputScaler {
  std::array<double, kInputChannels> mean{};
  std::array<double, kInputChannels> scale{};  // 1 / std

  static InputScaler identity();
  static InputScaler fit(std::span<const dsp::FeatureMatrix* const> features);
};

/// Conv1D(43->32,k10,s2) PReLU, Conv1D(32->32,k5,s2) PReLU, GRU(32,32),
/// per-step Linear(32,32) PReLU, then [mean | std | max] over time.
class Encoder {
 public:
  explicit Encoder(std::mt19937_64& rng);

  /// v = enc(x), 96 values. Throws DimensionError below kMinFrames frames.
  Tensor encode(const dsp::FeatureMatrix& features) const;
  /// Stacked embeddings [B, 96].
  Tensor encode_batch(std::span<const dsp::FeatureMatrix* const> batch) const;
  /// Per-step outputs of the final PReLU, [T'', 32] (the pooled sequence).
  Tensor sequence(const dsp::FeatureMatrix& features) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  InputScaler scaler;

 private:
  ParamSet params_{"enc"};
  Tensor conv1_w_, conv1_b_, prelu1_, conv2_w_, conv2_b_, prelu2_;
  Tensor gru_w_ih_, gru_w_hh_, gru_b_ih_, gru_b_hh_;
  Tensor lin_w_, lin_b_, prelu3_;
};

/// Linear(96,32) PReLU, Linear(32,10) PReLU, Linear(10,K), log-softmax.
class ClassifierHead {
 public:
  ClassifierHead(std::string name, std::size_t outputs, std::mt19937_64& rng,
                 std::size_t inputs = kEmbeddingDim);

  /// Unnormalised scores, [B, K] for [B, 96] input or [K] for [96].
  Tensor logits(const Tensor& embedding) const;
  Tensor log_probs(const Tensor& embedding) const;

  std::size_t outputs() const { return outputs_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  ParamSet params_;
  std::size_t outputs_;
  Tensor l1_w_, l1_b_, p1_, l2_w_, l2_b_, p2_, l3_w_, l3_b_;
};

/// ENC plus emotion head EC and optional speaker head SC.
class Model {
 public:
  Model(std::size_t n_emotions, std::optional<std::size_t> n_speakers, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Encoder enc;
  ClassifierHead ec;
  std::optional<ClassifierHead> sc;

  Tensor classify_emotion(const Tensor& embedding) const { return ec.log_probs(embedding); }
  Tensor classify_speaker(const Tensor& embedding) const;

  std::vector<ParamSet*> param_sets();
};

/// Kaiming-uniform bound for a fan-in, with the PReLU gain at slope 0.25.
double kaiming_bound(std::size_t fan_in);

/// Generator for one named stream of a run seed; all 64 seed bits count.
std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream);

/// n x n orthogonal matrix (Gram-Schmidt on a Gaussian draw), row-major.
std::vector<double> random_orthogonal(std::size_t n, std::mt19937_64& rng);

}  // namespace menan::model
