#include "menan/model.hpp"

#include <cmath>

#include "menan/error.hpp"
#include "menan/ops.hpp"

namespace menan::model {

namespace nx = menan::numerics;

double kaiming_bound(std::size_t fan_in) {
  const double gain2 = 2.0 / (1.0 + kInitialSlope * kInitialSlope);
  return std::sqrt(3.0 * gain2 / static_cast<double>(fan_in));
}

std::vector<double> random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(n * n);
  for (auto& v : q) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = q.data() + i * n;
    for (std::size_t j = 0; j < i; ++j) {
      const double* prev = q.data() + j * n;
      double proj = nx::dot(row, prev, n);
      for (std::size_t k = 0; k < n; ++k) row[k] -= proj * prev[k];
    }
    double norm = std::sqrt(nx::dot(row, row, n));
    for (std::size_t k = 0; k < n; ++k) row[k] /= norm;
  }
  return q;
}

namespace {

Tensor uniform(numerics::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numerics::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor slope() { return Tensor::from({1}, {kInitialSlope}); }

}  // namespace

InputScaler InputScaler::identity() {
  InputScaler s;
  s.mean.fill(0.0);
  s.scale.fill(1.0);
  return s;
}

InputScaler InputScaler::fit(std::span<const dsp::FeatureMatrix* const> features) {
  std::array<double, kInputChannels> sum{}, sq{};
  double n = 0.0;
  for (const auto* f : features) {
    for (std::size_t t = 0; t < f->frames; ++t) {
      for (std::size_t c = 0; c < kInputChannels; ++c) {
        double v = f->at(t, c);
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    n += static_cast<double>(f->frames);
  }
  if (n == 0.0) return identity();
  InputScaler s;
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    s.mean[c] = sum[c] / n;
    double var = std::max(sq[c] / n - s.mean[c] * s.mean[c], 0.0);
    s.scale[c] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return s;
}

Encoder::Encoder(std::mt19937_64& rng) : scaler(InputScaler::identity()) {
  const std::size_t h = kChannels;
  conv1_w_ = params_.add("conv1.weight",
                         uniform({h, kConv1Kernel, kInputChannels},
                                 kaiming_bound(kConv1Kernel * kInputChannels), rng));
  conv1_b_ = params_.add("conv1.bias", Tensor::zeros({h}));
  prelu1_ = params_.add("prelu1.slope", slope());
  conv2_w_ = params_.add("conv2.weight",
                         uniform({h, kConv2Kernel, h}, kaiming_bound(kConv2Kernel * h), rng));
  conv2_b_ = params_.add("conv2.bias", Tensor::zeros({h}));
  prelu2_ = params_.add("prelu2.slope", slope());
  gru_w_ih_ = params_.add("gru.w_ih", uniform({3 * h, h}, 1.0 / std::sqrt(double(h)), rng));
  std::vector<double> w_hh;
  for (int gate = 0; gate < 3; ++gate) {
    auto q = random_orthogonal(h, rng);
    w_hh.insert(w_hh.end(), q.begin(), q.end());
  }
  gru_w_hh_ = params_.add("gru.w_hh", Tensor::from({3 * h, h}, std::move(w_hh)));
  gru_b_ih_ = params_.add("gru.b_ih", Tensor::zeros({3 * h}));
  gru_b_hh_ = params_.add("gru.b_hh", Tensor::zeros({3 * h}));
  lin_w_ = params_.add("linear.weight", uniform({h, h}, kaiming_bound(h), rng));
  lin_b_ = params_.add("linear.bias", Tensor::zeros({h}));
  prelu3_ = params_.add("prelu3.slope", slope());
}

Tensor Encoder::sequence(const dsp::FeatureMatrix& features) const {
  if (features.frames < kMinFrames) {
    throw DimensionError("encoder needs at least " + std::to_string(kMinFrames) +
                         " frames, got " + std::to_string(features.frames));
  }
  if (features.data.size() != features.frames * kInputChannels) {
    throw DimensionError("feature matrix is not T x 43");
  }
  std::vector<double> x(features.data.size());
  for (std::size_t t = 0; t < features.frames; ++t)
    for (std::size_t c = 0; c < kInputChannels; ++c)
      x[t * kInputChannels + c] =
          (features.at(t, c) - scaler.mean[c]) * scaler.scale[c];
  Tensor input = Tensor::from({features.frames, kInputChannels}, std::move(x));

  Tensor h1 = nx::prelu(nx::conv1d(input, conv1_w_, conv1_b_, kConvStride), prelu1_);
  Tensor h2 = nx::prelu(nx::conv1d(h1, conv2_w_, conv2_b_, kConvStride), prelu2_);

  const std::size_t steps = h2.dim(0);
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  Tensor state = Tensor::zeros({kChannels});
  for (std::size_t t = 0; t < steps; ++t) {
    state = nx::gru_cell(nx::select_row(h2, t), state, gru_w_ih_, gru_w_hh_,
                         gru_b_ih_, gru_b_hh_);
    outputs.push_back(state);
  }
  Tensor seq = nx::stack(outputs);
  return nx::prelu(nx::linear(seq, lin_w_, lin_b_), prelu3_);
}

Tensor Encoder::encode(const dsp::FeatureMatrix& features) const {
  Tensor seq = sequence(features);
  std::array<Tensor, 3> pooled{nx::mean_time(seq), nx::std_time(seq, kStdEpsilon),
                               nx::max_time(seq)};
  return nx::concat(pooled);
}

Tensor Encoder::encode_batch(std::span<const dsp::FeatureMatrix* const> batch) const {
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const auto* f : batch) rows.push_back(encode(*f));
  return nx::stack(rows);
}

ClassifierHead::ClassifierHead(std::string name, std::size_t outputs, std::mt19937_64& rng,
                               std::size_t inputs)
    : params_(std::move(name)), outputs_(outputs) {
  if (outputs < 2) throw ParameterError("a classifier needs at least two classes");
  if (inputs == 0) throw ParameterError("a classifier needs inputs");
  l1_w_ = params_.add("l1.weight", uniform({kHeadHidden, inputs}, kaiming_bound(inputs), rng));
  l1_b_ = params_.add("l1.bias", Tensor::zeros({kHeadHidden}));
  p1_ = params_.add("prelu1.slope", slope());
  l2_w_ = params_.add("l2.weight", uniform({kHeadBottleneck, kHeadHidden},
                                           kaiming_bound(kHeadHidden), rng));
  l2_b_ = params_.add("l2.bias", Tensor::zeros({kHeadBottleneck}));
  p2_ = params_.add("prelu2.slope", slope());
  l3_w_ = params_.add("l3.weight", uniform({outputs, kHeadBottleneck},
                                           kaiming_bound(kHeadBottleneck), rng));
  l3_b_ = params_.add("l3.bias", Tensor::zeros({outputs}));
}

Tensor ClassifierHead::logits(const Tensor& embedding) const {
  Tensor h = nx::prelu(nx::linear(embedding, l1_w_, l1_b_), p1_);
  h = nx::prelu(nx::linear(h, l2_w_, l2_b_), p2_);
  return nx::linear(h, l3_w_, l3_b_);
}

Tensor ClassifierHead::log_probs(const Tensor& embedding) const {
  return nx::log_softmax(logits(embedding));
}

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Model::Model(std::size_t n_emotions, std::optional<std::size_t> n_speakers, std::uint64_t seed)
    : enc([&] {
        auto rng = seeded_rng(seed, 1);
        return Encoder(rng);
      }()),
      ec([&] {
        auto rng = seeded_rng(seed, 2);
        return ClassifierHead("ec", n_emotions, rng);
      }()) {
  if (n_speakers) {
    auto rng = seeded_rng(seed, 3);
    sc.emplace("sc", *n_speakers, rng);
  }
}

Tensor Model::classify_speaker(const Tensor& embedding) const {
  if (!sc) throw UsageError("model has no speaker classifier");
  return sc->log_probs(embedding);
}

std::vector<ParamSet*> Model::param_sets() {
  std::vector<ParamSet*> sets{&enc.params(), &ec.params()};
  if (sc) sets.push_back(&sc->params());
  return sets;
}

}  // namespace menan::model
