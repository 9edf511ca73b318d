#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace riskrl {

/// Feed-forward network over a discrete input: a trainable embedding table
/// looked up by state id, two tanh hidden layers and a linear output layer.
/// Parameters live in one flat vector laid out as
///   [embedding S x E][W1 H x E][b1 H][W2 H x H][b2 H][W3 O x H][b3 O]
struct MlpShape {
    std::size_t n_inputs = 0; // number of state ids
    std::size_t embed = 16;
    std::size_t hidden = 64;
    std::size_t outputs = 1;

    std::size_t parameter_count() const;

    std::size_t off_embed() const { return 0; }
    std::size_t off_w1() const { return n_inputs * embed; }
    std::size_t off_b1() const { return off_w1() + hidden * embed; }
    std::size_t off_w2() const { return off_b1() + hidden; }
    std::size_t off_b2() const { return off_w2() + hidden * hidden; }
    std::size_t off_w3() const { return off_b2() + hidden; }
    std::size_t off_b3() const { return off_w3() + outputs * hidden; }
};

/// Activations kept from a forward pass for the matching backward pass.
struct MlpCache {
    std::size_t input = 0;
    std::vector<double> h1;
    std::vector<double> h2;
    std::vector<double> out;
};

/// PyTorch-style defaults: embedding ~ N(0, 1), linear weights and biases
/// ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The output layer is further scaled
/// by `output_scale`.
std::vector<double> mlp_init(const MlpShape& shape, std::uint64_t seed, double output_scale = 1.0);

void mlp_forward(const MlpShape& shape, std::span<const double> params, std::size_t input,
                 MlpCache& cache);

/// Adds d(loss)/d(params) to `grad` given d(loss)/d(outputs) for the cached pass.
void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpCache& cache,
                  std::span<const double> d_out, std::span<double> grad);

/// Adaptive moment estimation with the usual defaults.
class Adam {
  public:
    explicit Adam(std::size_t n = 0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void resize(std::size_t n);
    void reset();

    /// params += lr * mhat / (sqrt(vhat) + eps) when `ascent`, -= otherwise.
    void step(std::span<double> params, std::span<const double> grad, double lr, bool ascent);

    std::size_t steps() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

} // namespace riskrl
