#include "riskrl/nn.hpp"

#include "riskrl/rng.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace riskrl {

std::size_t MlpShape::parameter_count() const { return off_b3() + outputs; }

std::vector<double> mlp_init(const MlpShape& s, std::uint64_t seed, double output_scale) {
    if (s.n_inputs == 0 || s.embed == 0 || s.hidden == 0 || s.outputs == 0)
        throw std::invalid_argument("mlp: all layer sizes must be positive");
    Rng rng(seed);
    std::vector<double> p(s.parameter_count());
    for (std::size_t i = 0; i < s.n_inputs * s.embed; ++i) p[s.off_embed() + i] = rng.normal();
    auto fill = [&](std::size_t off, std::size_t count, double bound, double scale) {
        for (std::size_t i = 0; i < count; ++i) p[off + i] = scale * rng.uniform(-bound, bound);
    };
    const double b1 = 1.0 / std::sqrt(static_cast<double>(s.embed));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(s.hidden));
    fill(s.off_w1(), s.hidden * s.embed, b1, 1.0);
    fill(s.off_b1(), s.hidden, b1, 1.0);
    fill(s.off_w2(), s.hidden * s.hidden, b2, 1.0);
    fill(s.off_b2(), s.hidden, b2, 1.0);
    fill(s.off_w3(), s.outputs * s.hidden, b2, output_scale);
    fill(s.off_b3(), s.outputs, b2, output_scale);
    return p;
}

void mlp_forward(const MlpShape& s, std::span<const double> p, std::size_t input, MlpCache& c) {
    assert(p.size() == s.parameter_count());
    if (input >= s.n_inputs) throw std::out_of_range("mlp: input id out of range");
    c.input = input;
    c.h1.assign(s.hidden, 0.0);
    c.h2.assign(s.hidden, 0.0);
    c.out.assign(s.outputs, 0.0);

    const double* x = p.data() + s.off_embed() + input * s.embed;
    const double* w1 = p.data() + s.off_w1();
    const double* b1 = p.data() + s.off_b1();
    for (std::size_t j = 0; j < s.hidden; ++j) {
        double acc = b1[j];
        const double* row = w1 + j * s.embed;
        for (std::size_t i = 0; i < s.embed; ++i) acc += row[i] * x[i];
        c.h1[j] = std::tanh(acc);
    }
    const double* w2 = p.data() + s.off_w2();
    const double* b2 = p.data() + s.off_b2();
    for (std::size_t j = 0; j < s.hidden; ++j) {
        double acc = b2[j];
        const double* row = w2 + j * s.hidden;
        for (std::size_t i = 0; i < s.hidden; ++i) acc += row[i] * c.h1[i];
        c.h2[j] = std::tanh(acc);
    }
    const double* w3 = p.data() + s.off_w3();
    const double* b3 = p.data() + s.off_b3();
    for (std::size_t k = 0; k < s.outputs; ++k) {
        double acc = b3[k];
        const double* row = w3 + k * s.hidden;
        for (std::size_t i = 0; i < s.hidden; ++i) acc += row[i] * c.h2[i];
        c.out[k] = acc;
    }
}

void mlp_backward(const MlpShape& s, std::span<const double> p, const MlpCache& c,
                  std::span<const double> d_out, std::span<double> g) {
    assert(g.size() == s.parameter_count());
    assert(d_out.size() == s.outputs);
    const double* w3 = p.data() + s.off_w3();
    const double* w2 = p.data() + s.off_w2();
    const double* w1 = p.data() + s.off_w1();
    const double* x = p.data() + s.off_embed() + c.input * s.embed;

    std::vector<double> d_h2(s.hidden, 0.0);
    for (std::size_t k = 0; k < s.outputs; ++k) {
        const double d = d_out[k];
        if (d == 0.0) continue;
        g[s.off_b3() + k] += d;
        double* gw = g.data() + s.off_w3() + k * s.hidden;
        const double* row = w3 + k * s.hidden;
        for (std::size_t i = 0; i < s.hidden; ++i) {
            gw[i] += d * c.h2[i];
            d_h2[i] += d * row[i];
        }
    }
    std::vector<double> d_h1(s.hidden, 0.0);
    for (std::size_t j = 0; j < s.hidden; ++j) {
        const double d = d_h2[j] * (1.0 - c.h2[j] * c.h2[j]);
        if (d == 0.0) continue;
        g[s.off_b2() + j] += d;
        double* gw = g.data() + s.off_w2() + j * s.hidden;
        const double* row = w2 + j * s.hidden;
        for (std::size_t i = 0; i < s.hidden; ++i) {
            gw[i] += d * c.h1[i];
            d_h1[i] += d * row[i];
        }
    }
    double* gx = g.data() + s.off_embed() + c.input * s.embed;
    for (std::size_t j = 0; j < s.hidden; ++j) {
        const double d = d_h1[j] * (1.0 - c.h1[j] * c.h1[j]);
        if (d == 0.0) continue;
        g[s.off_b1() + j] += d;
        double* gw = g.data() + s.off_w1() + j * s.embed;
        const double* row = w1 + j * s.embed;
        for (std::size_t i = 0; i < s.embed; ++i) {
            gw[i] += d * x[i];
            gx[i] += d * row[i];
        }
    }
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::resize(std::size_t n) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    t_ = 0;
}

void Adam::reset() { resize(m_.size()); }

void Adam::step(std::span<double> params, std::span<const double> grad, double lr, bool ascent) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw std::invalid_argument("adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double sign = ascent ? 1.0 : -1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] += sign * lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

} // namespace riskrl
