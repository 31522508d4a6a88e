#pragma once

// Small fully connected network: affine layers interleaved with Swish
// activations, final layer left un-normalized. Trained by minimizing the
// softmax cross-entropy with Adam on shuffled mini-batches. Everything is
// deterministic given the seed.

#include <random>
#include <vector>

#include "mlcv/common.hpp"
#include "mlcv/dataset.hpp"

namespace mlcv {

struct AffineLayer {
    Matrix W;   // out x in
    Vec b;      // out
};

struct MLPModel {
    std::vector<AffineLayer> layers;   // Swish between layers, none after the last

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().W.cols(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().W.rows(); }

    void validate() const {
        if (layers.empty()) throw InvalidArchitectureError("mlp: no layers");
        for (std::size_t l = 1; l < layers.size(); ++l)
            if (layers[l].W.cols() != layers[l - 1].W.rows())
                throw InvalidArchitectureError("mlp: layer " + std::to_string(l) +
                                               " input width " + std::to_string(layers[l].W.cols()) +
                                               " != previous output width " +
                                               std::to_string(layers[l - 1].W.rows()));
        for (const auto& L : layers)
            if (L.b.size() != L.W.rows())
                throw InvalidArchitectureError("mlp: bias width mismatch");
    }

    // Un-normalized output scores G(x).
    Vec forward(std::span<const double> x) const {
        if (x.size() != input_dim())
            throw InvalidInputError("mlp forward: input dim " + std::to_string(x.size()) +
                                    " != " + std::to_string(input_dim()));
        Vec h(x.begin(), x.end());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            Vec z(L.W.rows());
            for (std::size_t r = 0; r < L.W.rows(); ++r) z[r] = dot(L.W.row(r), h) + L.b[r];
            if (l + 1 < layers.size())
                for (double& v : z) v = swish(v);
            h = std::move(z);
        }
        return h;
    }

    int predict(std::span<const double> x) const {
        Vec out = forward(x);
        int best = 0;
        for (std::size_t k = 1; k < out.size(); ++k)
            if (out[k] > out[best]) best = static_cast<int>(k);
        return best;
    }

    // Gradient of output node `node` w.r.t. the input vector (backprop
    // through the affine/Swish stack). Used for CV forces.
    Vec input_gradient(std::span<const double> x, std::size_t node) const {
        if (node >= output_dim())
            throw InvalidArgumentError("mlp: output node " + std::to_string(node) +
                                       " out of range (width " + std::to_string(output_dim()) + ")");
        // Forward pass keeping pre-activations.
        std::vector<Vec> acts;         // activations entering each layer
        acts.emplace_back(x.begin(), x.end());
        std::vector<Vec> pre;          // pre-activation z per layer
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            Vec z(L.W.rows());
            for (std::size_t r = 0; r < L.W.rows(); ++r) z[r] = dot(L.W.row(r), acts.back()) + L.b[r];
            pre.push_back(z);
            if (l + 1 < layers.size()) {
                for (double& v : z) v = swish(v);
                acts.push_back(std::move(z));
            }
        }
        // Backward: delta starts as the selected output unit.
        Vec delta(output_dim(), 0.0);
        delta[node] = 1.0;
        for (std::size_t l = layers.size(); l-- > 0;) {
            const auto& L = layers[l];
            Vec prev(L.W.cols(), 0.0);
            for (std::size_t r = 0; r < L.W.rows(); ++r)
                for (std::size_t c = 0; c < L.W.cols(); ++c) prev[c] += delta[r] * L.W(r, c);
            if (l > 0)
                for (std::size_t c = 0; c < prev.size(); ++c)
                    prev[c] *= swish_derivative(pre[l - 1][c]);
            delta = std::move(prev);
        }
        return delta;
    }
};

struct MLPTrainConfig {
    std::vector<std::size_t> layer_widths;   // full chain: input .. output
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
};

struct MLPTrainResult {
    MLPModel model;
    double final_loss = 0.0;        // mean cross-entropy over the full set
    double training_accuracy = 0.0;
};

namespace detail {

// Mean cross-entropy and (optionally) parameter gradients over a batch.
// Returns the loss; gradients are accumulated into gW/gb when provided.
struct MLPBackprop {
    const MLPModel& model;

    double batch_loss_and_grad(const Matrix& X, const std::vector<int>& y,
                               std::span<const std::size_t> idx,
                               std::vector<Matrix>* gW, std::vector<Vec>* gb) const {
        const auto& layers = model.layers;
        if (gW) {
            gW->clear();
            gb->clear();
            for (const auto& L : layers) {
                gW->emplace_back(L.W.rows(), L.W.cols(), 0.0);
                gb->emplace_back(L.b.size(), 0.0);
            }
        }
        double loss = 0.0;
        std::vector<Vec> acts(layers.size() + 1);
        std::vector<Vec> pre(layers.size());
        for (std::size_t n : idx) {
            auto xr = X.row(n);
            acts[0].assign(xr.begin(), xr.end());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const auto& L = layers[l];
                pre[l].assign(L.W.rows(), 0.0);
                for (std::size_t r = 0; r < L.W.rows(); ++r)
                    pre[l][r] = dot(L.W.row(r), acts[l]) + L.b[r];
                acts[l + 1] = pre[l];
                if (l + 1 < layers.size())
                    for (double& v : acts[l + 1]) v = swish(v);
            }
            // Stable log-softmax.
            const Vec& out = acts.back();
            double mx = out[0];
            for (double v : out) mx = std::max(mx, v);
            double lse = 0.0;
            for (double v : out) lse += std::exp(v - mx);
            lse = mx + std::log(lse);
            loss += lse - out[static_cast<std::size_t>(y[n])];

            if (!gW) continue;
            // delta at output: softmax - onehot
            Vec delta(out.size());
            for (std::size_t k = 0; k < out.size(); ++k)
                delta[k] = std::exp(out[k] - lse) - (static_cast<int>(k) == y[n] ? 1.0 : 0.0);
            for (std::size_t l = layers.size(); l-- > 0;) {
                const auto& L = layers[l];
                auto& gWl = (*gW)[l];
                auto& gbl = (*gb)[l];
                for (std::size_t r = 0; r < L.W.rows(); ++r) {
                    gbl[r] += delta[r];
                    for (std::size_t c = 0; c < L.W.cols(); ++c)
                        gWl(r, c) += delta[r] * acts[l][c];
                }
                if (l == 0) break;
                Vec prev(L.W.cols(), 0.0);
                for (std::size_t r = 0; r < L.W.rows(); ++r)
                    for (std::size_t c = 0; c < L.W.cols(); ++c) prev[c] += delta[r] * L.W(r, c);
                for (std::size_t c = 0; c < prev.size(); ++c)
                    prev[c] *= swish_derivative(pre[l - 1][c]);
                delta = std::move(prev);
            }
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        loss *= inv;
        if (gW) {
            for (auto& g : *gW)
                for (double& v : g.data()) v *= inv;
            for (auto& g : *gb)
                for (double& v : g) v *= inv;
        }
        return loss;
    }
};

}  // namespace detail

inline MLPModel init_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw InvalidArchitectureError("mlp: need at least input and output widths");
    MLPModel m;
    std::mt19937_64 rng(derive_seed(seed, 0x11));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l], out = widths[l + 1];
        if (in == 0 || out == 0) throw InvalidArchitectureError("mlp: zero layer width");
        // Glorot-uniform initialization.
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-bound, bound);
        AffineLayer L{Matrix(out, in), Vec(out, 0.0)};
        for (double& v : L.W.data()) v = u(rng);
        m.layers.push_back(std::move(L));
    }
    return m;
}

inline MLPTrainResult train_mlp(const LabeledDataset& data, const MLPTrainConfig& cfg) {
    data.validate();
    if (cfg.epochs < 1) throw InvalidArgumentError("mlp: epochs must be >= 1");
    if (cfg.batch_size < 1) throw InvalidArgumentError("mlp: batch_size must be >= 1");
    if (cfg.layer_widths.size() < 2)
        throw InvalidArchitectureError("mlp: layer_widths must chain input..output");
    if (cfg.layer_widths.front() != data.dim())
        throw InvalidArchitectureError("mlp: first width " + std::to_string(cfg.layer_widths.front()) +
                                       " != feature dim " + std::to_string(data.dim()));
    if (cfg.layer_widths.back() != static_cast<std::size_t>(data.class_count))
        throw InvalidArchitectureError("mlp: last width " + std::to_string(cfg.layer_widths.back()) +
                                       " != class count " + std::to_string(data.class_count));

    MLPModel model = init_mlp(cfg.layer_widths, cfg.seed);
    detail::MLPBackprop bp{model};

    // Adam state.
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<Matrix> mW, vW, gW;
    std::vector<Vec> mb, vb, gb;
    for (const auto& L : model.layers) {
        mW.emplace_back(L.W.rows(), L.W.cols(), 0.0);
        vW.emplace_back(L.W.rows(), L.W.cols(), 0.0);
        mb.emplace_back(L.b.size(), 0.0);
        vb.emplace_back(L.b.size(), 0.0);
    }

    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x22));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    long t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> batch(order.data() + start, stop - start);
            bp.batch_loss_and_grad(data.X, data.y, batch, &gW, &gb);
            ++t;
            const double corr = std::sqrt(1.0 - std::pow(beta2, t)) / (1.0 - std::pow(beta1, t));
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto& W = model.layers[l].W;
                for (std::size_t k = 0; k < W.data().size(); ++k) {
                    double& mval = mW[l].data()[k];
                    double& vval = vW[l].data()[k];
                    const double g = gW[l].data()[k];
                    mval = beta1 * mval + (1.0 - beta1) * g;
                    vval = beta2 * vval + (1.0 - beta2) * g * g;
                    W.data()[k] -= cfg.learning_rate * corr * mval / (std::sqrt(vval) + eps);
                }
                auto& bvec = model.layers[l].b;
                for (std::size_t k = 0; k < bvec.size(); ++k) {
                    double& mval = mb[l][k];
                    double& vval = vb[l][k];
                    const double g = gb[l][k];
                    mval = beta1 * mval + (1.0 - beta1) * g;
                    vval = beta2 * vval + (1.0 - beta2) * g * g;
                    bvec[k] -= cfg.learning_rate * corr * mval / (std::sqrt(vval) + eps);
                }
            }
        }
    }

    MLPTrainResult res;
    std::vector<std::size_t> all(order.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    res.final_loss = bp.batch_loss_and_grad(data.X, data.y, all, nullptr, nullptr);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (model.predict(data.X.row(i)) == data.y[i]) ++correct;
    res.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    res.model = std::move(model);
    return res;
}

}  // namespace mlcv
