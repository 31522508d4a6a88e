#pragma once

// Stratified k-fold cross-validation over a hyperparameter grid for the
// linear trainers, with the best setting retrained on the full dataset.

#include <random>
#include <vector>

#include "mlcv/common.hpp"
#include "mlcv/dataset.hpp"
#include "mlcv/linear.hpp"

namespace mlcv {

enum class TrainerKind { LinearSvm, LogReg };

inline std::string to_string(TrainerKind t) {
    return t == TrainerKind::LinearSvm ? "linear_svm" : "logreg";
}

struct HyperSetting {
    Penalty penalty = Penalty::L1;
    double C = 1.0;
};

struct CrossValReport {
    std::vector<HyperSetting> grid;
    std::vector<double> mean_accuracy;                // per setting
    std::vector<double> std_accuracy;                 // per setting, over k folds (n divisor)
    std::vector<std::vector<double>> fold_accuracy;   // per setting, per fold
    std::size_t k = 0;
    std::size_t best_index = 0;
    TrainResult final_model;                          // best setting retrained on everything
};

// Deterministic stratified folds: per-class shuffle with the seeded engine,
// then round-robin deal into k folds.
inline std::vector<std::vector<std::size_t>> stratified_folds(const LabeledDataset& data,
                                                              std::size_t k, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.class_count));
    for (std::size_t i = 0; i < data.y.size(); ++i)
        by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
    std::mt19937_64 rng(derive_seed(seed, 0x33));
    std::vector<std::vector<std::size_t>> folds(k);
    for (auto& cls : by_class) {
        std::shuffle(cls.begin(), cls.end(), rng);
        for (std::size_t i = 0; i < cls.size(); ++i) folds[i % k].push_back(cls[i]);
    }
    return folds;
}

inline CrossValReport kfold_cross_validate(const LabeledDataset& data, std::size_t k,
                                           const std::vector<HyperSetting>& grid,
                                           TrainerKind trainer, std::uint64_t seed,
                                           double tol = 1e-4, std::size_t max_iter = 1000) {
    data.validate();
    if (k < 3 || k > 10)
        throw InvalidArgumentError("k must be in [3, 10], got " + std::to_string(k));
    const auto counts = data.class_counts();
    for (int c = 0; c < data.class_count; ++c)
        if (counts[static_cast<std::size_t>(c)] < k)
            throw InvalidArgumentError("k = " + std::to_string(k) + " exceeds class " +
                                       std::to_string(c) + " count " +
                                       std::to_string(counts[static_cast<std::size_t>(c)]));
    if (grid.empty()) throw InvalidArgumentError("empty hyperparameter grid");

    const auto folds = stratified_folds(data, k, seed);

    auto train_one = [&](const LabeledDataset& d, const HyperSetting& h) {
        return trainer == TrainerKind::LinearSvm
                   ? train_linear_svm(d, h.penalty, h.C, tol, max_iter)
                   : train_logreg(d, h.penalty, h.C, tol, max_iter);
    };

    CrossValReport rep;
    rep.grid = grid;
    rep.k = k;
    for (const auto& setting : grid) {
        std::vector<double> accs;
        for (std::size_t f = 0; f < k; ++f) {
            LabeledDataset train, val;
            train.class_count = val.class_count = data.class_count;
            std::vector<std::size_t> tr_idx, va_idx(folds[f]);
            for (std::size_t g = 0; g < k; ++g)
                if (g != f) tr_idx.insert(tr_idx.end(), folds[g].begin(), folds[g].end());
            auto gather = [&](const std::vector<std::size_t>& idx, LabeledDataset& out) {
                out.X = Matrix(idx.size(), data.dim());
                out.y.resize(idx.size());
                for (std::size_t r = 0; r < idx.size(); ++r) {
                    auto src = data.X.row(idx[r]);
                    std::copy(src.begin(), src.end(), out.X.row(r).begin());
                    out.y[r] = data.y[idx[r]];
                }
            };
            gather(tr_idx, train);
            gather(va_idx, val);
            const TrainResult r = train_one(train, setting);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < val.size(); ++i)
                if (r.model.predict(val.X.row(i)) == val.y[i]) ++correct;
            accs.push_back(static_cast<double>(correct) / static_cast<double>(val.size()));
        }
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        var /= static_cast<double>(k);
        rep.fold_accuracy.push_back(accs);
        rep.mean_accuracy.push_back(mean);
        rep.std_accuracy.push_back(std::sqrt(var));
    }

    // Best = highest mean; ties prefer the smallest C, then earliest order.
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (rep.mean_accuracy[i] > rep.mean_accuracy[best] ||
            (rep.mean_accuracy[i] == rep.mean_accuracy[best] && grid[i].C < grid[best].C))
            best = i;
    }
    rep.best_index = best;
    rep.final_model = train_one(data, grid[best]);
    return rep;
}

}  // namespace mlcv
