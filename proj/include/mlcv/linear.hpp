#pragma once

// Linear classifiers trained from scratch: squared-hinge SVM and logistic
// regression, with L1 or L2 penalties, plus the one-vs-rest multiclass
// wrapper. The objective convention is penalty(w) + C * sum(loss), so
// C values from the usual ML toolkits transfer directly.
//
// Solver: proximal gradient with backtracking line search (plain gradient
// descent when the penalty is L2, which is folded into the smooth part).
// Deterministic, full batch, initialized at w = 0, b = 0.

#include <span>
#include <string>
#include <vector>

#include "mlcv/common.hpp"
#include "mlcv/dataset.hpp"

namespace mlcv {

enum class Penalty { L1, L2 };
enum class LossKind { SquaredHinge, Logistic };

inline std::string to_string(Penalty p) { return p == Penalty::L1 ? "l1" : "l2"; }
inline std::string to_string(LossKind l) {
    return l == LossKind::SquaredHinge ? "squared_hinge" : "logistic";
}

struct LinearModel {
    Vec w;
    double b = 0.0;
    Penalty penalty = Penalty::L2;
    double C = 1.0;
    LossKind loss_kind = LossKind::SquaredHinge;

    double decision_value(std::span<const double> x) const {
        if (x.size() != w.size())
            throw InvalidInputError("decision_value: dimension mismatch: x has " +
                                    std::to_string(x.size()) + ", model has " +
                                    std::to_string(w.size()));
        return dot(w, x) + b;
    }

    // Binary label per the strict indicator: 1 iff w.x + b > 0.
    int predict(std::span<const double> x) const { return decision_value(x) > 0.0 ? 1 : 0; }
};

struct TrainResult {
    LinearModel model;
    bool converged = false;
    double final_objective = 0.0;
    std::size_t iterations = 0;
    Vec objective_history;     // objective after each outer iteration
    double training_accuracy = 0.0;
};

namespace detail {

struct LinearProblem {
    const Matrix& X;
    const std::vector<int>& y;   // already in {0,1}
    LossKind loss;
    double C;

    // Smooth data term C * sum(loss_i) at (w, b).
    double value(const Vec& w, double b) const {
        double total = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            const double z = dot(std::span<const double>(w), X.row(i)) + b;
            const double m = (y[i] == 1 ? z : -z);
            if (loss == LossKind::SquaredHinge) {
                const double h = std::max(0.0, 1.0 - m);
                total += h * h;
            } else {
                total += log1pexp(-m);
            }
        }
        return C * total;
    }

    // Gradient of the smooth data term.
    void gradient(const Vec& w, double b, Vec& gw, double& gb) const {
        gw.assign(w.size(), 0.0);
        gb = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            const double z = dot(std::span<const double>(w), X.row(i)) + b;
            const double ytil = (y[i] == 1 ? 1.0 : -1.0);
            double dz;
            if (loss == LossKind::SquaredHinge) {
                const double h = std::max(0.0, 1.0 - ytil * z);
                dz = -2.0 * ytil * h;
            } else {
                dz = -ytil * sigmoid(-ytil * z);
            }
            axpy(C * dz, X.row(i), gw);
            gb += C * dz;
        }
    }
};

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace detail

inline TrainResult train_linear(const LabeledDataset& data, LossKind loss, Penalty penalty,
                                double C, double tol, std::size_t max_iter) {
    data.validate();
    if (data.class_count != 2)
        throw InvalidDatasetError("binary trainer needs exactly 2 classes, got " +
                                  std::to_string(data.class_count));
    if (!(C > 0.0)) throw InvalidArgumentError("C must be > 0");
    if (!(tol > 0.0)) throw InvalidArgumentError("tol must be > 0");

    const std::size_t d = data.dim();
    detail::LinearProblem prob{data.X, data.y, loss, C};

    Vec w(d, 0.0);
    double b = 0.0;

    auto smooth_value = [&](const Vec& wv, double bv) {
        double v = prob.value(wv, bv);
        if (penalty == Penalty::L2) v += 0.5 * dot(wv, wv);
        return v;
    };
    auto full_objective = [&](const Vec& wv, double bv) {
        double v = smooth_value(wv, bv);
        if (penalty == Penalty::L1) v += norm1(wv);
        return v;
    };

    TrainResult res;
    double objective = full_objective(w, b);
    double eta = 1.0;
    Vec gw(d), w_next(d);

    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        double gb;
        prob.gradient(w, b, gw, gb);
        if (penalty == Penalty::L2) axpy(1.0, w, gw);
        const double f0 = smooth_value(w, b);

        // Backtracking: shrink the step until the quadratic upper bound
        // holds; this makes the composite objective non-increasing.
        double b_next = b;
        eta = std::min(eta * 1.3, 1e6);
        for (;;) {
            for (std::size_t j = 0; j < d; ++j) {
                const double cand = w[j] - eta * gw[j];
                w_next[j] = (penalty == Penalty::L1) ? detail::soft_threshold(cand, eta) : cand;
            }
            b_next = b - eta * gb;
            double ip = gb * (b_next - b), sq = (b_next - b) * (b_next - b);
            for (std::size_t j = 0; j < d; ++j) {
                const double dj = w_next[j] - w[j];
                ip += gw[j] * dj;
                sq += dj * dj;
            }
            const double f1 = smooth_value(w_next, b_next);
            if (f1 <= f0 + ip + sq / (2.0 * eta) + 1e-12 * std::abs(f0)) break;
            eta *= 0.5;
            if (eta < 1e-18) break;   // step has collapsed; accept and let tol stop us
        }
        std::swap(w, w_next);
        b = b_next;

        const double next_objective = full_objective(w, b);
        res.objective_history.push_back(next_objective);
        const double decrease = objective - next_objective;
        const bool done = decrease < tol * std::max(1.0, std::abs(objective));
        objective = next_objective;
        if (done) {
            res.converged = true;
            ++it;
            break;
        }
    }

    res.model = LinearModel{std::move(w), b, penalty, C, loss};
    res.final_objective = objective;
    res.iterations = it;

    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (res.model.predict(data.X.row(i)) == data.y[i]) ++correct;
    res.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return res;
}

inline TrainResult train_linear_svm(const LabeledDataset& data, Penalty penalty, double C,
                                    double tol = 1e-4, std::size_t max_iter = 1000) {
    return train_linear(data, LossKind::SquaredHinge, penalty, C, tol, max_iter);
}

inline TrainResult train_logreg(const LabeledDataset& data, Penalty penalty, double C,
                                double tol = 1e-4, std::size_t max_iter = 1000) {
    return train_linear(data, LossKind::Logistic, penalty, C, tol, max_iter);
}

// --- one-vs-rest multiclass ---------------------------------------------------

struct MulticlassLinearModel {
    std::vector<LinearModel> submodels;   // one per state, index = class id

    std::size_t state_count() const { return submodels.size(); }
    std::size_t dim() const { return submodels.empty() ? 0 : submodels.front().w.size(); }

    // Signed distance to the hyperplane of state k.
    double state_distance(std::size_t k, std::span<const double> x) const {
        const LinearModel& m = submodels.at(k);
        const double nw = norm2(m.w);
        if (!(nw > 0.0))
            throw DegenerateModelError("multiclass: zero weight vector for state " +
                                       std::to_string(k));
        return m.decision_value(x) / nw;
    }

    // Closest state = largest signed distance; ties break to the lowest index.
    int predict(std::span<const double> x) const {
        int best = 0;
        double best_d = state_distance(0, x);
        for (std::size_t k = 1; k < submodels.size(); ++k) {
            const double dk = state_distance(k, x);
            if (dk > best_d) {
                best_d = dk;
                best = static_cast<int>(k);
            }
        }
        return best;
    }
};

struct MulticlassTrainResult {
    MulticlassLinearModel model;
    std::vector<TrainResult> per_state;
    double training_accuracy = 0.0;
};

inline MulticlassTrainResult train_multiclass_ovr(const LabeledDataset& data, Penalty penalty,
                                                  double C, double tol = 1e-4,
                                                  std::size_t max_iter = 1000) {
    data.validate();
    if (data.class_count < 3)
        throw InvalidDatasetError("one-vs-rest needs >= 3 classes (use the binary trainer for 2)");

    MulticlassTrainResult out;
    for (int k = 0; k < data.class_count; ++k) {
        LabeledDataset sub;
        sub.X = data.X;
        sub.class_count = 2;
        sub.y.resize(data.y.size());
        for (std::size_t i = 0; i < data.y.size(); ++i) sub.y[i] = (data.y[i] == k) ? 1 : 0;
        TrainResult r = train_linear_svm(sub, penalty, C, tol, max_iter);
        out.model.submodels.push_back(r.model);
        out.per_state.push_back(std::move(r));
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (out.model.predict(data.X.row(i)) == data.y[i]) ++correct;
    out.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return out;
}

}  // namespace mlcv
