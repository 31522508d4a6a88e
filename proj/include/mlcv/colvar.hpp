#pragma once

// Collective variables built from trained classifiers composed with the
// feature pipeline. Each CV is a differentiable scalar function of the raw
// coordinates; gradients come from the chain rule
//     dCV/dq = (dCV/dX) . (dX/dq)
// with dX/dq the analytic feature Jacobian.

#include <memory>
#include <optional>
#include <string>

#include "mlcv/common.hpp"
#include "mlcv/features.hpp"
#include "mlcv/linear.hpp"
#include "mlcv/mlp.hpp"

namespace mlcv {

enum class CvKind {
    SvmDistance,          // (w.X + b)/|w|  (or the raw decision value)
    LrProbability,        // sigmoid(w.X + b)
    LrOdds,               // exp(w.X + b)
    DnnOutput,            // un-normalized network output node
    MulticlassDistance,   // per-state hyperplane distance
    RawCoordinate,        // one raw coordinate, optionally periodic
};

inline std::string to_string(CvKind k) {
    switch (k) {
        case CvKind::SvmDistance: return "svm_distance";
        case CvKind::LrProbability: return "lr_probability";
        case CvKind::LrOdds: return "lr_odds";
        case CvKind::DnnOutput: return "dnn_output";
        case CvKind::MulticlassDistance: return "multiclass_distance";
        case CvKind::RawCoordinate: return "raw_coordinate";
    }
    return "?";
}

struct CVValue {
    double value = 0.0;
    Vec gradient;   // dCV/dq, one entry per raw coordinate
};

// --- plain decision-function evaluations (feature space) ---------------------

inline double svm_cv(const LinearModel& model, std::span<const double> x, bool normalized = true) {
    const double nw = norm2(model.w);
    if (!(nw > 0.0)) throw DegenerateModelError("svm_cv: zero weight vector");
    const double z = model.decision_value(x);
    return normalized ? z / nw : z;
}

inline double lr_cv(const LinearModel& model, std::span<const double> x) {
    return sigmoid(model.decision_value(x));
}

// Odds ratio p/(1-p); computed as exp(z), which is the same quantity
// without the cancellation at p near 1.
inline double lr_odds_cv(const LinearModel& model, std::span<const double> x) {
    return std::exp(model.decision_value(x));
}

inline double dnn_cv(const MLPModel& model, std::span<const double> x, std::size_t node) {
    if (node >= model.output_dim())
        throw InvalidArgumentError("dnn_cv: node " + std::to_string(node) + " out of range");
    return model.forward(x)[node];
}

inline Vec multiclass_cvs(const MulticlassLinearModel& model, std::span<const double> x) {
    Vec out(model.state_count());
    for (std::size_t k = 0; k < model.state_count(); ++k) out[k] = model.state_distance(k, x);
    return out;
}

// --- the CV object -----------------------------------------------------------

class CollectiveVariable {
public:
    static CollectiveVariable svm_distance(LinearModel model, FeatureSpec spec,
                                           bool normalized = true) {
        CollectiveVariable cv(CvKind::SvmDistance, std::move(spec));
        if (!(norm2(model.w) > 0.0))
            throw DegenerateModelError("svm_distance: zero weight vector");
        cv.linear_ = std::move(model);
        cv.normalized_ = normalized;
        cv.check_dims(cv.linear_->w.size());
        return cv;
    }

    static CollectiveVariable lr_probability(LinearModel model, FeatureSpec spec) {
        CollectiveVariable cv(CvKind::LrProbability, std::move(spec));
        cv.linear_ = std::move(model);
        cv.check_dims(cv.linear_->w.size());
        return cv;
    }

    static CollectiveVariable lr_odds(LinearModel model, FeatureSpec spec) {
        CollectiveVariable cv(CvKind::LrOdds, std::move(spec));
        cv.linear_ = std::move(model);
        cv.check_dims(cv.linear_->w.size());
        return cv;
    }

    static CollectiveVariable dnn_output(MLPModel model, FeatureSpec spec, std::size_t node = 1) {
        CollectiveVariable cv(CvKind::DnnOutput, std::move(spec));
        model.validate();
        if (node >= model.output_dim())
            throw InvalidArgumentError("dnn_output: node index out of range");
        cv.mlp_ = std::move(model);
        cv.node_ = node;
        cv.check_dims(cv.mlp_->input_dim());
        return cv;
    }

    static CollectiveVariable multiclass_distance(MulticlassLinearModel model, FeatureSpec spec,
                                                  std::size_t state) {
        CollectiveVariable cv(CvKind::MulticlassDistance, std::move(spec));
        if (state >= model.state_count())
            throw InvalidArgumentError("multiclass_distance: state index out of range");
        if (!(norm2(model.submodels[state].w) > 0.0))
            throw DegenerateModelError("multiclass_distance: zero weight vector for state " +
                                       std::to_string(state));
        cv.multi_ = std::move(model);
        cv.state_ = state;
        cv.check_dims(cv.multi_->dim());
        return cv;
    }

    static CollectiveVariable raw_coordinate(std::size_t index, bool periodic = false) {
        CollectiveVariable cv(CvKind::RawCoordinate, FeatureSpec{});
        cv.coord_index_ = index;
        cv.periodic_ = periodic;
        return cv;
    }

    CvKind kind() const { return kind_; }
    const FeatureSpec& spec() const { return spec_; }
    bool periodic() const { return periodic_; }
    std::size_t coordinate_index() const { return coord_index_; }
    std::size_t node() const { return node_; }
    std::size_t state() const { return state_; }
    bool normalized() const { return normalized_; }
    const LinearModel& linear_model() const { return *linear_; }
    const MLPModel& mlp_model() const { return *mlp_; }
    const MulticlassLinearModel& multiclass_model() const { return *multi_; }

    double value(const Frame& frame) const {
        if (kind_ == CvKind::RawCoordinate) {
            if (coord_index_ >= frame.coords.size())
                throw InvalidInputError("raw_coordinate: index out of range");
            return frame.coords[coord_index_];
        }
        return value_from_features(spec_.featurize(frame));
    }

    CVValue value_and_gradient(const Frame& frame) const {
        CVValue out;
        out.gradient.assign(frame.coords.size(), 0.0);
        if (kind_ == CvKind::RawCoordinate) {
            if (coord_index_ >= frame.coords.size())
                throw InvalidInputError("raw_coordinate: index out of range");
            out.value = frame.coords[coord_index_];
            out.gradient[coord_index_] = 1.0;
            return out;
        }
        const Vec x = spec_.featurize(frame);
        out.value = value_from_features(x);
        const Vec dcv_dx = feature_gradient(x);
        const Matrix J = spec_.jacobian(frame);
        for (std::size_t i = 0; i < J.rows(); ++i)
            axpy(dcv_dx[i], J.row(i), out.gradient);
        return out;
    }

    // dCV/dX at a feature vector.
    Vec feature_gradient(const Vec& x) const {
        switch (kind_) {
            case CvKind::SvmDistance: {
                const double nw = norm2(linear_->w);
                Vec g = linear_->w;
                if (normalized_)
                    for (double& v : g) v /= nw;
                return g;
            }
            case CvKind::LrProbability: {
                const double p = sigmoid(linear_->decision_value(x));
                Vec g = linear_->w;
                for (double& v : g) v *= p * (1.0 - p);
                return g;
            }
            case CvKind::LrOdds: {
                const double e = std::exp(linear_->decision_value(x));
                Vec g = linear_->w;
                for (double& v : g) v *= e;
                return g;
            }
            case CvKind::DnnOutput:
                return mlp_->input_gradient(x, node_);
            case CvKind::MulticlassDistance: {
                const LinearModel& m = multi_->submodels[state_];
                const double nw = norm2(m.w);
                Vec g = m.w;
                for (double& v : g) v /= nw;
                return g;
            }
            case CvKind::RawCoordinate:
                break;
        }
        throw InvalidArgumentError("feature_gradient: raw coordinate CV has no feature space");
    }

    double value_from_features(const Vec& x) const {
        switch (kind_) {
            case CvKind::SvmDistance: return svm_cv(*linear_, x, normalized_);
            case CvKind::LrProbability: return lr_cv(*linear_, x);
            case CvKind::LrOdds: return lr_odds_cv(*linear_, x);
            case CvKind::DnnOutput: return dnn_cv(*mlp_, x, node_);
            case CvKind::MulticlassDistance: return multi_->state_distance(state_, x);
            case CvKind::RawCoordinate: break;
        }
        throw InvalidArgumentError("value_from_features: raw coordinate CV has no feature space");
    }

private:
    CollectiveVariable(CvKind kind, FeatureSpec spec) : kind_(kind), spec_(std::move(spec)) {}

    void check_dims(std::size_t model_dim) const {
        const std::size_t fd = spec_.output_dim();
        if (fd != model_dim)
            throw InvalidInputError("collective variable: model expects " +
                                    std::to_string(model_dim) + " features, spec produces " +
                                    std::to_string(fd));
    }

    CvKind kind_;
    FeatureSpec spec_;
    std::optional<LinearModel> linear_;
    std::optional<MLPModel> mlp_;
    std::optional<MulticlassLinearModel> multi_;
    std::size_t node_ = 1;
    std::size_t state_ = 0;
    bool normalized_ = true;
    std::size_t coord_index_ = 0;
    bool periodic_ = false;
};

}  // namespace mlcv
