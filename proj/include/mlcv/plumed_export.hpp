#pragma once

// PLUMED-2 text emission: every CV kind becomes one CUSTOM line carrying
// its exact closed-form expression (scaler folded in, networks inlined),
// followed by a commented METAD stanza template with the bundle's hill
// parameters. The emitted FUNC strings parse under expression.hpp, which
// is how the round trip is verified.

#include <random>
#include <string>
#include <vector>

#include "mlcv/expression.hpp"
#include "mlcv/model_io.hpp"

namespace mlcv {

constexpr std::size_t kMaxPlumedLine = 1'000'000;

namespace detail {

// Input expression for feature i: plain variable, or the scaler fold.
inline std::string feature_expr(const FeatureSpec& spec, std::size_t i) {
    std::string v = "v" + std::to_string(i + 1);
    if (!spec.scaler) return v;
    return "((" + v + "-(" + format_g17(spec.scaler->mean[i]) + "))/(" +
           format_g17(spec.scaler->std[i]) + "))";
}

// ((w1*e1+w2*e2+...+wn*en)+(b))
inline std::string affine_expr(const Vec& w, double b, const std::vector<std::string>& inputs) {
    std::string sum;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) sum += '+';
        sum += format_g17(w[i]) + "*" + inputs[i];
    }
    return "((" + sum + ")+(" + format_g17(b) + "))";
}

inline std::string sigmoid_expr(const std::string& z) { return "1/(1+exp(-" + z + "))"; }

inline std::string swish_expr(const std::string& z) {
    return "(" + z + ")*(" + sigmoid_expr(z) + ")";
}

inline std::vector<std::string> base_inputs(const FeatureSpec& spec) {
    std::vector<std::string> in(spec.output_dim());
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = feature_expr(spec, i);
    return in;
}

}  // namespace detail

// Closed-form expression(s) for the bundle's CV output(s), in terms of the
// raw (unscaled) feature variables v1..vn.
inline std::vector<std::string> cv_expressions(const ModelBundle& bundle) {
    std::vector<std::string> out;
    switch (bundle.cv_kind) {
        case CvKind::SvmDistance: {
            const auto inputs = detail::base_inputs(bundle.spec);
            std::string e = detail::affine_expr(bundle.linear->w, bundle.linear->b, inputs);
            if (bundle.cv_normalized) e += "/(" + format_g17(norm2(bundle.linear->w)) + ")";
            out.push_back(std::move(e));
            break;
        }
        case CvKind::LrProbability: {
            const auto inputs = detail::base_inputs(bundle.spec);
            out.push_back(detail::sigmoid_expr(
                detail::affine_expr(bundle.linear->w, bundle.linear->b, inputs)));
            break;
        }
        case CvKind::LrOdds: {
            const auto inputs = detail::base_inputs(bundle.spec);
            out.push_back("exp(" +
                          detail::affine_expr(bundle.linear->w, bundle.linear->b, inputs) + ")");
            break;
        }
        case CvKind::MulticlassDistance: {
            const auto inputs = detail::base_inputs(bundle.spec);
            for (const LinearModel& m : bundle.multiclass->submodels)
                out.push_back(detail::affine_expr(m.w, m.b, inputs) + "/(" +
                              format_g17(norm2(m.w)) + ")");
            break;
        }
        case CvKind::DnnOutput: {
            std::vector<std::string> h = detail::base_inputs(bundle.spec);
            const auto& layers = bundle.mlp->layers;
            for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
                std::vector<std::string> next(layers[l].W.rows());
                for (std::size_t r = 0; r < layers[l].W.rows(); ++r) {
                    Vec wr(layers[l].W.row(r).begin(), layers[l].W.row(r).end());
                    next[r] = detail::swish_expr(detail::affine_expr(wr, layers[l].b[r], h));
                }
                h = std::move(next);
                for (const std::string& e : h)
                    if (e.size() > kMaxPlumedLine)
                        throw UnsupportedExportError(
                            "mlp expression exceeds the line guard at an inner layer (" +
                            std::to_string(e.size()) + " chars); use a smaller network");
            }
            const auto& last = layers.back();
            Vec wr(last.W.row(bundle.cv_node).begin(), last.W.row(bundle.cv_node).end());
            out.push_back(detail::affine_expr(wr, last.b[bundle.cv_node], h));
            break;
        }
        case CvKind::RawCoordinate:
            out.push_back("v1");
            break;
    }
    for (const std::string& e : out)
        if (e.size() > kMaxPlumedLine)
            throw UnsupportedExportError("emitted expression is " + std::to_string(e.size()) +
                                         " chars, above the " + std::to_string(kMaxPlumedLine) +
                                         " guard");
    return out;
}

// Full PLUMED block. `labels` are the caller's upstream feature labels,
// one per feature variable (one total for a raw-coordinate CV).
inline std::string emit_plumed(const ModelBundle& bundle, const std::vector<std::string>& labels) {
    const std::size_t nvars =
        bundle.cv_kind == CvKind::RawCoordinate ? 1 : bundle.spec.output_dim();
    if (labels.size() != nvars)
        throw InvalidArgumentError("emit_plumed: " + std::to_string(labels.size()) +
                                   " labels for " + std::to_string(nvars) + " feature variables");

    std::string args;
    std::string vars;
    for (std::size_t i = 0; i < nvars; ++i) {
        if (i) {
            args += ',';
            vars += ',';
        }
        args += labels[i];
        vars += "v" + std::to_string(i + 1);
    }

    const std::vector<std::string> exprs = cv_expressions(bundle);
    std::string text;
    std::string metad_args;
    for (std::size_t k = 0; k < exprs.size(); ++k) {
        const std::string label =
            exprs.size() == 1 ? std::string("sml_cv") : "sml_cv_" + std::to_string(k + 1);
        const std::string line = "CUSTOM ARG=" + args + " VAR=" + vars + " FUNC=" + exprs[k] +
                                 " PERIODIC=NO LABEL=" + label;
        if (line.size() > kMaxPlumedLine)
            throw UnsupportedExportError("emitted CUSTOM line is " + std::to_string(line.size()) +
                                         " chars, above the guard");
        text += line + "\n";
        if (k) metad_args += ',';
        metad_args += label;
    }

    WellTemperedParams wt;
    if (bundle.metad) wt = *bundle.metad;
    if (wt.sigma.empty()) wt.sigma.assign(exprs.size(), 0.1);
    std::string sigma;
    for (std::size_t d = 0; d < wt.sigma.size(); ++d)
        sigma += (d ? "," : "") + format_g17(wt.sigma[d]);
    text += "# Suggested metadynamics stanza:\n";
    text += "# METAD ARG=" + metad_args + " SIGMA=" + sigma + " HEIGHT=" + format_g17(wt.w0) +
            " PACE=" + std::to_string(wt.deposit_stride) + " BIASFACTOR=" + format_g17(wt.gamma) +
            " LABEL=metad\n";
    return text;
}

// Max |expression - in-process| over n random feature inputs, checked for
// every CV output the bundle defines.
inline double export_roundtrip_max_error(const ModelBundle& bundle, std::size_t n_inputs,
                                         std::uint64_t seed) {
    const std::vector<std::string> exprs = cv_expressions(bundle);
    std::vector<ExprPtr> parsed;
    for (const auto& e : exprs) parsed.push_back(parse_expression(e));
    const std::vector<CollectiveVariable> cvs = bundle.make_cvs();

    const std::size_t nvars =
        bundle.cv_kind == CvKind::RawCoordinate ? 1 : bundle.spec.output_dim();
    std::mt19937_64 rng(derive_seed(seed, 0x77));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    for (std::size_t it = 0; it < n_inputs; ++it) {
        Vec raw(nvars);
        for (double& v : raw) v = u(rng);
        Vec x = raw;
        if (bundle.cv_kind != CvKind::RawCoordinate && bundle.spec.scaler)
            x = bundle.spec.scaler->apply(raw);
        for (std::size_t k = 0; k < exprs.size(); ++k) {
            const double lhs = eval_expression(*parsed[k], raw);
            const double rhs = bundle.cv_kind == CvKind::RawCoordinate
                                   ? raw[0]
                                   : cvs[k].value_from_features(x);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

}  // namespace mlcv
