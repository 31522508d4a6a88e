#pragma once

// Portable model persistence. Bundles carry the trained model, the feature
// spec (including any scaler), the CV definition and optionally the hill
// parameters used when the model drives sampling.
//
// Serialization is canonical: fields in a fixed order, reals at 17
// significant digits, so identical bundles produce identical bytes and
// save -> load -> save round-trips bit-exactly. Loading goes through a
// JSON parser and validates the schema and the stored-norm invariant.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mlcv/bias.hpp"
#include "mlcv/colvar.hpp"
#include "mlcv/common.hpp"
#include "mlcv/features.hpp"
#include "mlcv/linear.hpp"
#include "mlcv/mlp.hpp"

namespace mlcv {

constexpr int kModelSchemaVersion = 1;

struct ModelBundle {
    std::string kind;   // "linear_svm", "logreg", "multiclass_svm", "mlp", "raw"
    std::optional<LinearModel> linear;
    std::optional<MulticlassLinearModel> multiclass;
    std::optional<MLPModel> mlp;
    FeatureSpec spec;

    CvKind cv_kind = CvKind::SvmDistance;
    bool cv_normalized = true;
    std::size_t cv_node = 1;
    std::size_t cv_coordinate = 0;
    bool cv_periodic = false;

    std::optional<WellTemperedParams> metad;

    // Number of scalar CV outputs this bundle defines.
    std::size_t cv_outputs() const {
        return cv_kind == CvKind::MulticlassDistance && multiclass ? multiclass->state_count() : 1;
    }

    std::vector<CollectiveVariable> make_cvs() const {
        std::vector<CollectiveVariable> out;
        switch (cv_kind) {
            case CvKind::SvmDistance:
                out.push_back(CollectiveVariable::svm_distance(*linear, spec, cv_normalized));
                break;
            case CvKind::LrProbability:
                out.push_back(CollectiveVariable::lr_probability(*linear, spec));
                break;
            case CvKind::LrOdds:
                out.push_back(CollectiveVariable::lr_odds(*linear, spec));
                break;
            case CvKind::DnnOutput:
                out.push_back(CollectiveVariable::dnn_output(*mlp, spec, cv_node));
                break;
            case CvKind::MulticlassDistance:
                for (std::size_t k = 0; k < multiclass->state_count(); ++k)
                    out.push_back(CollectiveVariable::multiclass_distance(*multiclass, spec, k));
                break;
            case CvKind::RawCoordinate:
                out.push_back(CollectiveVariable::raw_coordinate(cv_coordinate, cv_periodic));
                break;
        }
        return out;
    }
};

namespace detail {

class JsonWriter {
public:
    std::string str() const { return out_.str(); }

    void begin_object() { item(); out_ << '{'; first_.push_back(true); }
    void end_object() { out_ << '}'; first_.pop_back(); }
    void begin_array() { item(); out_ << '['; first_.push_back(true); }
    void end_array() { out_ << ']'; first_.pop_back(); }

    void key(const std::string& k) {
        item();
        out_ << '"' << k << "\":";
        pending_value_ = true;
    }
    void value(double v) { item(); out_ << format_g17(v); }
    void value(long v) { item(); out_ << v; }
    void value(std::size_t v) { item(); out_ << v; }
    void value(int v) { item(); out_ << v; }
    void value(bool v) { item(); out_ << (v ? "true" : "false"); }
    void value(const std::string& v) { item(); out_ << '"' << v << '"'; }
    void null() { item(); out_ << "null"; }

    void array(const Vec& v) {
        begin_array();
        for (double x : v) value(x);
        end_array();
    }

private:
    // Comma placement: a value following a key never takes one; any other
    // item after the first in its container does.
    void item() {
        if (pending_value_) {
            pending_value_ = false;
            return;
        }
        if (!first_.empty()) {
            if (!first_.back()) out_ << ',';
            first_.back() = false;
        }
    }
    std::ostringstream out_;
    std::vector<bool> first_;
    bool pending_value_ = false;
};

inline void write_linear(JsonWriter& w, const LinearModel& m) {
    w.begin_object();
    w.key("w");
    w.array(m.w);
    w.key("b");
    w.value(m.b);
    w.key("norm");
    w.value(norm2(m.w));
    w.key("penalty");
    w.value(to_string(m.penalty));
    w.key("C");
    w.value(m.C);
    w.key("loss");
    w.value(to_string(m.loss_kind));
    w.end_object();
}

inline void write_spec(JsonWriter& w, const FeatureSpec& spec) {
    w.begin_object();
    w.key("transforms");
    w.begin_array();
    for (const auto& t : spec.transforms) {
        w.begin_object();
        if (const auto* sc = std::get_if<SinCosTransform>(&t)) {
            w.key("type");
            w.value(std::string("sincos"));
            w.key("angle");
            w.value(sc->angle_index);
        } else if (const auto* cd = std::get_if<ContactDistanceTransform>(&t)) {
            w.key("type");
            w.value(std::string("contact_distance"));
            w.key("i");
            w.value(cd->atom_i);
            w.key("j");
            w.value(cd->atom_j);
        } else if (const auto* pd = std::get_if<PseudoDihedralCosTransform>(&t)) {
            w.key("type");
            w.value(std::string("pseudo_dihedral_cos"));
            w.key("atoms");
            w.begin_array();
            w.value(pd->a);
            w.value(pd->b);
            w.value(pd->c);
            w.value(pd->d);
            w.end_array();
        } else {
            const auto& r = std::get<RawTransform>(t);
            w.key("type");
            w.value(std::string("raw"));
            w.key("index");
            w.value(r.coordinate_index);
        }
        w.end_object();
    }
    w.end_array();
    w.key("scaler");
    if (spec.scaler) {
        w.begin_object();
        w.key("mean");
        w.array(spec.scaler->mean);
        w.key("std");
        w.array(spec.scaler->std);
        w.end_object();
    } else {
        w.null();
    }
    w.end_object();
}

}  // namespace detail

inline std::string serialize_model(const ModelBundle& bundle) {
    detail::JsonWriter w;
    w.begin_object();
    w.key("schema_version");
    w.value(kModelSchemaVersion);
    w.key("kind");
    w.value(bundle.kind);
    w.key("cv");
    w.begin_object();
    w.key("kind");
    w.value(to_string(bundle.cv_kind));
    w.key("normalized");
    w.value(bundle.cv_normalized);
    w.key("node");
    w.value(bundle.cv_node);
    w.key("coordinate");
    w.value(bundle.cv_coordinate);
    w.key("periodic");
    w.value(bundle.cv_periodic);
    w.end_object();
    w.key("feature_spec");
    detail::write_spec(w, bundle.spec);
    w.key("model");
    if (bundle.linear) {
        detail::write_linear(w, *bundle.linear);
    } else if (bundle.multiclass) {
        w.begin_object();
        w.key("states");
        w.begin_array();
        for (const auto& m : bundle.multiclass->submodels) detail::write_linear(w, m);
        w.end_array();
        w.end_object();
    } else if (bundle.mlp) {
        w.begin_object();
        w.key("layers");
        w.begin_array();
        for (const auto& L : bundle.mlp->layers) {
            w.begin_object();
            w.key("rows");
            w.value(L.W.rows());
            w.key("cols");
            w.value(L.W.cols());
            w.key("W");
            w.array(L.W.data());
            w.key("b");
            w.array(L.b);
            w.end_object();
        }
        w.end_array();
        w.end_object();
    } else {
        w.null();
    }
    w.key("metad");
    if (bundle.metad) {
        w.begin_object();
        w.key("w0");
        w.value(bundle.metad->w0);
        w.key("sigma");
        w.array(bundle.metad->sigma);
        w.key("gamma");
        w.value(bundle.metad->gamma);
        w.key("deposit_stride");
        w.value(bundle.metad->deposit_stride);
        w.end_object();
    } else {
        w.null();
    }
    w.end_object();
    return w.str() + "\n";
}

inline void save_model(const ModelBundle& bundle, const std::string& path) {
    const std::string text = serialize_model(bundle);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open for writing: " + tmp);
        f << text;
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& field,
                                     const std::string& where) {
    auto it = j.find(field);
    if (it == j.end()) throw SchemaError("model JSON: missing field " + where + field);
    return *it;
}

inline Vec json_vec(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw SchemaError("model JSON: " + where + " must be an array");
    Vec out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw SchemaError("model JSON: " + where + " must hold numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline LinearModel read_linear(const nlohmann::json& j, const std::string& where) {
    LinearModel m;
    m.w = json_vec(require(j, "w", where), where + "w");
    m.b = require(j, "b", where).get<double>();
    const double stored_norm = require(j, "norm", where).get<double>();
    const double actual = norm2(m.w);
    if (std::abs(stored_norm - actual) > 1e-15 * std::max(1.0, actual))
        throw InvariantViolationError("model JSON: " + where + "norm (" + format_g17(stored_norm) +
                                      ") inconsistent with " + where + "w (|w| = " +
                                      format_g17(actual) + ")");
    const std::string pen = require(j, "penalty", where).get<std::string>();
    if (pen == "l1")
        m.penalty = Penalty::L1;
    else if (pen == "l2")
        m.penalty = Penalty::L2;
    else
        throw SchemaError("model JSON: bad " + where + "penalty '" + pen + "'");
    m.C = require(j, "C", where).get<double>();
    const std::string loss = require(j, "loss", where).get<std::string>();
    if (loss == "squared_hinge")
        m.loss_kind = LossKind::SquaredHinge;
    else if (loss == "logistic")
        m.loss_kind = LossKind::Logistic;
    else
        throw SchemaError("model JSON: bad " + where + "loss '" + loss + "'");
    return m;
}

inline FeatureSpec read_spec(const nlohmann::json& j) {
    FeatureSpec spec;
    const auto& transforms = require(j, "transforms", "feature_spec.");
    for (const auto& t : transforms) {
        const std::string type = require(t, "type", "transform.").get<std::string>();
        if (type == "sincos") {
            spec.transforms.push_back(
                SinCosTransform{require(t, "angle", "transform.").get<std::size_t>()});
        } else if (type == "contact_distance") {
            spec.transforms.push_back(
                ContactDistanceTransform{require(t, "i", "transform.").get<std::size_t>(),
                                         require(t, "j", "transform.").get<std::size_t>()});
        } else if (type == "pseudo_dihedral_cos") {
            const auto& atoms = require(t, "atoms", "transform.");
            if (!atoms.is_array() || atoms.size() != 4)
                throw SchemaError("model JSON: transform.atoms must be 4 indices");
            spec.transforms.push_back(PseudoDihedralCosTransform{
                atoms[0].get<std::size_t>(), atoms[1].get<std::size_t>(),
                atoms[2].get<std::size_t>(), atoms[3].get<std::size_t>()});
        } else if (type == "raw") {
            spec.transforms.push_back(
                RawTransform{require(t, "index", "transform.").get<std::size_t>()});
        } else {
            throw SchemaError("model JSON: unknown transform type '" + type + "'");
        }
    }
    const auto& scaler = require(j, "scaler", "feature_spec.");
    if (!scaler.is_null()) {
        StandardScaler s;
        s.mean = json_vec(require(scaler, "mean", "scaler."), "scaler.mean");
        s.std = json_vec(require(scaler, "std", "scaler."), "scaler.std");
        if (s.mean.size() != s.std.size())
            throw SchemaError("model JSON: scaler.mean and scaler.std lengths differ");
        for (double sd : s.std)
            if (!(sd > 0.0))
                throw InvariantViolationError("model JSON: scaler.std entries must be > 0");
        spec.scaler = std::move(s);
    }
    return spec;
}

}  // namespace detail

inline ModelBundle load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedInputError("model JSON: " + path + ": " + e.what());
    }

    const int version = detail::require(j, "schema_version", "").get<int>();
    if (version != kModelSchemaVersion)
        throw SchemaError("model JSON: schema_version " + std::to_string(version) +
                          " unsupported (expected " + std::to_string(kModelSchemaVersion) + ")");

    ModelBundle b;
    b.kind = detail::require(j, "kind", "").get<std::string>();

    const auto& cv = detail::require(j, "cv", "");
    const std::string cv_kind = detail::require(cv, "kind", "cv.").get<std::string>();
    if (cv_kind == "svm_distance") b.cv_kind = CvKind::SvmDistance;
    else if (cv_kind == "lr_probability") b.cv_kind = CvKind::LrProbability;
    else if (cv_kind == "lr_odds") b.cv_kind = CvKind::LrOdds;
    else if (cv_kind == "dnn_output") b.cv_kind = CvKind::DnnOutput;
    else if (cv_kind == "multiclass_distance") b.cv_kind = CvKind::MulticlassDistance;
    else if (cv_kind == "raw_coordinate") b.cv_kind = CvKind::RawCoordinate;
    else throw SchemaError("model JSON: unknown cv.kind '" + cv_kind + "'");
    b.cv_normalized = detail::require(cv, "normalized", "cv.").get<bool>();
    b.cv_node = detail::require(cv, "node", "cv.").get<std::size_t>();
    b.cv_coordinate = detail::require(cv, "coordinate", "cv.").get<std::size_t>();
    b.cv_periodic = detail::require(cv, "periodic", "cv.").get<bool>();

    b.spec = detail::read_spec(detail::require(j, "feature_spec", ""));

    const auto& model = detail::require(j, "model", "");
    if (b.kind == "linear_svm" || b.kind == "logreg") {
        b.linear = detail::read_linear(model, "model.");
    } else if (b.kind == "multiclass_svm") {
        MulticlassLinearModel mc;
        for (const auto& s : detail::require(model, "states", "model."))
            mc.submodels.push_back(detail::read_linear(s, "model.states[]."));
        if (mc.submodels.size() < 3)
            throw InvariantViolationError("model JSON: model.states needs >= 3 submodels");
        b.multiclass = std::move(mc);
    } else if (b.kind == "mlp") {
        MLPModel m;
        for (const auto& L : detail::require(model, "layers", "model.")) {
            const std::size_t rows = detail::require(L, "rows", "layer.").get<std::size_t>();
            const std::size_t cols = detail::require(L, "cols", "layer.").get<std::size_t>();
            Vec wflat = detail::json_vec(detail::require(L, "W", "layer."), "layer.W");
            if (wflat.size() != rows * cols)
                throw SchemaError("model JSON: layer.W length != rows*cols");
            AffineLayer layer{Matrix(rows, cols), detail::json_vec(detail::require(L, "b", "layer."),
                                                                   "layer.b")};
            layer.W.data() = std::move(wflat);
            if (layer.b.size() != rows) throw SchemaError("model JSON: layer.b length != rows");
            m.layers.push_back(std::move(layer));
        }
        m.validate();
        b.mlp = std::move(m);
    } else if (b.kind == "raw") {
        if (!model.is_null()) throw SchemaError("model JSON: raw bundle must have model = null");
    } else {
        throw SchemaError("model JSON: unknown kind '" + b.kind + "'");
    }

    const auto& metad = detail::require(j, "metad", "");
    if (!metad.is_null()) {
        WellTemperedParams wt;
        wt.w0 = detail::require(metad, "w0", "metad.").get<double>();
        wt.sigma = detail::json_vec(detail::require(metad, "sigma", "metad."), "metad.sigma");
        wt.gamma = detail::require(metad, "gamma", "metad.").get<double>();
        wt.deposit_stride = detail::require(metad, "deposit_stride", "metad.").get<long>();
        b.metad = std::move(wt);
    }
    return b;
}

}  // namespace mlcv
