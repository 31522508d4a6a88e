#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mlcv/expression.hpp"
#include "mlcv/model_io.hpp"
#include "mlcv/plumed_export.hpp"

using namespace mlcv;

namespace {

FeatureSpec sincos_spec2() {
    return FeatureSpec{{SinCosTransform{0}, SinCosTransform{1}}, std::nullopt};
}

LinearModel random_linear(std::mt19937_64& rng, std::size_t d, LossKind loss) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    LinearModel m;
    m.w.resize(d);
    for (double& w : m.w) w = u(rng);
    m.b = u(rng);
    m.loss_kind = loss;
    return m;
}

StandardScaler random_scaler(std::mt19937_64& rng, std::size_t d) {
    std::uniform_real_distribution<double> um(-0.5, 0.5);
    std::uniform_real_distribution<double> us(0.5, 2.0);
    StandardScaler s;
    for (std::size_t i = 0; i < d; ++i) {
        s.mean.push_back(um(rng));
        s.std.push_back(us(rng));
    }
    return s;
}

}  // namespace

TEST_CASE("expression parsing and evaluation") {
    CHECK(eval_expression("1/(1+exp(-0))", Vec{}) == Catch::Approx(0.5));
    CHECK(eval_expression("(2*v1)/(2)", Vec{3.0}) == Catch::Approx(3.0));
    CHECK(eval_expression("-(3)+v2*v1", Vec{2.0, 4.0}) == Catch::Approx(5.0));
    CHECK(eval_expression("exp(0)", Vec{}) == 1.0);
    CHECK(eval_expression("1e-3*v1", Vec{2.0}) == Catch::Approx(0.002));
    CHECK(eval_expression("2*-3", Vec{}) == Catch::Approx(-6.0));

    CHECK_THROWS_AS(eval_expression("1+", Vec{}), ParseError);
    CHECK_THROWS_AS(eval_expression("(1", Vec{}), ParseError);
    CHECK_THROWS_AS(eval_expression("foo", Vec{}), ParseError);
    CHECK_THROWS_AS(eval_expression("v0", Vec{1.0}), ParseError);
    CHECK_THROWS_AS(eval_expression("v3", Vec{1.0, 2.0}), InvalidInputError);

    try {
        eval_expression("1+*2", Vec{});
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("position") != std::string::npos);
    }
}

TEST_CASE("model bundle: canonical serialization round trip") {
    std::mt19937_64 rng(3);
    ModelBundle b;
    b.kind = "linear_svm";
    b.linear = random_linear(rng, 4, LossKind::SquaredHinge);
    b.spec = sincos_spec2();
    b.spec.scaler = random_scaler(rng, 4);
    b.cv_kind = CvKind::SvmDistance;
    WellTemperedParams wt;
    wt.sigma = {0.1};
    b.metad = wt;

    const std::string path = "model_test.json";
    save_model(b, path);
    const ModelBundle loaded = load_model(path);
    CHECK(loaded.linear->w == b.linear->w);
    CHECK(loaded.linear->b == b.linear->b);
    CHECK(loaded.spec.scaler->mean == b.spec.scaler->mean);
    CHECK(loaded.metad->gamma == b.metad->gamma);

    // save -> load -> save is byte-identical
    save_model(loaded, "model_test2.json");
    std::ifstream f1(path), f2("model_test2.json");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::remove(path.c_str());
    std::remove("model_test2.json");
}

TEST_CASE("model bundle: load failure paths") {
    SECTION("truncated file") {
        std::ofstream f("model_bad.json");
        f << "{\"schema_version\": 1, \"kind\": \"line";
        f.close();
        CHECK_THROWS_AS(load_model("model_bad.json"), MalformedInputError);
        std::remove("model_bad.json");
    }
    SECTION("norm inconsistent with w") {
        ModelBundle b;
        b.kind = "linear_svm";
        b.linear = LinearModel{{3.0, 4.0}, 0.5};
        b.spec = FeatureSpec{{RawTransform{0}, RawTransform{1}}, std::nullopt};
        std::string text = serialize_model(b);
        const std::string needle = "\"norm\":5";
        const auto pos = text.find(needle);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, needle.size(), "\"norm\":6");
        std::ofstream f("model_bad2.json");
        f << text;
        f.close();
        CHECK_THROWS_AS(load_model("model_bad2.json"), InvariantViolationError);
        try {
            load_model("model_bad2.json");
        } catch (const InvariantViolationError& e) {
            CHECK(std::string(e.what()).find("norm") != std::string::npos);
        }
        std::remove("model_bad2.json");
    }
    SECTION("wrong schema version") {
        std::ofstream f("model_bad3.json");
        f << "{\"schema_version\": 99}";
        f.close();
        CHECK_THROWS_AS(load_model("model_bad3.json"), SchemaError);
        std::remove("model_bad3.json");
    }
}

TEST_CASE("plumed emission: canonical forms") {
    SECTION("unit linear model, identity scaler") {
        ModelBundle b;
        b.kind = "linear_svm";
        b.linear = LinearModel{{1.0, 0.0, 0.0, 0.0}, 0.0};
        b.spec = sincos_spec2();
        b.cv_kind = CvKind::SvmDistance;
        const std::string text =
            emit_plumed(b, {"phi_sin", "phi_cos", "psi_sin", "psi_cos"});
        CHECK(text.find("((1*v1+0*v2+0*v3+0*v4)+(0))/(1)") != std::string::npos);
        CHECK(text.find("CUSTOM ARG=phi_sin,phi_cos,psi_sin,psi_cos VAR=v1,v2,v3,v4 FUNC=") !=
              std::string::npos);
        CHECK(text.find("PERIODIC=NO") != std::string::npos);
        CHECK(text.find("# METAD ARG=") != std::string::npos);
        // exactly one CUSTOM line
        std::size_t count = 0, pos = 0;
        while ((pos = text.find("CUSTOM", pos)) != std::string::npos) {
            ++count;
            ++pos;
        }
        CHECK(count == 1);
    }
    SECTION("logistic model emits the sigmoid template") {
        std::mt19937_64 rng(4);
        ModelBundle b;
        b.kind = "logreg";
        b.linear = random_linear(rng, 4, LossKind::Logistic);
        b.spec = sincos_spec2();
        b.cv_kind = CvKind::LrProbability;
        const std::string text = emit_plumed(b, {"a", "b", "c", "d"});
        CHECK(text.find("FUNC=1/(1+exp(-(") != std::string::npos);
    }
    SECTION("multiclass emits one line per state") {
        std::mt19937_64 rng(5);
        ModelBundle b;
        b.kind = "multiclass_svm";
        MulticlassLinearModel mc;
        for (int k = 0; k < 3; ++k) mc.submodels.push_back(random_linear(rng, 4, LossKind::SquaredHinge));
        b.multiclass = mc;
        b.spec = sincos_spec2();
        b.cv_kind = CvKind::MulticlassDistance;
        const std::string text = emit_plumed(b, {"a", "b", "c", "d"});
        std::size_t count = 0, pos = 0;
        while ((pos = text.find("\nCUSTOM", pos)) != std::string::npos) {
            ++count;
            ++pos;
        }
        CHECK(count + 1 == 3);   // first line has no leading newline
    }
    SECTION("ascii only, bounded line length") {
        std::mt19937_64 rng(6);
        ModelBundle b;
        b.kind = "mlp";
        MLPModel net = init_mlp({4, 8, 8, 2}, 11);
        b.mlp = net;
        b.spec = sincos_spec2();
        b.spec.scaler = random_scaler(rng, 4);
        b.cv_kind = CvKind::DnnOutput;
        b.cv_node = 1;
        const std::string text = emit_plumed(b, {"a", "b", "c", "d"});
        std::size_t line_len = 0;
        for (char c : text) {
            REQUIRE(static_cast<unsigned char>(c) < 128);
            if (c == '\n')
                line_len = 0;
            else
                REQUIRE(++line_len <= kMaxPlumedLine);
        }
    }
    SECTION("oversized network trips the guard") {
        ModelBundle b;
        b.kind = "mlp";
        b.mlp = init_mlp({4, 32, 32, 32, 32, 2}, 1);
        b.spec = sincos_spec2();
        b.cv_kind = CvKind::DnnOutput;
        CHECK_THROWS_AS(emit_plumed(b, {"a", "b", "c", "d"}), UnsupportedExportError);
    }
}

TEST_CASE("export round trip: expression equals the in-process cv") {
    std::mt19937_64 rng(8);

    auto check_bundle = [&](const ModelBundle& b) {
        const double err = export_roundtrip_max_error(b, 1000, 17);
        INFO("kind " << b.kind << " cv " << to_string(b.cv_kind));
        CHECK(err <= 1e-9);
    };

    SECTION("svm distance, with and without normalization and scaler") {
        for (bool normalized : {true, false}) {
            for (bool scaled : {true, false}) {
                ModelBundle b;
                b.kind = "linear_svm";
                b.linear = random_linear(rng, 4, LossKind::SquaredHinge);
                b.spec = sincos_spec2();
                if (scaled) b.spec.scaler = random_scaler(rng, 4);
                b.cv_kind = CvKind::SvmDistance;
                b.cv_normalized = normalized;
                check_bundle(b);
            }
        }
    }
    SECTION("logistic probability and odds") {
        for (auto kind : {CvKind::LrProbability, CvKind::LrOdds}) {
            ModelBundle b;
            b.kind = "logreg";
            b.linear = random_linear(rng, 4, LossKind::Logistic);
            b.spec = sincos_spec2();
            b.spec.scaler = random_scaler(rng, 4);
            b.cv_kind = kind;
            check_bundle(b);
        }
    }
    SECTION("multiclass distances") {
        ModelBundle b;
        b.kind = "multiclass_svm";
        MulticlassLinearModel mc;
        for (int k = 0; k < 3; ++k) mc.submodels.push_back(random_linear(rng, 4, LossKind::SquaredHinge));
        b.multiclass = mc;
        b.spec = sincos_spec2();
        b.cv_kind = CvKind::MulticlassDistance;
        check_bundle(b);
    }
    SECTION("small network") {
        ModelBundle b;
        b.kind = "mlp";
        b.mlp = init_mlp({4, 8, 8, 2}, 23);
        b.spec = sincos_spec2();
        b.spec.scaler = random_scaler(rng, 4);
        b.cv_kind = CvKind::DnnOutput;
        b.cv_node = 0;
        check_bundle(b);
    }
    SECTION("raw coordinate") {
        ModelBundle b;
        b.kind = "raw";
        b.cv_kind = CvKind::RawCoordinate;
        b.cv_coordinate = 0;
        b.cv_periodic = true;
        check_bundle(b);
    }
}
