#pragma once

// Feature pipeline: transforms raw configuration coordinates into the
// numeric vectors fed to classifiers, with exact analytic Jacobians so the
// same pipeline can carry biasing forces back to the coordinates.

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

struct Frame {
    Vec coords;            // angles in radians, or flattened Cartesian triples
    long time_index = 0;
};

// --- individual transforms -------------------------------------------------

struct SinCosTransform {
    std::size_t angle_index;
};

struct ContactDistanceTransform {
    std::size_t atom_i;
    std::size_t atom_j;
};

struct PseudoDihedralCosTransform {
    std::size_t a, b, c, d;
};

struct RawTransform {
    std::size_t coordinate_index;
};

using FeatureTransform = std::variant<SinCosTransform, ContactDistanceTransform,
                                      PseudoDihedralCosTransform, RawTransform>;

inline std::size_t transform_width(const FeatureTransform& t) {
    return std::holds_alternative<SinCosTransform>(t) ? 2 : 1;
}

// --- standard scaler ---------------------------------------------------------

struct StandardScaler {
    Vec mean;
    Vec std;

    Vec apply(const Vec& x) const {
        if (x.size() != mean.size())
            throw InvalidInputError("apply_scaler: dimension mismatch: got " +
                                    std::to_string(x.size()) + ", scaler has " +
                                    std::to_string(mean.size()));
        Vec out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
        return out;
    }
};

// Per-column mean and standard deviation with the population (n) divisor.
// Constant columns are rejected: they would divide by zero downstream and
// carry no class information.
inline StandardScaler fit_scaler(const Matrix& data) {
    if (data.rows() < 2)
        throw InvalidInputError("fit_scaler: need at least 2 rows, got " +
                                std::to_string(data.rows()));
    const std::size_t n = data.rows(), d = data.cols();
    StandardScaler s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += data(i, j);
        m /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dv = data(i, j) - m;
            var += dv * dv;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(m))))
            throw DegenerateFeatureError("fit_scaler: column " + std::to_string(j) +
                                         " is constant (std = " + format_g17(sd) + ")");
        s.mean[j] = m;
        s.std[j] = sd;
    }
    return s;
}

// --- free-standing transform evaluations -------------------------------------

// [sin t1, cos t1, sin t2, cos t2, ...]
inline Vec sincos_features(const Vec& angles) {
    if (!all_finite(angles))
        throw InvalidInputError("sincos_features: non-finite input angle");
    Vec out;
    out.reserve(2 * angles.size());
    for (double a : angles) {
        out.push_back(std::sin(a));
        out.push_back(std::cos(a));
    }
    return out;
}

namespace detail {

inline std::array<double, 3> atom_xyz(const Frame& f, std::size_t atom) {
    const std::size_t base = 3 * atom;
    if (base + 2 >= f.coords.size())
        throw InvalidInputError("atom index " + std::to_string(atom) +
                                " out of range for frame with " +
                                std::to_string(f.coords.size()) + " coordinates");
    return {f.coords[base], f.coords[base + 1], f.coords[base + 2]};
}

inline std::array<double, 3> sub3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline std::array<double, 3> cross3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm3(const std::array<double, 3>& a) { return std::sqrt(dot3(a, a)); }

}  // namespace detail

inline double contact_distance(const Frame& frame, std::size_t i, std::size_t j) {
    if (i == j)
        throw DegeneratePairError("contact_distance: identical atom indices (" +
                                  std::to_string(i) + ", " + std::to_string(j) + ")");
    const auto ri = detail::atom_xyz(frame, i);
    const auto rj = detail::atom_xyz(frame, j);
    return detail::norm3(detail::sub3(ri, rj));
}

// Cosine of the torsion angle defined by four points.
inline double pseudo_dihedral_cos(const Frame& frame, std::size_t a, std::size_t b,
                                  std::size_t c, std::size_t d) {
    const auto pa = detail::atom_xyz(frame, a);
    const auto pb = detail::atom_xyz(frame, b);
    const auto pc = detail::atom_xyz(frame, c);
    const auto pd = detail::atom_xyz(frame, d);
    const auto b1 = detail::sub3(pb, pa);
    const auto b2 = detail::sub3(pc, pb);
    const auto b3 = detail::sub3(pd, pc);
    const auto n1 = detail::cross3(b1, b2);
    const auto n2 = detail::cross3(b2, b3);
    const double ln1 = detail::norm3(n1);
    const double ln2 = detail::norm3(n2);
    if (ln1 < 1e-12 || ln2 < 1e-12)
        throw DegenerateGeometryError("pseudo_dihedral_cos: collinear triple, torsion plane undefined");
    double c01 = detail::dot3(n1, n2) / (ln1 * ln2);
    return std::clamp(c01, -1.0, 1.0);
}

// --- the feature spec ---------------------------------------------------------

struct FeatureSpec {
    std::vector<FeatureTransform> transforms;
    std::optional<StandardScaler> scaler;

    std::size_t output_dim() const {
        std::size_t d = 0;
        for (const auto& t : transforms) d += transform_width(t);
        return d;
    }

    // Feature vector X for one frame: transforms applied in order, then the
    // scaler if present.
    Vec featurize(const Frame& frame) const {
        Vec out;
        out.reserve(output_dim());
        if (!all_finite(frame.coords))
            throw InvalidInputError("featurize: frame contains non-finite coordinates");
        for (const auto& t : transforms) {
            if (const auto* sc = std::get_if<SinCosTransform>(&t)) {
                if (sc->angle_index >= frame.coords.size())
                    throw InvalidInputError("sincos: angle index out of range");
                const double a = frame.coords[sc->angle_index];
                out.push_back(std::sin(a));
                out.push_back(std::cos(a));
            } else if (const auto* cd = std::get_if<ContactDistanceTransform>(&t)) {
                out.push_back(contact_distance(frame, cd->atom_i, cd->atom_j));
            } else if (const auto* pd = std::get_if<PseudoDihedralCosTransform>(&t)) {
                out.push_back(pseudo_dihedral_cos(frame, pd->a, pd->b, pd->c, pd->d));
            } else {
                const auto& r = std::get<RawTransform>(t);
                if (r.coordinate_index >= frame.coords.size())
                    throw InvalidInputError("raw: coordinate index out of range");
                out.push_back(frame.coords[r.coordinate_index]);
            }
        }
        if (scaler) out = scaler->apply(out);
        return out;
    }

    // Analytic Jacobian dX/dq of the scaled features w.r.t. the raw
    // coordinates. Row order matches featurize().
    Matrix jacobian(const Frame& frame) const {
        const std::size_t nq = frame.coords.size();
        Matrix J(output_dim(), nq, 0.0);
        std::size_t r = 0;
        for (const auto& t : transforms) {
            if (const auto* sc = std::get_if<SinCosTransform>(&t)) {
                const double a = frame.coords.at(sc->angle_index);
                J(r, sc->angle_index) = std::cos(a);       // d sin / da
                J(r + 1, sc->angle_index) = -std::sin(a);  // d cos / da
                r += 2;
            } else if (const auto* cd = std::get_if<ContactDistanceTransform>(&t)) {
                const auto ri = detail::atom_xyz(frame, cd->atom_i);
                const auto rj = detail::atom_xyz(frame, cd->atom_j);
                const auto dv = detail::sub3(ri, rj);
                const double dist = detail::norm3(dv);
                if (dist < 1e-12)
                    throw DegenerateGeometryError(
                        "contact_distance jacobian: coincident atoms, derivative undefined");
                for (int k = 0; k < 3; ++k) {
                    J(r, 3 * cd->atom_i + k) = dv[k] / dist;
                    J(r, 3 * cd->atom_j + k) = -dv[k] / dist;
                }
                r += 1;
            } else if (const auto* pd = std::get_if<PseudoDihedralCosTransform>(&t)) {
                dihedral_cos_jacobian_row(frame, *pd, J, r);
                r += 1;
            } else {
                const auto& rt = std::get<RawTransform>(t);
                J(r, rt.coordinate_index) = 1.0;
                r += 1;
            }
        }
        if (scaler) {
            for (std::size_t i = 0; i < J.rows(); ++i)
                for (std::size_t j = 0; j < nq; ++j) J(i, j) /= scaler->std[i];
        }
        return J;
    }

private:
    // d cos(torsion) / d(coordinates of a,b,c,d).
    //
    // With bond vectors b1 = b-a, b2 = c-b, b3 = d-c and normals
    // n1 = b1 x b2, n2 = b2 x b3, the cosine is (n1.n2)/(|n1||n2|).
    // Differentiate through the cross products; each bond touches two atoms.
    static void dihedral_cos_jacobian_row(const Frame& frame,
                                          const PseudoDihedralCosTransform& t, Matrix& J,
                                          std::size_t row) {
        using V3 = std::array<double, 3>;
        const V3 pa = detail::atom_xyz(frame, t.a);
        const V3 pb = detail::atom_xyz(frame, t.b);
        const V3 pc = detail::atom_xyz(frame, t.c);
        const V3 pd = detail::atom_xyz(frame, t.d);
        const V3 b1 = detail::sub3(pb, pa);
        const V3 b2 = detail::sub3(pc, pb);
        const V3 b3 = detail::sub3(pd, pc);
        const V3 n1 = detail::cross3(b1, b2);
        const V3 n2 = detail::cross3(b2, b3);
        const double ln1 = detail::norm3(n1);
        const double ln2 = detail::norm3(n2);
        if (ln1 < 1e-12 || ln2 < 1e-12)
            throw DegenerateGeometryError("pseudo_dihedral_cos jacobian: collinear triple");
        const double f = detail::dot3(n1, n2);
        const double g = ln1 * ln2;

        // dcos/dn1 = n2/g - (f/g) * n1/|n1|^2, and symmetrically for n2.
        V3 dn1{}, dn2{};
        for (int k = 0; k < 3; ++k) {
            dn1[k] = n2[k] / g - f / g * n1[k] / (ln1 * ln1);
            dn2[k] = n1[k] / g - f / g * n2[k] / (ln2 * ln2);
        }

        // n1 = b1 x b2  =>  dcos/db1 = b2 x dn1, dcos/db2 += dn1 x b1
        // n2 = b2 x b3  =>  dcos/db2 += b3 x dn2, dcos/db3 = dn2 x b2
        const V3 dcos_db1 = detail::cross3(b2, dn1);
        V3 dcos_db2 = detail::cross3(dn1, b1);
        const V3 d2b = detail::cross3(b3, dn2);
        for (int k = 0; k < 3; ++k) dcos_db2[k] += d2b[k];
        const V3 dcos_db3 = detail::cross3(dn2, b2);

        // b1 = pb - pa, b2 = pc - pb, b3 = pd - pc
        for (int k = 0; k < 3; ++k) {
            J(row, 3 * t.a + k) += -dcos_db1[k];
            J(row, 3 * t.b + k) += dcos_db1[k] - dcos_db2[k];
            J(row, 3 * t.c + k) += dcos_db2[k] - dcos_db3[k];
            J(row, 3 * t.d + k) += dcos_db3[k];
        }
    }
};

// Fit a scaler on a matrix of already-transformed (unscaled) features.
inline Matrix apply_scaler(const StandardScaler& scaler, const Matrix& data) {
    Matrix out(data.rows(), data.cols());
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t j = 0; j < data.cols(); ++j)
            out(i, j) = (data(i, j) - scaler.mean[j]) / scaler.std[j];
    }
    return out;
}

inline Vec apply_scaler(const StandardScaler& scaler, const Vec& x) { return scaler.apply(x); }

}  // namespace mlcv
