#ifndef SERBF_CORE_HPP
#define SERBF_CORE_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "serbf/parallel.hpp"

namespace serbf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointList = std::vector<Vec3>;

/// Sentinel layer tag carried by surface samples in a SampleSet.
inline constexpr int kSurfaceLayer = -1;

/// One anisotropic Gaussian kernel, exp(-|diag(axes) R(angles) (x - center)|^2),
/// scaled by weight * |weight| in the network output.
struct ErbfBasis
{
    Vec3 center = Vec3::Zero();
    Vec3 axes = Vec3::Ones();   // inverse length scales, strictly positive
    Vec3 angles = Vec3::Zero(); // radians about x, y, z
    double weight = 0.0;

    bool operator==(const ErbfBasis&) const = default;
};

inline void validate_basis(const ErbfBasis& basis)
{
    for (int k = 0; k < 3; ++k) {
        if (!(std::isfinite(basis.axes[k]) && basis.axes[k] > 0.0))
            throw std::invalid_argument("ErbfBasis: axes must be positive and finite");
        if (!std::isfinite(basis.angles[k]) || !std::isfinite(basis.center[k]))
            throw std::invalid_argument("ErbfBasis: center and angles must be finite");
    }
    if (!std::isfinite(basis.weight))
        throw std::invalid_argument("ErbfBasis: weight must be finite");
}

/// Signed square used as the output coefficient of a basis.
inline double signed_square(double w) { return w * std::abs(w); }

struct ErbfModel
{
    std::vector<ErbfBasis> bases;
    double norm_m = -1.0;
    double norm_h = std::numbers::ln2;

    std::size_t size() const { return bases.size(); }
    bool empty() const { return bases.empty(); }
    std::size_t param_count() const { return 10 * bases.size(); }

    bool operator==(const ErbfModel&) const = default;
};

// ---------------------------------------------------------------------------
// SDF normalization: S -> 2 exp(-h (S - m)^2), m = min S, h = ln 2 / m^2.
// Interior maps into (1, 2], the zero level set to 1, exterior into (0, 1).

struct NormalizedLabels
{
    std::vector<double> labels;
    double norm_m = 0.0;
    double norm_h = 0.0;
};

inline double normalization_h(double norm_m) { return std::numbers::ln2 / (norm_m * norm_m); }

inline double normalize_sdf_value(double sdf, double norm_m, double norm_h)
{
    const double t = sdf - norm_m;
    return 2.0 * std::exp(-norm_h * t * t);
}

inline NormalizedLabels normalize_sdf(std::span<const double> raw)
{
    if (raw.empty())
        throw std::invalid_argument("normalize_sdf: empty input");
    const double m = *std::min_element(raw.begin(), raw.end());
    if (!(m < 0.0))
        throw std::invalid_argument(
            "normalize_sdf: minimum SDF must be negative (no interior sample; scale h = ln2/m^2 undefined)");
    NormalizedLabels out;
    out.norm_m = m;
    out.norm_h = normalization_h(m);
    out.labels.reserve(raw.size());
    for (double s : raw)
        out.labels.push_back(normalize_sdf_value(s, m, out.norm_h));
    return out;
}

/// Inverse of normalize_sdf on the branch S >= m.
inline double denormalize_sdf(double label, double norm_m, double norm_h)
{
    if (!(label > 0.0 && label <= 2.0))
        throw std::domain_error("denormalize_sdf: label must lie in (0, 2]");
    const double ratio = std::max(-std::log(label / 2.0), 0.0);
    return norm_m + std::sqrt(ratio / norm_h);
}

// ---------------------------------------------------------------------------
// Rotation R(z) * R(y) * R(x), with the y factor carrying -sin in the (0,2)
// slot and +sin in the (2,0) slot.

inline Mat3 rotation_x(double t)
{
    const double c = std::cos(t), s = std::sin(t);
    Mat3 r;
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return r;
}

inline Mat3 rotation_y(double t)
{
    const double c = std::cos(t), s = std::sin(t);
    Mat3 r;
    r << c, 0, -s, 0, 1, 0, s, 0, c;
    return r;
}

inline Mat3 rotation_z(double t)
{
    const double c = std::cos(t), s = std::sin(t);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

inline Mat3 rotation_matrix(const Vec3& angles)
{
    return rotation_z(angles.z()) * rotation_y(angles.y()) * rotation_x(angles.x());
}

/// Per-basis quantities hoisted out of the point loop.
struct KernelFrame
{
    Vec3 center;
    Mat3 rotation;
    Vec3 axes_sq;
    double coeff; // weight * |weight|

    explicit KernelFrame(const ErbfBasis& b)
        : center(b.center), rotation(rotation_matrix(b.angles)), axes_sq(b.axes.cwiseProduct(b.axes)),
          coeff(signed_square(b.weight))
    {
    }

    /// Rotated offset R (x - c).
    Vec3 local(const Vec3& x) const { return rotation * (x - center); }

    double response(const Vec3& x) const
    {
        const Vec3 y = local(x);
        return std::exp(-(axes_sq.x() * y.x() * y.x() + axes_sq.y() * y.y() * y.y() + axes_sq.z() * y.z() * y.z()));
    }
};

inline double erbf_eval(const Vec3& point, const ErbfBasis& basis) { return KernelFrame(basis).response(point); }

inline std::vector<KernelFrame> make_frames(const ErbfModel& model)
{
    std::vector<KernelFrame> frames;
    frames.reserve(model.size());
    for (const auto& b : model.bases)
        frames.emplace_back(b);
    return frames;
}

/// Per-basis lists of point indices inside the screening radius. Lists are
/// sorted ascending. Responses below epsilon count as zero.
struct ScreenIndex
{
    std::vector<std::vector<std::uint32_t>> neighbors;
    std::vector<double> radii;
    double epsilon = 0.0;

    double clip(double response) const { return response < epsilon ? 0.0 : response; }
};

struct Prediction
{
    std::vector<double> values;
};

/// Network output sum_j w_j |w_j| phi_j(x) per point, accumulated in ascending
/// basis order. With a screen index, pairs outside a basis's radius are skipped
/// and responses below its epsilon are dropped.
inline Prediction model_eval(std::span<const Vec3> points, const ErbfModel& model,
                             const ScreenIndex* screen = nullptr)
{
    if (model.empty())
        throw std::invalid_argument("model_eval: model has no bases");
    if (screen && screen->neighbors.size() != model.size())
        throw std::invalid_argument("model_eval: screen index does not match the model");

    const auto frames = make_frames(model);
    Prediction out;
    out.values.assign(points.size(), 0.0);

    if (!screen) {
        parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double acc = 0.0;
                for (const auto& f : frames)
                    acc += f.coeff * f.response(points[i]);
                out.values[i] = acc;
            }
        });
        return out;
    }

    parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = 0; j < frames.size(); ++j) {
            const auto& list = screen->neighbors[j];
            auto it = std::lower_bound(list.begin(), list.end(), static_cast<std::uint32_t>(begin));
            for (; it != list.end() && *it < end; ++it)
                out.values[*it] += frames[j].coeff * screen->clip(frames[j].response(points[*it]));
        }
    });
    return out;
}

} // namespace serbf

#endif // SERBF_CORE_HPP
