#ifndef SERBF_INIT_HPP
#define SERBF_INIT_HPP

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/kdtree.hpp"

namespace serbf {

/// How the greedy sphere removal compares offsets against the selected
/// radius r. `as_printed` removes points whose *squared* distance is <= r;
/// `squared` removes points whose squared distance is <= r^2.
enum class InscribedRadiusConvention { as_printed, squared };

struct InscribedSpheres
{
    PointList centers;
    std::vector<double> weights;
    std::vector<double> radii; // distance-to-surface of each selected center
};

/// Greedy maximal inscribed spheres over interior grid points. Each round picks
/// the remaining point farthest from the surface samples, records it as a
/// center with its label as weight, and drops every point inside its sphere.
inline InscribedSpheres inscribed_sphere_init(std::span<const Vec3> interior_points,
                                              std::span<const double> interior_labels,
                                              std::span<const Vec3> surface_points,
                                              InscribedRadiusConvention convention = InscribedRadiusConvention::as_printed)
{
    if (interior_points.empty())
        throw std::invalid_argument("inscribed_sphere_init: empty interior set");
    if (interior_points.size() != interior_labels.size())
        throw std::invalid_argument("inscribed_sphere_init: points and labels differ in length");
    if (surface_points.empty())
        throw std::invalid_argument("inscribed_sphere_init: no surface samples");
    for (double t : interior_labels)
        if (!(t > 1.0 && t < 2.0))
            throw std::invalid_argument("inscribed_sphere_init: interior labels must lie in (1, 2)");

    const KdTree surface(surface_points);
    std::vector<std::uint32_t> remaining(interior_points.size());
    std::vector<double> depth(interior_points.size());
    for (std::size_t i = 0; i < interior_points.size(); ++i) {
        remaining[i] = static_cast<std::uint32_t>(i);
        depth[i] = std::sqrt(surface.nearest(interior_points[i]).dist_sq);
    }

    InscribedSpheres out;
    while (!remaining.empty()) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < remaining.size(); ++k)
            if (depth[remaining[k]] > depth[remaining[best]])
                best = k;
        const std::uint32_t pick = remaining[best];
        const double r = depth[pick];
        out.centers.push_back(interior_points[pick]);
        out.weights.push_back(interior_labels[pick]);
        out.radii.push_back(r);

        const double limit = convention == InscribedRadiusConvention::as_printed ? r : r * r;
        std::vector<std::uint32_t> kept;
        kept.reserve(remaining.size());
        for (auto k : remaining)
            if ((interior_points[k] - interior_points[pick]).squaredNorm() > limit)
                kept.push_back(k);
        remaining = std::move(kept);
    }
    return out;
}

/// Isotropic inverse length per center, chosen so a kernel decays to gamma at
/// half the spacing to its nearest neighbour center:
/// d = 2 sqrt(-ln(gamma / w^2)) / spacing. A lone center uses its distance to
/// the nearest surface sample as spacing.
inline std::vector<Vec3> axis_length_init(std::span<const Vec3> centers, std::span<const double> weights, double gamma,
                                          std::span<const Vec3> surface_points = {})
{
    if (centers.empty() || centers.size() != weights.size())
        throw std::invalid_argument("axis_length_init: centers and weights must be non-empty and aligned");
    if (!(gamma > 0.0))
        throw std::invalid_argument("axis_length_init: gamma must be positive");

    std::vector<double> spacing(centers.size(), std::numeric_limits<double>::infinity());
    if (centers.size() == 1) {
        if (surface_points.empty())
            throw std::invalid_argument("axis_length_init: a single center needs surface samples for its spacing");
        spacing[0] = std::sqrt(KdTree(surface_points).nearest(centers[0]).dist_sq);
    } else {
        for (std::size_t j = 0; j < centers.size(); ++j)
            for (std::size_t i = 0; i < centers.size(); ++i)
                if (i != j)
                    spacing[j] = std::min(spacing[j], (centers[j] - centers[i]).norm());
    }

    std::vector<Vec3> axes(centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const double w2 = weights[j] * weights[j];
        if (!(gamma < w2))
            throw std::invalid_argument("axis_length_init: gamma must be below w^2 (log argument would be >= 1)");
        if (!(spacing[j] > 0.0))
            throw std::invalid_argument("axis_length_init: coincident centers");
        const double d = 2.0 * std::sqrt(-std::log(gamma / w2)) / spacing[j];
        axes[j] = Vec3::Constant(d);
    }
    return axes;
}

/// Model with inscribed-sphere centers, isotropic axes and zero angles.
inline ErbfModel initial_model(std::span<const Vec3> interior_points, std::span<const double> interior_labels,
                               std::span<const Vec3> surface_points, double gamma, double norm_m, double norm_h,
                               InscribedRadiusConvention convention = InscribedRadiusConvention::as_printed)
{
    const auto spheres = inscribed_sphere_init(interior_points, interior_labels, surface_points, convention);
    const auto axes = axis_length_init(spheres.centers, spheres.weights, gamma, surface_points);
    ErbfModel model;
    model.norm_m = norm_m;
    model.norm_h = norm_h;
    model.bases.reserve(spheres.centers.size());
    for (std::size_t j = 0; j < spheres.centers.size(); ++j)
        model.bases.push_back(ErbfBasis{spheres.centers[j], axes[j], Vec3::Zero(), spheres.weights[j]});
    return model;
}

} // namespace serbf

#endif // SERBF_INIT_HPP
