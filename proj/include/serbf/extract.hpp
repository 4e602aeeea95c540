#ifndef SERBF_EXTRACT_HPP
#define SERBF_EXTRACT_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "serbf/core.hpp"
#include "serbf/kdtree.hpp"
#include "serbf/marching_cubes.hpp"
#include "serbf/sdf.hpp"
#include "serbf/spatial.hpp"

namespace serbf {

/// Cube that contains the region where the model output can reach 1. Outside
/// the ball of radius sqrt(ln(M w^2) / min d^2) around a positive basis its
/// contribution stays below 1/M, so the union of those balls bounds the level set.
inline RootCube model_bounds(const ErbfModel& model, double pad_fraction = 0.05)
{
    if (model.empty())
        throw std::invalid_argument("model_bounds: model has no bases");
    const double m = static_cast<double>(model.size());
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& b : model.bases) {
        if (!(b.weight > 0.0))
            continue;
        const double lambda = b.axes.cwiseProduct(b.axes).minCoeff();
        const double r = std::sqrt(std::max(std::log(m * b.weight * b.weight), 0.0) / lambda);
        lo = lo.cwiseMin(b.center - Vec3::Constant(r));
        hi = hi.cwiseMax(b.center + Vec3::Constant(r));
    }
    if (!(lo.x() <= hi.x())) { // no positive basis: fall back to the centers
        lo = hi = model.bases.front().center;
        for (const auto& b : model.bases) {
            lo = lo.cwiseMin(b.center);
            hi = hi.cwiseMax(b.center);
        }
    }
    const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
    const double size = extent * (1.0 + 2.0 * pad_fraction);
    return RootCube{0.5 * (lo + hi) - Vec3::Constant(0.5 * size), size};
}

/// Smallest cube holding both cubes.
inline RootCube cube_union(const RootCube& a, const RootCube& b)
{
    const Vec3 lo = a.origin.cwiseMin(b.origin);
    const Vec3 hi = (a.origin + Vec3::Constant(a.size)).cwiseMax(b.origin + Vec3::Constant(b.size));
    const double size = (hi - lo).maxCoeff();
    return RootCube{0.5 * (lo + hi) - Vec3::Constant(0.5 * size), size};
}

/// Lattice with `resolution` cells per axis spanning the cube.
inline std::array<int, 3> lattice_dims(int resolution)
{
    if (resolution < 1)
        throw std::invalid_argument("resolution must be at least 1");
    return {resolution + 1, resolution + 1, resolution + 1};
}

inline ScalarLattice model_lattice(const ErbfModel& model, const RootCube& cube, int resolution,
                                   double epsilon = 1e-7)
{
    const double h = cube.size / resolution;
    return sample_lattice(lattice_dims(resolution), cube.origin, h, [&](std::span<const Vec3> pts) {
        const KdTree tree(pts);
        const auto screen = build_screen_index(tree, model, epsilon);
        return model_eval(pts, model, &screen).values;
    });
}

/// Level set of the model output at 1, normals facing outward (toward lower output).
inline TriangleMesh extract_model(const ErbfModel& model, const RootCube& cube, int resolution,
                                  double epsilon = 1e-7)
{
    auto mesh = marching_cubes(model_lattice(model, cube, resolution, epsilon), 1.0);
    flip_winding(mesh);
    return mesh;
}

/// Zero level set of an analytic SDF, normals facing outward.
inline TriangleMesh extract_analytic(const AnalyticShape& shape, const RootCube& cube, int resolution)
{
    const double h = cube.size / resolution;
    const auto lat = sample_lattice(lattice_dims(resolution), cube.origin, h,
                                    [&](std::span<const Vec3> pts) { return shape.sdf(pts); });
    return marching_cubes(lat, 0.0);
}

inline RootCube shape_cube(const AnalyticShape& shape, double pad_fraction = 0.05)
{
    const Vec3 half = shape.half_extent();
    const double size = 2.0 * half.maxCoeff() * (1.0 + 2.0 * pad_fraction);
    return RootCube{Vec3::Constant(-0.5 * size), size};
}

} // namespace serbf

#endif // SERBF_EXTRACT_HPP
