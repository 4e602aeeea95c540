#ifndef SERBF_SPATIAL_HPP
#define SERBF_SPATIAL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/kdtree.hpp"
#include "serbf/parallel.hpp"

namespace serbf {

/// Indices of points within radius of query (inclusive), ascending.
inline std::vector<std::uint32_t> neighbors_within(std::span<const Vec3> points, const Vec3& query, double radius)
{
    if (radius < 0.0)
        throw std::invalid_argument("neighbors_within: radius must be non-negative");
    return KdTree(points).radius_search(query, radius);
}

// ---------------------------------------------------------------------------
// Layered octree grid

/// Axis-aligned cube that roots the octree.
struct RootCube
{
    Vec3 origin = Vec3::Zero(); // minimum corner
    double size = 1.0;

    Vec3 center() const { return origin + Vec3::Constant(0.5 * size); }
    double diagonal() const { return std::sqrt(3.0) * size; }
};

/// Cube centred on the bounding box of the points, side = longest extent
/// padded by 5% on each side.
inline RootCube enclosing_cube(std::span<const Vec3> points, double pad_fraction = 0.05)
{
    if (points.empty())
        throw std::invalid_argument("enclosing_cube: no points");
    Vec3 lo = points.front(), hi = lo;
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0))
        throw std::invalid_argument("enclosing_cube: degenerate bounding box (zero extent)");
    const double size = extent * (1.0 + 2.0 * pad_fraction);
    const Vec3 mid = 0.5 * (lo + hi);
    return RootCube{mid - Vec3::Constant(0.5 * size), size};
}

struct OctreeLayer
{
    int index = 0; // 1-based
    PointList points;
    std::vector<double> sdf; // physical SDF, filled by an oracle
};

struct OctreeGrid
{
    std::vector<OctreeLayer> layers;
    int max_depth = 0;
    RootCube root;

    int layer_count() const { return static_cast<int>(layers.size()); }

    /// Edge length of cells whose corners form layer `layer`.
    double spacing(int layer) const { return root.size / std::ldexp(1.0, layer - 1); }

    std::size_t point_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += l.points.size();
        return n;
    }

    const OctreeLayer& layer(int index) const { return layers.at(static_cast<std::size_t>(index - 1)); }
    OctreeLayer& layer(int index) { return layers.at(static_cast<std::size_t>(index - 1)); }
};

namespace detail {

struct OctreeCell
{
    std::array<std::int64_t, 3> corner; // lattice units of the finest cell
    std::vector<std::uint32_t> points;
};

inline std::uint64_t pack_corner(std::int64_t x, std::int64_t y, std::int64_t z)
{
    return (static_cast<std::uint64_t>(x) << 42) | (static_cast<std::uint64_t>(y) << 21) |
           static_cast<std::uint64_t>(z);
}

} // namespace detail

/// Octree over explicit root cube. The root cell is depth 1; a cell at depth d
/// subdivides iff it holds a surface point and d < max_depth. Layer d collects
/// corners of depth-d cells not already present in a shallower layer.
inline OctreeGrid build_octree(std::span<const Vec3> surface_points, int max_depth, const RootCube& root)
{
    if (max_depth < 1 || max_depth > 20)
        throw std::invalid_argument("build_octree: max_depth must lie in [1, 20]");
    if (!(root.size > 0.0))
        throw std::invalid_argument("build_octree: root cube has zero size");

    OctreeGrid grid;
    grid.max_depth = max_depth;
    grid.root = root;
    const std::int64_t finest = std::int64_t{1} << (max_depth - 1); // finest cells per axis
    const double unit = root.size / static_cast<double>(finest);

    std::unordered_set<std::uint64_t> seen;
    std::vector<detail::OctreeCell> level(1);
    level[0].corner = {0, 0, 0};
    for (std::uint32_t i = 0; i < surface_points.size(); ++i)
        level[0].points.push_back(i);

    for (int depth = 1; depth <= max_depth && !level.empty(); ++depth) {
        const std::int64_t step = finest >> (depth - 1);
        OctreeLayer layer;
        layer.index = depth;
        std::vector<detail::OctreeCell> next;
        for (const auto& cell : level) {
            for (int c = 0; c < 8; ++c) {
                const std::int64_t x = cell.corner[0] + ((c & 1) ? step : 0);
                const std::int64_t y = cell.corner[1] + ((c & 2) ? step : 0);
                const std::int64_t z = cell.corner[2] + ((c & 4) ? step : 0);
                if (seen.insert(detail::pack_corner(x, y, z)).second)
                    layer.points.push_back(root.origin + unit * Vec3(double(x), double(y), double(z)));
            }
            if (depth == max_depth || cell.points.empty())
                continue;
            const std::int64_t half = step / 2;
            const Vec3 mid = root.origin + unit * Vec3(double(cell.corner[0] + half), double(cell.corner[1] + half),
                                                       double(cell.corner[2] + half));
            std::array<detail::OctreeCell, 8> children;
            for (int c = 0; c < 8; ++c)
                children[c].corner = {cell.corner[0] + ((c & 1) ? half : 0), cell.corner[1] + ((c & 2) ? half : 0),
                                      cell.corner[2] + ((c & 4) ? half : 0)};
            for (std::uint32_t p : cell.points) {
                const Vec3& v = surface_points[p];
                const int oct = (v.x() >= mid.x() ? 1 : 0) | (v.y() >= mid.y() ? 2 : 0) | (v.z() >= mid.z() ? 4 : 0);
                children[oct].points.push_back(p);
            }
            for (auto& child : children)
                if (!child.points.empty())
                    next.push_back(std::move(child));
        }
        layer.sdf.assign(layer.points.size(), 0.0);
        grid.layers.push_back(std::move(layer));
        level = std::move(next);
    }
    return grid;
}

inline OctreeGrid build_octree(std::span<const Vec3> surface_points, int max_depth)
{
    return build_octree(surface_points, max_depth, enclosing_cube(surface_points));
}

// ---------------------------------------------------------------------------
// Screening

/// Distance beyond which the basis response falls below epsilon:
/// sqrt(-ln(eps) / min_k d_k^2).
inline double screening_radius(const ErbfBasis& basis, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("screening_radius: epsilon must lie in (0, 1)");
    if (!(basis.axes.minCoeff() > 0.0))
        throw std::invalid_argument("screening_radius: axes must be positive");
    const double lambda = basis.axes.cwiseProduct(basis.axes).minCoeff();
    return std::sqrt(-std::log(epsilon) / lambda);
}

inline ScreenIndex build_screen_index(const KdTree& tree, const ErbfModel& model, double epsilon)
{
    if (model.empty())
        throw std::invalid_argument("build_screen_index: model has no bases");
    ScreenIndex index;
    index.radii.resize(model.size());
    index.neighbors.resize(model.size());
    index.epsilon = epsilon;
    for (std::size_t j = 0; j < model.size(); ++j)
        index.radii[j] = screening_radius(model.bases[j], epsilon);
    parallel_for(
        model.size(),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j)
                index.neighbors[j] = tree.radius_search(model.bases[j].center, index.radii[j]);
        },
        1);
    return index;
}

inline ScreenIndex build_screen_index(std::span<const Vec3> points, const ErbfModel& model, double epsilon)
{
    return build_screen_index(KdTree(points), model, epsilon);
}

} // namespace serbf

#endif // SERBF_SPATIAL_HPP
