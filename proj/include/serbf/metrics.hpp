#ifndef SERBF_METRICS_HPP
#define SERBF_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/kdtree.hpp"
#include "serbf/mesh.hpp"
#include "serbf/parallel.hpp"
#include "serbf/random.hpp"

namespace serbf {

/// Point sample of a surface with unit normals (normals may be empty).
struct SurfaceSamples
{
    PointList points;
    std::vector<Vec3> normals;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Area-weighted uniform samples. Normals interpolate the area-weighted vertex
/// normals barycentrically; the face normal is used where that average vanishes.
inline SurfaceSamples sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed)
{
    if (n < 1)
        throw std::invalid_argument("sample_surface: n must be at least 1");
    std::vector<double> cumulative(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        total += mesh.area(t);
        cumulative[t] = total;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("sample_surface: mesh has zero area");
    const auto vn = mesh.vertex_normals();

    SplitMix64 rng(seed);
    SurfaceSamples out;
    out.points.reserve(n);
    out.normals.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double pick = rng.uniform() * total;
        auto t = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                          cumulative.begin());
        t = std::min(t, cumulative.size() - 1);
        while (t > 0 && mesh.area(t) == 0.0) // never land on a degenerate face
            --t;
        const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const double a = 1.0 - r1, b = r1 * (1.0 - r2), c = r1 * r2;
        const auto& f = mesh.triangles[t];
        out.points.push_back(a * mesh.vertices[f[0]] + b * mesh.vertices[f[1]] + c * mesh.vertices[f[2]]);
        Vec3 nrm = a * vn[f[0]] + b * vn[f[1]] + c * vn[f[2]];
        const double len = nrm.norm();
        out.normals.push_back(len > 1e-12 ? Vec3(nrm / len) : mesh.face_normal(t));
    }
    return out;
}

/// For each point of `from`, the nearest point of `to` (distance and index).
struct DirectedMatch
{
    std::vector<double> dist;
    std::vector<std::uint32_t> index;
};

inline DirectedMatch directed_match(const PointList& from, const KdTree& to)
{
    if (from.empty() || to.empty())
        throw std::invalid_argument("directed_match: both samples must be non-empty");
    DirectedMatch m;
    m.dist.resize(from.size());
    m.index.resize(from.size());
    parallel_for(from.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto hit = to.nearest(from[i]);
            m.dist[i] = std::sqrt(hit.dist_sq);
            m.index[i] = hit.index;
        }
    });
    return m;
}

namespace detail {

inline double max_of(const std::vector<double>& xs) { return *std::max_element(xs.begin(), xs.end()); }

inline double mean_of(const std::vector<double>& xs)
{
    double s = 0.0;
    for (double x : xs)
        s += x;
    return s / static_cast<double>(xs.size());
}

inline double normal_agreement(const SurfaceSamples& from, const SurfaceSamples& to, const DirectedMatch& m)
{
    double s = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i)
        s += std::abs(from.normals[i].dot(to.normals[m.index[i]]));
    return s / static_cast<double>(from.size());
}

inline void require_normals(const SurfaceSamples& s)
{
    if (s.normals.size() != s.points.size())
        throw std::invalid_argument("cosine_similarity: every sample needs a normal");
}

} // namespace detail

inline double hausdorff(const PointList& a, const PointList& b)
{
    const auto ab = directed_match(a, KdTree(b));
    const auto ba = directed_match(b, KdTree(a));
    return std::max(detail::max_of(ab.dist), detail::max_of(ba.dist));
}

inline double chamfer(const PointList& a, const PointList& b)
{
    const auto ab = directed_match(a, KdTree(b));
    const auto ba = directed_match(b, KdTree(a));
    return 0.5 * detail::mean_of(ab.dist) + 0.5 * detail::mean_of(ba.dist);
}

inline double cosine_similarity(const SurfaceSamples& a, const SurfaceSamples& b)
{
    detail::require_normals(a);
    detail::require_normals(b);
    const auto ab = directed_match(a.points, KdTree(b.points));
    const auto ba = directed_match(b.points, KdTree(a.points));
    return 0.5 * detail::normal_agreement(a, b, ab) + 0.5 * detail::normal_agreement(b, a, ba);
}

struct MetricsReport
{
    double hd = 0.0;
    double cd = 0.0;
    double cs = 0.0;
    double diagonal = 1.0; // bounding-box diagonal of the reference sample
    std::size_t sample_count = 0;
    double runtime = 0.0; // seconds
    std::size_t basis_count = 0;
    std::size_t effective_basis_count = 0;
    std::size_t param_count = 0;

    double hd_normalized() const { return hd / diagonal; }
    double cd_normalized() const { return cd / diagonal; }

    std::string to_text() const
    {
        std::ostringstream os;
        os.precision(std::numeric_limits<double>::max_digits10);
        os << "hd=" << hd << '\n'
           << "cd=" << cd << '\n'
           << "cs=" << cs << '\n'
           << "diagonal=" << diagonal << '\n'
           << "hd_normalized=" << hd_normalized() << '\n'
           << "cd_normalized=" << cd_normalized() << '\n'
           << "sample_count=" << sample_count << '\n'
           << "basis_count=" << basis_count << '\n'
           << "effective_basis_count=" << effective_basis_count << '\n'
           << "param_count=" << param_count << '\n'
           << "runtime=" << runtime << '\n';
        return os.str();
    }
};

inline double bbox_diagonal(const PointList& pts)
{
    if (pts.empty())
        return 0.0;
    Vec3 lo = pts.front(), hi = lo;
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

/// HD, CD and CS of a test sample against a reference sample, sharing one pair
/// of nearest-neighbour passes. Distances are also reported relative to the
/// reference bounding-box diagonal.
inline MetricsReport compare_samples(const SurfaceSamples& test, const SurfaceSamples& reference)
{
    detail::require_normals(test);
    detail::require_normals(reference);
    const auto tr = directed_match(test.points, KdTree(reference.points));
    const auto rt = directed_match(reference.points, KdTree(test.points));
    MetricsReport r;
    r.hd = std::max(detail::max_of(tr.dist), detail::max_of(rt.dist));
    r.cd = 0.5 * detail::mean_of(tr.dist) + 0.5 * detail::mean_of(rt.dist);
    r.cs = 0.5 * detail::normal_agreement(test, reference, tr) + 0.5 * detail::normal_agreement(reference, test, rt);
    r.diagonal = bbox_diagonal(reference.points);
    if (!(r.diagonal > 0.0))
        r.diagonal = 1.0;
    r.sample_count = std::min(test.size(), reference.size());
    return r;
}

} // namespace serbf

#endif // SERBF_METRICS_HPP
