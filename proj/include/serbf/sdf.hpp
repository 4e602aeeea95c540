#ifndef SERBF_SDF_HPP
#define SERBF_SDF_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/mesh.hpp"
#include "serbf/parallel.hpp"
#include "serbf/random.hpp"

namespace serbf {

// ---------------------------------------------------------------------------
// Analytic shapes centred at the origin

struct AnalyticShape
{
    enum class Kind { sphere, box, torus };
    Kind kind = Kind::sphere;
    Vec3 params = Vec3(1.0, 0.0, 0.0); // sphere: (R); box: half extents; torus: (R, r)

    static AnalyticShape sphere(double radius)
    {
        if (!(radius > 0.0))
            throw std::invalid_argument("sphere radius must be positive");
        return {Kind::sphere, Vec3(radius, 0.0, 0.0)};
    }

    static AnalyticShape box(const Vec3& half)
    {
        if (!(half.minCoeff() > 0.0))
            throw std::invalid_argument("box half extents must be positive");
        return {Kind::box, half};
    }

    static AnalyticShape torus(double major, double minor)
    {
        if (!(minor > 0.0 && major > minor))
            throw std::invalid_argument("torus needs R > r > 0");
        return {Kind::torus, Vec3(major, minor, 0.0)};
    }

    /// "sphere:R", "box:hx,hy,hz" or "torus:R,r".
    static AnalyticShape parse(const std::string& spec)
    {
        const auto colon = spec.find(':');
        const std::string name = spec.substr(0, colon);
        std::vector<double> v;
        if (colon != std::string::npos) {
            std::stringstream ss(spec.substr(colon + 1));
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    std::size_t used = 0;
                    v.push_back(std::stod(tok, &used));
                    if (used != tok.size())
                        throw std::invalid_argument(tok);
                } catch (const std::exception&) {
                    throw std::invalid_argument("bad shape parameter '" + tok + "' in '" + spec + "'");
                }
            }
        }
        if (name == "sphere" && v.size() <= 1)
            return sphere(v.empty() ? 1.0 : v[0]);
        if (name == "box" && v.size() == 3)
            return box(Vec3(v[0], v[1], v[2]));
        if (name == "box" && v.size() == 1)
            return box(Vec3::Constant(v[0]));
        if (name == "torus" && v.size() == 2)
            return torus(v[0], v[1]);
        throw std::invalid_argument("unknown shape '" + spec + "' (expected sphere:R, box:hx,hy,hz or torus:R,r)");
    }

    static bool looks_like_shape(const std::string& spec)
    {
        const std::string name = spec.substr(0, spec.find(':'));
        return name == "sphere" || name == "box" || name == "torus";
    }

    double sdf(const Vec3& p) const
    {
        switch (kind) {
        case Kind::sphere:
            return p.norm() - params.x();
        case Kind::box: {
            const Vec3 q = p.cwiseAbs() - params;
            return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        }
        case Kind::torus: {
            const double ring = std::hypot(p.x(), p.y()) - params.x();
            return std::hypot(ring, p.z()) - params.y();
        }
        }
        return 0.0;
    }

    std::vector<double> sdf(std::span<const Vec3> points) const
    {
        std::vector<double> out(points.size());
        parallel_for(points.size(), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                out[i] = sdf(points[i]);
        });
        return out;
    }

    /// Half extent of the axis-aligned bounding box.
    Vec3 half_extent() const
    {
        switch (kind) {
        case Kind::sphere:
            return Vec3::Constant(params.x());
        case Kind::box:
            return params;
        case Kind::torus:
            return Vec3(params.x() + params.y(), params.x() + params.y(), params.y());
        }
        return Vec3::Zero();
    }

    /// Uniform area-weighted samples on the zero level set with outward unit normals.
    void sample(std::size_t n, std::uint64_t seed, PointList& points, std::vector<Vec3>& normals) const
    {
        SplitMix64 rng(seed);
        points.clear();
        normals.clear();
        points.reserve(n);
        normals.reserve(n);
        const double two_pi = 2.0 * std::numbers::pi;
        while (points.size() < n) {
            switch (kind) {
            case Kind::sphere: {
                const double z = 2.0 * rng.uniform() - 1.0;
                const double phi = two_pi * rng.uniform();
                const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
                const Vec3 dir(s * std::cos(phi), s * std::sin(phi), z);
                points.push_back(params.x() * dir);
                normals.push_back(dir);
                break;
            }
            case Kind::box: {
                const Vec3 h = params;
                const std::array<double, 3> face_area = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
                const double total = face_area[0] + face_area[1] + face_area[2];
                double u = rng.uniform() * total;
                int axis = 0;
                while (axis < 2 && u >= face_area[axis]) {
                    u -= face_area[axis];
                    ++axis;
                }
                const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
                Vec3 p;
                for (int k = 0; k < 3; ++k)
                    p[k] = (2.0 * rng.uniform() - 1.0) * h[k];
                p[axis] = side * h[axis];
                Vec3 nrm = Vec3::Zero();
                nrm[axis] = side;
                points.push_back(p);
                normals.push_back(nrm);
                break;
            }
            case Kind::torus: {
                const double big = params.x(), small = params.y();
                const double u = two_pi * rng.uniform();
                const double v = two_pi * rng.uniform();
                // area element is proportional to (R + r cos v)
                if (rng.uniform() * (big + small) > big + small * std::cos(v))
                    break;
                const Vec3 nrm(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
                const Vec3 ring(big * std::cos(u), big * std::sin(u), 0.0);
                points.push_back(ring + small * nrm);
                normals.push_back(nrm);
                break;
            }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Triangle geometry

/// Which feature of a triangle holds the closest point.
enum class TriFeature : std::uint8_t { face, edge01, edge12, edge20, vertex0, vertex1, vertex2 };

struct ClosestPoint
{
    Vec3 point;
    TriFeature feature = TriFeature::face;
};

/// Closest point on triangle abc (Voronoi-region walk).
inline ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0)
        return {a, TriFeature::vertex0};
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3)
        return {b, TriFeature::vertex1};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return {a + v * ab, TriFeature::edge01};
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6)
        return {c, TriFeature::vertex2};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return {a + w * ac, TriFeature::edge20};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {b + w * (c - b), TriFeature::edge12};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return {a + ab * v + ac * w, TriFeature::face};
}

/// Moller-Trumbore; returns the ray parameter of a hit with t > 0.
inline std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                          const Vec3& c)
{
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-300)
        return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0)
        return std::nullopt;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0)
        return std::nullopt;
    const double t = e2.dot(qv) * inv;
    if (!(t > 0.0))
        return std::nullopt;
    return t;
}

// ---------------------------------------------------------------------------
// Mesh distance queries

/// Signed distance to a triangle mesh. Magnitude from an AABB tree, sign from
/// a majority vote of three ray-parity tests. Meshes that are not watertight
/// use the angle-weighted pseudonormal at the closest feature instead.
class MeshDistance
{
public:
    explicit MeshDistance(TriangleMesh mesh) : mesh_(std::move(mesh))
    {
        if (mesh_.triangles.empty())
            throw std::invalid_argument("MeshDistance: mesh has no triangles");
        mesh_.validate();
        watertight_ = mesh_.is_watertight();
        order_.resize(mesh_.triangles.size());
        for (std::uint32_t t = 0; t < order_.size(); ++t)
            order_[t] = t;
        boxes_.resize(mesh_.triangles.size());
        centroids_.resize(mesh_.triangles.size());
        for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
            const auto& f = mesh_.triangles[t];
            Box b{mesh_.vertices[f[0]], mesh_.vertices[f[0]]};
            b.grow(mesh_.vertices[f[1]]);
            b.grow(mesh_.vertices[f[2]]);
            boxes_[t] = b;
            centroids_[t] = (mesh_.vertices[f[0]] + mesh_.vertices[f[1]] + mesh_.vertices[f[2]]) / 3.0;
        }
        build(0, static_cast<std::uint32_t>(order_.size()));
        if (!watertight_)
            build_pseudonormals();
    }

    bool watertight() const { return watertight_; }
    const TriangleMesh& mesh() const { return mesh_; }

    struct Closest
    {
        double dist_sq = std::numeric_limits<double>::infinity();
        std::uint32_t triangle = 0;
        ClosestPoint where;
    };

    Closest closest(const Vec3& p) const
    {
        Closest best;
        closest_recurse(0, p, best);
        return best;
    }

    double unsigned_distance(const Vec3& p) const { return std::sqrt(closest(p).dist_sq); }

    /// Number of triangles crossed by the ray origin + t dir, t > 0.
    int crossings(const Vec3& origin, const Vec3& dir) const
    {
        int count = 0;
        const Vec3 inv = dir.cwiseInverse();
        ray_recurse(0, origin, dir, inv, count);
        return count;
    }

    bool inside(const Vec3& p) const
    {
        static const std::array<Vec3, 3> dirs = {Vec3(0.5773502691896258, 0.5773502691896257, 0.5773502691896259),
                                                 Vec3(-0.3141592653589793, 0.2718281828459045, 0.9096655209395489),
                                                 Vec3(0.6931471805599453, -0.7071067811865476, -0.1398329284470329)};
        int votes = 0;
        for (const auto& d : dirs)
            votes += crossings(p, d.normalized()) & 1;
        return votes >= 2;
    }

    double signed_distance(const Vec3& p) const
    {
        const Closest c = closest(p);
        const double d = std::sqrt(c.dist_sq);
        if (d == 0.0)
            return 0.0;
        if (watertight_)
            return inside(p) ? -d : d;
        const Vec3 n = pseudonormal(c);
        return (p - c.where.point).dot(n) < 0.0 ? -d : d;
    }

private:
    struct Box
    {
        Vec3 lo, hi;
        void grow(const Vec3& p)
        {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        void grow(const Box& b)
        {
            lo = lo.cwiseMin(b.lo);
            hi = hi.cwiseMax(b.hi);
        }
        double dist_sq(const Vec3& p) const { return (lo - p).cwiseMax(p - hi).cwiseMax(0.0).squaredNorm(); }
    };

    struct Node
    {
        Box box;
        std::uint32_t begin = 0, end = 0;
        std::uint32_t left = 0, right = 0;
        bool leaf = true;
    };

    static constexpr std::uint32_t kLeafSize = 4;

    std::uint32_t build(std::uint32_t begin, std::uint32_t end)
    {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{});
        Box box = boxes_[order_[begin]];
        Box cbox{centroids_[order_[begin]], centroids_[order_[begin]]};
        for (std::uint32_t i = begin; i < end; ++i) {
            box.grow(boxes_[order_[i]]);
            cbox.grow(centroids_[order_[i]]);
        }
        nodes_[id].box = box;
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        if (end - begin <= kLeafSize)
            return id;
        int axis = 0;
        (cbox.hi - cbox.lo).maxCoeff(&axis);
        const std::uint32_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return centroids_[a][axis] < centroids_[b][axis]; });
        const auto left = build(begin, mid);
        const auto right = build(mid, end);
        nodes_[id].leaf = false;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void closest_recurse(std::uint32_t id, const Vec3& p, Closest& best) const
    {
        const Node& node = nodes_[id];
        if (node.leaf) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t t = order_[i];
                const auto& f = mesh_.triangles[t];
                const auto cp =
                    closest_point_on_triangle(p, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
                const double d2 = (cp.point - p).squaredNorm();
                if (d2 < best.dist_sq || (d2 == best.dist_sq && t < best.triangle)) {
                    best.dist_sq = d2;
                    best.triangle = t;
                    best.where = cp;
                }
            }
            return;
        }
        const double dl = nodes_[node.left].box.dist_sq(p);
        const double dr = nodes_[node.right].box.dist_sq(p);
        const auto first = dl <= dr ? node.left : node.right;
        const auto second = dl <= dr ? node.right : node.left;
        if (std::min(dl, dr) <= best.dist_sq)
            closest_recurse(first, p, best);
        if (std::max(dl, dr) <= best.dist_sq)
            closest_recurse(second, p, best);
    }

    static bool ray_hits_box(const Box& b, const Vec3& o, const Vec3& inv)
    {
        double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            double t1 = (b.lo[k] - o[k]) * inv[k];
            double t2 = (b.hi[k] - o[k]) * inv[k];
            if (std::isnan(t1) || std::isnan(t2)) // axis-parallel ray on the slab plane
                continue;
            if (t1 > t2)
                std::swap(t1, t2);
            tmin = std::max(tmin, t1);
            tmax = std::min(tmax, t2);
            if (tmin > tmax)
                return false;
        }
        return true;
    }

    void ray_recurse(std::uint32_t id, const Vec3& o, const Vec3& dir, const Vec3& inv, int& count) const
    {
        const Node& node = nodes_[id];
        if (!ray_hits_box(node.box, o, inv))
            return;
        if (node.leaf) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const auto& f = mesh_.triangles[order_[i]];
                if (ray_triangle(o, dir, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]))
                    ++count;
            }
            return;
        }
        ray_recurse(node.left, o, dir, inv, count);
        ray_recurse(node.right, o, dir, inv, count);
    }

    static std::uint64_t edge_key(std::uint32_t a, std::uint32_t b)
    {
        if (a > b)
            std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }

    void build_pseudonormals()
    {
        vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());
        for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
            const auto& f = mesh_.triangles[t];
            const Vec3 n = mesh_.face_normal(t);
            for (int k = 0; k < 3; ++k) {
                const Vec3& p = mesh_.vertices[f[k]];
                const Vec3 e1 = (mesh_.vertices[f[(k + 1) % 3]] - p).normalized();
                const Vec3 e2 = (mesh_.vertices[f[(k + 2) % 3]] - p).normalized();
                const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
                vertex_normals_[f[k]] += angle * n;
                edge_normals_[edge_key(f[k], f[(k + 1) % 3])] += n;
            }
        }
    }

    Vec3 pseudonormal(const Closest& c) const
    {
        const auto& f = mesh_.triangles[c.triangle];
        switch (c.where.feature) {
        case TriFeature::face:
            return mesh_.face_normal(c.triangle);
        case TriFeature::vertex0:
            return vertex_normals_[f[0]];
        case TriFeature::vertex1:
            return vertex_normals_[f[1]];
        case TriFeature::vertex2:
            return vertex_normals_[f[2]];
        case TriFeature::edge01:
            return edge_normals_.at(edge_key(f[0], f[1]));
        case TriFeature::edge12:
            return edge_normals_.at(edge_key(f[1], f[2]));
        case TriFeature::edge20:
            return edge_normals_.at(edge_key(f[2], f[0]));
        }
        return Vec3::Zero();
    }

    TriangleMesh mesh_;
    bool watertight_ = false;
    std::vector<std::uint32_t> order_;
    std::vector<Box> boxes_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
    std::vector<Vec3> vertex_normals_;
    std::unordered_map<std::uint64_t, Vec3> edge_normals_;
};

inline std::vector<double> mesh_sdf(const MeshDistance& dist, std::span<const Vec3> points)
{
    std::vector<double> out(points.size());
    parallel_for(points.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            out[i] = dist.signed_distance(points[i]);
    });
    return out;
}

inline std::vector<double> mesh_sdf(const TriangleMesh& mesh, std::span<const Vec3> points)
{
    return mesh_sdf(MeshDistance(mesh), points);
}

} // namespace serbf

#endif // SERBF_SDF_HPP
