#ifndef SERBF_KDTREE_HPP
#define SERBF_KDTREE_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "serbf/core.hpp"

namespace serbf {

/// Static 3-d tree over an owned copy of the points. Radius queries are exact
/// (squared distance <= r^2), nearest queries return the squared distance.
class KdTree
{
public:
    KdTree() = default;

    explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end())
    {
        index_.resize(points_.size());
        std::iota(index_.begin(), index_.end(), 0u);
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / kLeafSize + 2);
            build(0, static_cast<std::uint32_t>(points_.size()));
        }
    }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

    /// Appends every index with |p - query| <= radius to out (unordered).
    void radius_search(const Vec3& query, double radius, std::vector<std::uint32_t>& out) const
    {
        if (points_.empty() || radius < 0.0)
            return;
        radius_recurse(0, query, radius * radius, out);
    }

    /// Indices within radius, sorted ascending.
    std::vector<std::uint32_t> radius_search(const Vec3& query, double radius) const
    {
        std::vector<std::uint32_t> out;
        radius_search(query, radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    struct Hit
    {
        std::uint32_t index = 0;
        double dist_sq = std::numeric_limits<double>::infinity();
    };

    Hit nearest(const Vec3& query) const
    {
        Hit best;
        if (!points_.empty())
            nearest_recurse(0, query, best);
        return best;
    }

private:
    static constexpr std::uint32_t kLeafSize = 12;
    static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    struct Node
    {
        std::uint32_t begin = 0, end = 0;
        std::uint32_t left = kNone, right = kNone;
        int axis = -1; // -1 marks a leaf
        double split = 0.0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end)
    {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{begin, end});
        if (end - begin <= kLeafSize)
            return id;

        Vec3 lo = points_[index_[begin]], hi = lo;
        for (std::uint32_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[index_[i]]);
            hi = hi.cwiseMax(points_[index_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const std::uint32_t mid = begin + (end - begin) / 2;
        std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[index_[mid]][axis];
        const std::uint32_t left = build(begin, mid);
        const std::uint32_t right = build(mid, end);
        Node& node = nodes_[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    void radius_recurse(std::uint32_t id, const Vec3& q, double r2, std::vector<std::uint32_t>& out) const
    {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t p = index_[i];
                if ((points_[p] - q).squaredNorm() <= r2)
                    out.push_back(p);
            }
            return;
        }
        // Left holds coordinates <= split, right holds coordinates >= split.
        const double diff = q[node.axis] - node.split;
        if (diff <= 0.0) {
            radius_recurse(node.left, q, r2, out);
            if (diff * diff <= r2)
                radius_recurse(node.right, q, r2, out);
        } else {
            radius_recurse(node.right, q, r2, out);
            if (diff * diff <= r2)
                radius_recurse(node.left, q, r2, out);
        }
    }

    void nearest_recurse(std::uint32_t id, const Vec3& q, Hit& best) const
    {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t p = index_[i];
                const double d2 = (points_[p] - q).squaredNorm();
                if (d2 < best.dist_sq || (d2 == best.dist_sq && p < best.index)) {
                    best.dist_sq = d2;
                    best.index = p;
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const std::uint32_t near = diff <= 0.0 ? node.left : node.right;
        const std::uint32_t far = diff <= 0.0 ? node.right : node.left;
        nearest_recurse(near, q, best);
        if (diff * diff <= best.dist_sq)
            nearest_recurse(far, q, best);
    }

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> index_;
    std::vector<Node> nodes_;
};

} // namespace serbf

#endif // SERBF_KDTREE_HPP
