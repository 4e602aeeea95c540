#ifndef SERBF_GRAD_HPP
#define SERBF_GRAD_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/parallel.hpp"

namespace serbf {

/// Training-point indices that enter the loss, ascending and unique.
struct ActiveSet
{
    std::vector<std::uint32_t> indices;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

/// Union of the near-surface band (tau1 < t < tau2), exterior points predicted
/// above tau1 and interior points predicted below tau2. The three groups are
/// disjoint in t, so one ascending pass yields the deduplicated union.
inline ActiveSet select_active(std::span<const double> labels, std::span<const double> preds, double tau1, double tau2)
{
    if (labels.size() != preds.size())
        throw std::invalid_argument("select_active: labels and predictions differ in length");
    ActiveSet set;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double t = labels[i], psi = preds[i];
        const bool band = tau1 < t && t < tau2;
        const bool false_inside = t <= tau1 && psi > tau1;
        const bool false_outside = t >= tau2 && psi < tau2;
        if (band || false_inside || false_outside)
            set.indices.push_back(static_cast<std::uint32_t>(i));
    }
    return set;
}

inline double loss_l2(std::span<const double> preds, std::span<const double> labels, const ActiveSet& active)
{
    double sum = 0.0;
    for (auto i : active.indices) {
        const double e = preds[i] - labels[i];
        sum += e * e;
    }
    return sum;
}

inline double loss_l1(std::span<const double> weights)
{
    double sum = 0.0;
    for (double w : weights)
        sum += std::abs(w);
    return sum;
}

inline double loss_l1(const ErbfModel& model)
{
    double sum = 0.0;
    for (const auto& b : model.bases)
        sum += std::abs(b.weight);
    return sum;
}

/// E_i = psi_i - t_i over the active set, in active-index order.
inline std::vector<double> residuals(std::span<const double> preds, std::span<const double> labels,
                                     const ActiveSet& active)
{
    std::vector<double> e;
    e.reserve(active.size());
    for (auto i : active.indices)
        e.push_back(preds[i] - labels[i]);
    return e;
}

inline double max_abs_residual(std::span<const double> preds, std::span<const double> labels, const ActiveSet& active)
{
    double m = 0.0;
    for (auto i : active.indices)
        m = std::max(m, std::abs(preds[i] - labels[i]));
    return m;
}

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct GradientBundle
{
    std::vector<Vec3> d_center;
    std::vector<Vec3> d_axes;
    std::vector<Vec3> d_angles; // (theta_x, theta_y, theta_z)
    std::vector<double> d_weight;    // of the squared-error term
    std::vector<double> d_weight_l1; // subgradient of sum |w|, zero at w = 0

    explicit GradientBundle(std::size_t m = 0)
        : d_center(m, Vec3::Zero()), d_axes(m, Vec3::Zero()), d_angles(m, Vec3::Zero()), d_weight(m, 0.0),
          d_weight_l1(m, 0.0)
    {
    }

    std::size_t size() const { return d_weight.size(); }
};

/// Partial derivatives of R = Rz Ry Rx with respect to each angle.
inline std::array<Mat3, 3> rotation_derivatives(const Vec3& angles)
{
    const double cx = std::cos(angles.x()), sx = std::sin(angles.x());
    const double cy = std::cos(angles.y()), sy = std::sin(angles.y());
    const double cz = std::cos(angles.z()), sz = std::sin(angles.z());
    Mat3 dx, dy, dz;
    dx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
    dy << -sy, 0, -cy, 0, 0, 0, cy, 0, -sy;
    dz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;
    const Mat3 rx = rotation_x(angles.x()), ry = rotation_y(angles.y()), rz = rotation_z(angles.z());
    return {rz * ry * dx, rz * dy * rx, dz * ry * rx};
}

/// Kernel responses for the (basis, point) pairs listed in a screen index.
struct SparseFeatures
{
    std::vector<std::vector<double>> values; // aligned with ScreenIndex::neighbors
};

/// Screen index listing every point for every basis (the dense case).
inline ScreenIndex full_screen(std::size_t point_count, std::size_t basis_count)
{
    ScreenIndex s;
    s.neighbors.assign(basis_count, std::vector<std::uint32_t>(point_count));
    for (auto& list : s.neighbors)
        std::iota(list.begin(), list.end(), 0u);
    s.radii.assign(basis_count, std::numeric_limits<double>::infinity());
    return s;
}

inline SparseFeatures compute_features(std::span<const Vec3> points, std::span<const KernelFrame> frames,
                                       const ScreenIndex& screen)
{
    SparseFeatures f;
    f.values.resize(frames.size());
    parallel_for(
        frames.size(),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j) {
                const auto& list = screen.neighbors[j];
                auto& out = f.values[j];
                out.resize(list.size());
                for (std::size_t k = 0; k < list.size(); ++k)
                    out[k] = screen.clip(frames[j].response(points[list[k]]));
            }
        },
        1);
    return f;
}

/// Same accumulation order as model_eval with a screen index.
inline std::vector<double> predict_from_features(std::size_t point_count, std::span<const KernelFrame> frames,
                                                 const ScreenIndex& screen, const SparseFeatures& features)
{
    std::vector<double> out(point_count, 0.0);
    parallel_for(point_count, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = 0; j < frames.size(); ++j) {
            const auto& list = screen.neighbors[j];
            const auto& vals = features.values[j];
            std::size_t k = std::lower_bound(list.begin(), list.end(), static_cast<std::uint32_t>(begin)) - list.begin();
            for (; k < list.size() && list[k] < end; ++k)
                out[list[k]] += frames[j].coeff * vals[k];
        }
    });
    return out;
}

/// Gradients of sum_{i active} (psi_i - t_i)^2 given per-point residuals
/// (zero entries and masked-out points contribute nothing).
///
/// With psi = sum_j w_j |w_j| F_j, F_j = exp(-sum_k d_k^2 y_k^2) and
/// y = R (x - c), each active pair contributes A = 4 E w|w| F and
///   dL/dw   += 4 |w| F E
///   dL/dd_k += -A d_k y_k^2
///   dL/dc   += A R^T (D^2 y)
///   dL/dth  += -A (D^2 y) . (dR/dth) (x - c)
inline GradientBundle backward(std::span<const Vec3> points, const ErbfModel& model,
                               std::span<const KernelFrame> frames, const ScreenIndex& screen,
                               const SparseFeatures& features, std::span<const double> residual_by_point,
                               std::span<const char> active_mask)
{
    const std::size_t m = model.size();
    GradientBundle g(m);
    for (std::size_t j = 0; j < m; ++j)
        g.d_weight_l1[j] = sign_of(model.bases[j].weight);

    parallel_for(
        m,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j) {
                const KernelFrame& f = frames[j];
                const ErbfBasis& b = model.bases[j];
                const auto& list = screen.neighbors[j];
                const auto& vals = features.values[j];
                const double abs_w = std::abs(b.weight);

                double sum_fe = 0.0;
                Vec3 sum_u = Vec3::Zero();
                Vec3 sum_y2 = Vec3::Zero();
                Mat3 sum_u_delta = Mat3::Zero();
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const std::uint32_t i = list[k];
                    if (!active_mask[i])
                        continue;
                    const double e = residual_by_point[i];
                    if (e == 0.0)
                        continue;
                    const double fe = vals[k] * e;
                    sum_fe += fe;
                    const double a = 4.0 * f.coeff * fe;
                    if (a == 0.0)
                        continue;
                    const Vec3 delta = points[i] - f.center;
                    const Vec3 y = f.rotation * delta;
                    const Vec3 u = f.axes_sq.cwiseProduct(y);
                    sum_u += a * u;
                    sum_y2 += a * y.cwiseProduct(y);
                    sum_u_delta.noalias() += (a * u) * delta.transpose();
                }
                g.d_weight[j] = 4.0 * abs_w * sum_fe;
                g.d_axes[j] = -b.axes.cwiseProduct(sum_y2);
                g.d_center[j] = f.rotation.transpose() * sum_u;
                const auto dr = rotation_derivatives(b.angles);
                for (int a = 0; a < 3; ++a)
                    g.d_angles[j][a] = -(dr[a].cwiseProduct(sum_u_delta)).sum();
            }
        },
        1);
    return g;
}

/// Analytic gradients of the filtered squared error over the active set, plus
/// the L1 subgradient. Without a screen index every pair participates.
inline GradientBundle grad_all(std::span<const Vec3> points, std::span<const double> labels, const ErbfModel& model,
                               const ActiveSet& active, const ScreenIndex* screen = nullptr)
{
    if (model.empty())
        throw std::invalid_argument("grad_all: model has no bases");
    if (points.size() != labels.size())
        throw std::invalid_argument("grad_all: points and labels differ in length");
    ScreenIndex dense;
    if (!screen) {
        dense = full_screen(points.size(), model.size());
        screen = &dense;
    }
    const auto frames = make_frames(model);
    const auto features = compute_features(points, frames, *screen);
    const auto preds = predict_from_features(points.size(), frames, *screen, features);
    std::vector<double> e(points.size(), 0.0);
    std::vector<char> mask(points.size(), 0);
    for (auto i : active.indices) {
        if (i >= points.size())
            throw std::invalid_argument("grad_all: active index out of range");
        e[i] = preds[i] - labels[i];
        mask[i] = 1;
    }
    return backward(points, model, frames, *screen, features, e, mask);
}

struct LossWeights
{
    double alpha = 1.0;
    double beta = 0.0;
};

/// Two-task min-norm weighting: alpha = clip((g1 - g2).g1 / |g2 - g1|^2, 0, 1)
/// with g1 the L1 gradient and g2 the L2 gradient with respect to W.
/// Coincident gradients fall back to pure accuracy (1, 0).
inline LossWeights dynamic_weights(std::span<const double> grad_w_l2, std::span<const double> grad_w_l1)
{
    if (grad_w_l2.size() != grad_w_l1.size())
        throw std::invalid_argument("dynamic_weights: gradient lengths differ");
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < grad_w_l2.size(); ++j) {
        const double g1 = grad_w_l1[j], g2 = grad_w_l2[j];
        num += (g1 - g2) * g1;
        den += (g2 - g1) * (g2 - g1);
    }
    if (!(den >= 1e-18))
        return {1.0, 0.0};
    const double alpha = std::clamp(num / den, 0.0, 1.0);
    return {alpha, 1.0 - alpha};
}

} // namespace serbf

#endif // SERBF_GRAD_HPP
