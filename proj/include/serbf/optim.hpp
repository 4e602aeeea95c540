#ifndef SERBF_OPTIM_HPP
#define SERBF_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/grad.hpp"
#include "serbf/init.hpp"
#include "serbf/kdtree.hpp"
#include "serbf/random.hpp"
#include "serbf/spatial.hpp"

namespace serbf {

/// Condition that switches the L1 term on: loss stability alone, or loss
/// stability together with the active max error below tau_m.
enum class L1Activation
{
    loss_and_error,
    loss_only
};

struct TrainConfig
{
    std::size_t batch_size = 10000;
    int max_epochs = 2000;
    int l1_cutoff_epoch = 1600; // after this epoch: pure L2, no add/prune
    double lr = 0.01;
    double lr_final = 1e-3;     // start of the cosine schedule in the final phase
    double lr_final_min = 1e-5;
    int l_max = 10;
    int l_start = 0; // 0 selects the third-to-last layer with >100 interior points
    double tau1 = 0.9;
    double tau2 = 1.1;
    double tau_m = 0.02;
    double tau_d = 0.01;
    double tau_l1 = 5.0;
    double tau_l2 = 0.5;
    int k_l1 = 50;
    int k_l2 = 10;
    double gamma = 1e-3;
    double epsilon = 1e-7;
    // Hierarchical schedule: inside [begin, end] a layer advance is queued when
    // L1 is re-enabled and additionally every `interval` epochs.
    int layer_window_begin = 400;
    int layer_window_end = 800;
    int layer_force_interval = 100;
    double add_radius_factor = 2.0; // neighbourhood radius for extreme-error points, in grid spacings
    double add_min_spread = 0.5;    // floor on the surface distance of new bases, in grid spacings
    InscribedRadiusConvention inscribed_radius_convention = InscribedRadiusConvention::as_printed;
    L1Activation l1_activation = L1Activation::loss_and_error;
    std::uint64_t seed = 0;

    void validate() const
    {
        auto fail = [](const char* what) { throw std::invalid_argument(std::string("TrainConfig: ") + what); };
        if (batch_size < 1)
            fail("batch_size must be >= 1");
        if (max_epochs < 0)
            fail("max_epochs must be >= 0");
        if (max_epochs > 0 && !(l1_cutoff_epoch < max_epochs))
            fail("l1_cutoff_epoch must be below max_epochs");
        if (!(tau1 < 1.0 && 1.0 < tau2))
            fail("thresholds must satisfy tau1 < 1 < tau2");
        if (!(tau1 > 0 && tau_m > 0 && tau_d > 0 && tau_l1 > 0 && tau_l2 > 0 && gamma > 0))
            fail("thresholds must be positive");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            fail("epsilon must lie in (0, 1)");
        if (!(lr > 0 && lr_final > 0 && lr_final_min > 0))
            fail("learning rates must be positive");
        if (k_l1 < 1 || k_l2 < 1)
            fail("history windows must be >= 1");
        if (l_max < 1)
            fail("l_max must be >= 1");
        if (layer_force_interval < 1)
            fail("layer_force_interval must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper
{
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moments for one parameter group. Steps are tracked per entry so that
/// entries appended mid-training start with fresh bias correction.
struct AdamGroup
{
    std::vector<double> m, v;
    std::vector<std::int64_t> steps;

    explicit AdamGroup(std::size_t n = 0) : m(n, 0.0), v(n, 0.0), steps(n, 0) {}

    std::size_t size() const { return m.size(); }

    void append(std::size_t n)
    {
        m.resize(m.size() + n, 0.0);
        v.resize(v.size() + n, 0.0);
        steps.resize(steps.size() + n, 0);
    }

    /// Keeps blocks of `stride` entries whose mask is set.
    void compact(std::span<const char> keep, std::size_t stride)
    {
        std::size_t out = 0;
        for (std::size_t j = 0; j < keep.size(); ++j) {
            if (!keep[j])
                continue;
            for (std::size_t k = 0; k < stride; ++k) {
                m[out * stride + k] = m[j * stride + k];
                v[out * stride + k] = v[j * stride + k];
                steps[out * stride + k] = steps[j * stride + k];
            }
            ++out;
        }
        m.resize(out * stride);
        v.resize(out * stride);
        steps.resize(out * stride);
    }
};

/// Bias-corrected Adam update of one group in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamGroup& group, double lr,
                      const AdamHyper& hp = {})
{
    if (params.size() != grads.size() || params.size() != group.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g))
            throw std::runtime_error("adam_step: non-finite gradient");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        group.m[i] = hp.beta1 * group.m[i] + (1.0 - hp.beta1) * g;
        group.v[i] = hp.beta2 * group.v[i] + (1.0 - hp.beta2) * g * g;
        const auto t = static_cast<double>(++group.steps[i]);
        const double m_hat = group.m[i] / (1.0 - std::pow(hp.beta1, t));
        const double v_hat = group.v[i] / (1.0 - std::pow(hp.beta2, t));
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
}

/// Moments for the four parameter groups of a model.
struct ModelMoments
{
    AdamGroup centers, axes, angles, weights;

    explicit ModelMoments(std::size_t m = 0) : centers(3 * m), axes(3 * m), angles(3 * m), weights(m) {}

    void append(std::size_t n)
    {
        centers.append(3 * n);
        axes.append(3 * n);
        angles.append(3 * n);
        weights.append(n);
    }

    void compact(std::span<const char> keep)
    {
        centers.compact(keep, 3);
        axes.compact(keep, 3);
        angles.compact(keep, 3);
        weights.compact(keep, 1);
    }
};

namespace detail {

inline std::vector<double> flatten(const std::vector<Vec3>& v)
{
    std::vector<double> out(3 * v.size());
    for (std::size_t j = 0; j < v.size(); ++j)
        for (int k = 0; k < 3; ++k)
            out[3 * j + k] = v[j][k];
    return out;
}

} // namespace detail

/// Applies one Adam step to every group of the model. Gradients for the
/// weights are alpha * dL2/dW + beta * dL1/dW; the other groups use alpha * dL2.
inline void apply_gradients(ErbfModel& model, const GradientBundle& g, const LossWeights& lw, ModelMoments& moments,
                            double lr)
{
    const std::size_t m = model.size();
    std::vector<double> pc(3 * m), pd(3 * m), pa(3 * m), pw(m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto& b = model.bases[j];
        for (int k = 0; k < 3; ++k) {
            pc[3 * j + k] = b.center[k];
            pd[3 * j + k] = b.axes[k];
            pa[3 * j + k] = b.angles[k];
        }
        pw[j] = b.weight;
    }
    auto gc = detail::flatten(g.d_center);
    auto gd = detail::flatten(g.d_axes);
    auto ga = detail::flatten(g.d_angles);
    std::vector<double> gw(m);
    for (double& x : gc)
        x *= lw.alpha;
    for (double& x : gd)
        x *= lw.alpha;
    for (double& x : ga)
        x *= lw.alpha;
    for (std::size_t j = 0; j < m; ++j)
        gw[j] = lw.alpha * g.d_weight[j] + lw.beta * g.d_weight_l1[j];

    adam_step(pc, gc, moments.centers, lr);
    adam_step(pd, gd, moments.axes, lr);
    adam_step(pa, ga, moments.angles, lr);
    adam_step(pw, gw, moments.weights, lr);

    for (std::size_t j = 0; j < m; ++j) {
        auto& b = model.bases[j];
        for (int k = 0; k < 3; ++k) {
            b.center[k] = pc[3 * j + k];
            // The kernel depends on d^2 only, so the sign is immaterial.
            b.axes[k] = std::max(std::abs(pd[3 * j + k]), 1e-12);
            b.angles[k] = pa[3 * j + k];
        }
        b.weight = pw[j];
    }
}

// ---------------------------------------------------------------------------
// Schedule predicates

inline double population_std(std::span<const double> xs)
{
    if (xs.empty())
        return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / double(xs.size()));
}

/// L2 loss has settled: std over the last k_l2 epochs is below tau_l2.
inline bool l2_stable(std::span<const double> loss_history, const TrainConfig& cfg)
{
    const auto k = static_cast<std::size_t>(cfg.k_l2);
    if (loss_history.size() < k)
        return false;
    return population_std(loss_history.last(k)) < cfg.tau_l2;
}

/// Both L1 activation conditions: settled L2 loss and max active error below tau_m.
inline bool l1_activation_check(std::span<const double> loss_history, double max_active_error, const TrainConfig& cfg)
{
    return l2_stable(loss_history, cfg) && max_active_error < cfg.tau_m;
}

/// Effective basis count has varied by less than tau_l1 over the last k_l1 epochs.
inline bool basis_stability_check(std::span<const int> count_history, const TrainConfig& cfg)
{
    const auto k = static_cast<std::size_t>(cfg.k_l1);
    if (count_history.size() < k)
        return false;
    const auto window = count_history.last(k);
    const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
    return double(*hi - *lo) < cfg.tau_l1;
}

inline int effective_basis_count(const ErbfModel& model, double tau_d)
{
    int n = 0;
    for (const auto& b : model.bases)
        if (std::abs(b.weight) >= tau_d)
            ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Structural edits

inline std::vector<char> prune_mask(const ErbfModel& model, double tau_d)
{
    std::vector<char> keep(model.size());
    for (std::size_t j = 0; j < model.size(); ++j)
        keep[j] = std::abs(model.bases[j].weight) >= tau_d ? 1 : 0;
    return keep;
}

/// Removes every basis with |w| < tau_d, preserving the order of survivors.
inline ErbfModel prune_basis(const ErbfModel& model, double tau_d)
{
    const auto keep = prune_mask(model, tau_d);
    ErbfModel out;
    out.norm_m = model.norm_m;
    out.norm_h = model.norm_h;
    for (std::size_t j = 0; j < model.size(); ++j)
        if (keep[j])
            out.bases.push_back(model.bases[j]);
    if (out.empty() && !model.empty()) {
        double max_w = 0.0;
        for (const auto& b : model.bases)
            max_w = std::max(max_w, std::abs(b.weight));
        std::ostringstream os;
        os << "prune_basis: all " << model.size() << " bases fall below tau_d=" << tau_d
           << " (largest |w|=" << max_w << "); model would collapse";
        throw std::runtime_error(os.str());
    }
    return out;
}

struct AddBasisParams
{
    double tau_m = 0.02;
    double epsilon = 1e-7;
    double radius = 0.1;     // neighbourhood radius for the local-maximum test
    double min_spread = 0.0; // floor on the distance to the nearest surface sample
};

/// New kernels at extreme-error points: candidates have |E| > tau_m / 2 and
/// survive if no neighbour within `radius` has larger |E|. Each survivor gets
/// center = point, weight = -sign(E) |E|, zero angles and isotropic axes
/// sqrt(-ln(eps / |E|) / dbar^2), dbar its distance to the surface samples.
inline std::vector<ErbfBasis> add_basis(std::span<const double> errors, std::span<const Vec3> active_points,
                                        const KdTree& surface, const AddBasisParams& p)
{
    if (errors.size() != active_points.size())
        throw std::invalid_argument("add_basis: errors and points differ in length");
    std::vector<ErbfBasis> out;
    std::vector<std::uint32_t> candidates;
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (std::abs(errors[i]) > 0.5 * p.tau_m)
            candidates.push_back(static_cast<std::uint32_t>(i));
    if (candidates.empty())
        return out;

    const KdTree tree(active_points);
    std::vector<std::uint32_t> hood;
    for (auto i : candidates) {
        const double mag = std::abs(errors[i]);
        hood.clear();
        tree.radius_search(active_points[i], p.radius, hood);
        bool extreme = true;
        for (auto k : hood)
            if (std::abs(errors[k]) > mag) {
                extreme = false;
                break;
            }
        if (!extreme || !(mag > p.epsilon))
            continue;
        double dbar = surface.empty() ? 0.0 : std::sqrt(surface.nearest(active_points[i]).dist_sq);
        dbar = std::max(dbar, p.min_spread);
        if (!(dbar > 0.0))
            continue;
        const double axis = std::sqrt(-std::log(p.epsilon / mag) / (dbar * dbar));
        out.push_back(ErbfBasis{active_points[i], Vec3::Constant(axis), Vec3::Zero(), -sign_of(errors[i]) * mag});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training set and layer schedule

/// Training points V with normalized labels T and octree-layer tags.
struct SampleSet
{
    PointList points;
    std::vector<double> labels;
    std::vector<int> layer;

    std::size_t size() const { return points.size(); }

    void push(const Vec3& p, double label, int layer_tag)
    {
        points.push_back(p);
        labels.push_back(label);
        layer.push_back(layer_tag);
    }
};

struct OptimState
{
    int epoch = 0;
    int layer = 0;     // deepest octree layer in the training set
    int layer_cap = 0; // min(l_max, octree depth)
    bool l1_active = false;
    bool add_point_pending = false;
    bool final_phase = false;
    std::deque<double> loss_history; // at most k_l2 entries
    std::deque<int> count_history;   // at most k_l1 entries
};

/// Appends layer `state.layer + 1` with labels normalized by the model
/// constants. No-op at the layer cap.
inline void advance_layer(OptimState& state, const OctreeGrid& octree, SampleSet& training, double norm_m,
                          double norm_h)
{
    if (state.layer >= state.layer_cap || state.layer >= octree.layer_count()) {
        state.add_point_pending = false;
        return;
    }
    const auto& next = octree.layer(state.layer + 1);
    for (std::size_t i = 0; i < next.points.size(); ++i)
        training.push(next.points[i], normalize_sdf_value(next.sdf[i], norm_m, norm_h), next.index);
    ++state.layer;
    state.add_point_pending = false;
}

/// Default starting layer: third-to-last, moved deeper while that layer holds
/// at most 100 interior points.
inline int auto_start_layer(const OctreeGrid& octree, double norm_m, double norm_h, int cap)
{
    int ls = std::max(1, std::min(cap, octree.layer_count() - 2));
    auto interior = [&](int l) {
        int n = 0;
        const auto& layer = octree.layer(l);
        for (double s : layer.sdf) {
            const double t = normalize_sdf_value(s, norm_m, norm_h);
            if (t > 1.0 && t < 2.0)
                ++n;
        }
        return n;
    };
    while (ls < cap && interior(ls) <= 100)
        ++ls;
    return ls;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord
{
    int epoch = 0;
    double l2 = 0.0;
    double l1 = 0.0;
    double alpha = 1.0;
    double lr = 0.0;
    double max_error = 0.0;
    int bases = 0;
    int effective = 0;
    std::size_t active = 0;
    std::size_t training_points = 0;
    int layer = 0;
    bool l1_active = false;
    int added = 0;
    int pruned = 0;

    std::string to_log_line() const
    {
        std::ostringstream os;
        os.precision(10);
        os << "epoch=" << epoch << " l2=" << l2 << " l1=" << l1 << " alpha=" << alpha << " lr=" << lr
           << " max_error=" << max_error << " bases=" << bases << " effective=" << effective << " active=" << active
           << " points=" << training_points << " layer=" << layer << " l1_active=" << (l1_active ? 1 : 0)
           << " added=" << added << " pruned=" << pruned;
        return os.str();
    }
};

using ProgressSink = std::function<void(const EpochRecord&)>;

class TrainingAborted : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct FitResult
{
    ErbfModel model;
    int start_layer = 0;
    int final_layer = 0;
    double final_max_error = 0.0; // over the active set of the full final training set
    double final_l2 = 0.0;
    std::size_t final_active = 0;
    std::size_t training_points = 0;
    std::vector<double> loss_trace;
    std::vector<int> count_trace;
};

namespace detail {

struct FullEvaluation
{
    std::vector<double> preds;
    ActiveSet active;
};

inline FullEvaluation evaluate_training_set(const SampleSet& set, const ErbfModel& model, double epsilon)
{
    FullEvaluation ev;
    const auto screen = build_screen_index(set.points, model, epsilon);
    ev.preds = model_eval(set.points, model, &screen).values;
    return ev;
}

} // namespace detail

/// Full sparse optimisation: inscribed-sphere initialisation on the starting
/// layers, mini-batch Adam over the filtered loss, L1 activation with dynamic
/// weighting, pruning, extreme-error basis addition, coarse-to-fine layer
/// advancement, and a final pure-L2 phase under cosine annealing.
inline FitResult fit(const OctreeGrid& octree, std::span<const Vec3> surface_points, const TrainConfig& cfg,
                     const ProgressSink& sink = {})
{
    cfg.validate();
    if (octree.layers.empty())
        throw std::invalid_argument("fit: octree has no layers");
    if (surface_points.empty())
        throw std::invalid_argument("fit: no surface samples");

    std::vector<double> all_sdf;
    for (const auto& layer : octree.layers) {
        if (layer.sdf.size() != layer.points.size())
            throw std::invalid_argument("fit: octree SDF values are not populated");
        all_sdf.insert(all_sdf.end(), layer.sdf.begin(), layer.sdf.end());
    }
    const auto norm = normalize_sdf(all_sdf);
    const double nm = norm.norm_m, nh = norm.norm_h;

    OptimState state;
    state.layer_cap = std::min(cfg.l_max, octree.layer_count());
    const int start = cfg.l_start > 0 ? std::min(cfg.l_start, state.layer_cap)
                                      : auto_start_layer(octree, nm, nh, state.layer_cap);

    SampleSet train;
    for (const auto& p : surface_points)
        train.push(p, 1.0, kSurfaceLayer);
    for (int l = 1; l <= start; ++l) {
        state.layer = l - 1;
        advance_layer(state, octree, train, nm, nh);
    }

    PointList interior;
    std::vector<double> interior_labels;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train.layer[i] != kSurfaceLayer && train.labels[i] > 1.0 && train.labels[i] < 2.0) {
            interior.push_back(train.points[i]);
            interior_labels.push_back(train.labels[i]);
        }
    if (interior.empty())
        throw std::invalid_argument("fit: no interior grid points in the starting layers");

    const KdTree surface_tree(surface_points);
    ErbfModel model =
        initial_model(interior, interior_labels, surface_points, cfg.gamma, nm, nh, cfg.inscribed_radius_convention);
    ModelMoments moments(model.size());

    FitResult result;
    result.start_layer = start;

    SplitMix64 rng(cfg.seed);
    std::vector<std::uint32_t> order;
    double lr = cfg.lr;
    const int final_span = std::max(1, cfg.max_epochs - cfg.l1_cutoff_epoch);

    auto dump = [&](const std::string& why) {
        std::ostringstream os;
        os << "training aborted: " << why << " (epoch=" << state.epoch << " bases=" << model.size()
           << " layer=" << state.layer << " lr=" << lr << " l1_active=" << state.l1_active << ")";
        return os.str();
    };

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        state.epoch = epoch;
        if (state.add_point_pending && state.layer < state.layer_cap)
            advance_layer(state, octree, train, nm, nh);

        if (state.final_phase) {
            const double phase = double(epoch - cfg.l1_cutoff_epoch - 1) / double(final_span);
            lr = cfg.lr_final_min +
                 0.5 * (cfg.lr_final - cfg.lr_final_min) * (1.0 + std::cos(std::numbers::pi * phase));
        }

        order.resize(train.size());
        std::iota(order.begin(), order.end(), 0u);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        PointList batch_points;
        std::vector<double> batch_labels;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            batch_points.clear();
            batch_labels.clear();
            for (std::size_t k = begin; k < end; ++k) {
                batch_points.push_back(train.points[order[k]]);
                batch_labels.push_back(train.labels[order[k]]);
            }

            const auto frames = make_frames(model);
            const auto screen = build_screen_index(batch_points, model, cfg.epsilon);
            const auto features = compute_features(batch_points, frames, screen);
            const auto preds = predict_from_features(batch_points.size(), frames, screen, features);
            const auto active = select_active(batch_labels, preds, cfg.tau1, cfg.tau2);

            const double l2 = loss_l2(preds, batch_labels, active);
            if (!std::isfinite(l2))
                throw TrainingAborted(dump("non-finite L2 loss"));
            const double batch_max = max_abs_residual(preds, batch_labels, active);
            rec.l2 += l2;
            rec.max_error = std::max(rec.max_error, batch_max);
            rec.active += active.size();
            if (active.empty())
                continue;

            std::vector<double> e(batch_points.size(), 0.0);
            std::vector<char> mask(batch_points.size(), 0);
            for (auto i : active.indices) {
                e[i] = preds[i] - batch_labels[i];
                mask[i] = 1;
            }
            const auto grads = backward(batch_points, model, frames, screen, features, e, mask);

            LossWeights lw;
            if (state.l1_active && batch_max < cfg.tau_m)
                lw = dynamic_weights(grads.d_weight, grads.d_weight_l1);
            rec.alpha = lw.alpha;
            try {
                apply_gradients(model, grads, lw, moments, lr);
            } catch (const std::runtime_error& err) {
                throw TrainingAborted(dump(err.what()));
            }
        }

        if (!state.final_phase && state.l1_active && epoch % cfg.k_l2 == 0 && epoch < cfg.l1_cutoff_epoch) {
            const auto keep = prune_mask(model, cfg.tau_d);
            try {
                model = prune_basis(model, cfg.tau_d);
            } catch (const std::runtime_error& err) {
                throw TrainingAborted(dump(err.what()));
            }
            moments.compact(keep);
            rec.pruned = static_cast<int>(std::count(keep.begin(), keep.end(), 0));
        }

        const int effective = effective_basis_count(model, cfg.tau_d);
        state.loss_history.push_back(rec.l2);
        if (state.loss_history.size() > static_cast<std::size_t>(cfg.k_l2))
            state.loss_history.pop_front();
        state.count_history.push_back(effective);
        if (state.count_history.size() > static_cast<std::size_t>(cfg.k_l1))
            state.count_history.pop_front();

        const bool in_window = epoch >= cfg.layer_window_begin && epoch <= cfg.layer_window_end;
        const bool layers_remain = state.layer < state.layer_cap;
        if (!state.final_phase) {
            const std::vector<double> losses(state.loss_history.begin(), state.loss_history.end());
            const std::vector<int> counts(state.count_history.begin(), state.count_history.end());
            const bool activate = cfg.l1_activation == L1Activation::loss_only
                                      ? l2_stable(losses, cfg)
                                      : l1_activation_check(losses, rec.max_error, cfg);
            if (!state.l1_active && activate) {
                state.l1_active = true;
                if (in_window && layers_remain)
                    state.add_point_pending = true;
            }
            if (state.l1_active && basis_stability_check(counts, cfg)) {
                const auto ev = detail::evaluate_training_set(train, model, cfg.epsilon);
                const auto active = select_active(train.labels, ev.preds, cfg.tau1, cfg.tau2);
                const auto errs = residuals(ev.preds, train.labels, active);
                PointList pts;
                pts.reserve(active.size());
                for (auto i : active.indices)
                    pts.push_back(train.points[i]);
                const double spacing = octree.spacing(state.layer);
                const AddBasisParams ap{cfg.tau_m, cfg.epsilon, cfg.add_radius_factor * spacing,
                                        cfg.add_min_spread * spacing};
                const auto added = add_basis(errs, pts, surface_tree, ap);
                model.bases.insert(model.bases.end(), added.begin(), added.end());
                moments.append(added.size());
                rec.added = static_cast<int>(added.size());
                state.l1_active = false;
            }
        }
        if (in_window && layers_remain && (epoch - cfg.layer_window_begin) % cfg.layer_force_interval == 0)
            state.add_point_pending = true;
        if (epoch == cfg.l1_cutoff_epoch) {
            state.final_phase = true;
            state.l1_active = false;
        }

        rec.l1 = loss_l1(model);
        rec.bases = static_cast<int>(model.size());
        rec.effective = effective_basis_count(model, cfg.tau_d);
        rec.layer = state.layer;
        rec.training_points = train.size();
        rec.l1_active = state.l1_active;
        result.loss_trace.push_back(rec.l2);
        result.count_trace.push_back(rec.effective);
        if (sink)
            sink(rec);
    }

    const auto ev = detail::evaluate_training_set(train, model, cfg.epsilon);
    const auto active = select_active(train.labels, ev.preds, cfg.tau1, cfg.tau2);
    result.final_max_error = max_abs_residual(ev.preds, train.labels, active);
    result.final_l2 = loss_l2(ev.preds, train.labels, active);
    result.final_active = active.size();
    result.final_layer = state.layer;
    result.training_points = train.size();
    result.model = std::move(model);
    return result;
}

} // namespace serbf

#endif // SERBF_OPTIM_HPP
