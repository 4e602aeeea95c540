// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "serbf/serbf.hpp"
#include "test_util.hpp"

using namespace serbf;
namespace fs = std::filesystem;

namespace {

// Tolerances
constexpr double kGradRel = 1e-5;
constexpr double kGradAbs = 1e-8;
constexpr double kGradSeconds = 30.0;
constexpr double kNormRel = 1e-9;
constexpr double kNormSeconds = 1.0;
constexpr double kScreenEps = 1e-7;
constexpr double kScreenSeconds = 10.0;
constexpr double kAlphaClosedForm = 1e-12;
constexpr double kSphereCd = 5e-3;
constexpr double kSphereCs = 0.99;
constexpr int kSphereEffective = 100;
constexpr double kSphereFitSeconds = 600.0;
constexpr double kCubeMaxError = 0.02;
constexpr double kMetricTol = 1e-12;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

int run_cli(const std::string& args, const fs::path& out_file = {})
{
    std::string cmd = std::string(SERBF_CLI_PATH) + " " + args;
    cmd += out_file.empty() ? " >/dev/null" : " >" + out_file.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// key=value pairs from the last line of `text` that contains `marker`.
std::map<std::string, std::string> fields(const std::string& text, const std::string& marker = "")
{
    std::istringstream in(text);
    std::string line, chosen;
    std::map<std::string, std::string> out;
    if (marker.empty()) {
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok)
                if (auto eq = tok.find('='); eq != std::string::npos)
                    out[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        return out;
    }
    while (std::getline(in, line))
        if (line.find(marker) != std::string::npos)
            chosen = line;
    std::istringstream ls(chosen);
    std::string tok;
    while (ls >> tok)
        if (auto eq = tok.find('='); eq != std::string::npos)
            out[tok.substr(0, eq)] = tok.substr(eq + 1);
    return out;
}

double num(const std::map<std::string, std::string>& f, const std::string& key)
{
    auto it = f.find(key);
    return it == f.end() ? std::nan("") : std::stod(it->second);
}

// ---------------------------------------------------------------------------

Outcome gradient_suite()
{
    const auto t0 = Clock::now();
    SplitMix64 rng(2024);
    double worst = 0.0;
    std::size_t coords = 0;
    for (int cfg = 0; cfg < 100; ++cfg) {
        const std::size_t m = 1 + rng.below(8);
        const std::size_t n = 1 + rng.below(50);
        const auto model = testing_util::random_model(rng, m);
        const auto pts = testing_util::random_points(rng, n, -1.0, 1.0);
        std::vector<double> labels(n);
        for (auto& t : labels)
            t = 2.0 * rng.uniform();
        ActiveSet active;
        for (std::uint32_t i = 0; i < n; ++i)
            if (rng.uniform() < 0.8 || (i + 1 == n && active.empty()))
                active.indices.push_back(i);

        const auto g = grad_all(pts, labels, model, active);
        auto loss = [&](const ErbfModel& mm) { return loss_l2(model_eval(pts, mm).values, labels, active); };
        for (std::size_t j = 0; j < m; ++j)
            for (int p = 0; p < 10; ++p) {
                auto slot = [&](ErbfModel& mm) -> double& {
                    auto& b = mm.bases[j];
                    if (p < 3)
                        return b.center[p];
                    if (p < 6)
                        return b.axes[p - 3];
                    if (p < 9)
                        return b.angles[p - 6];
                    return b.weight;
                };
                const double analytic = p < 3   ? g.d_center[j][p]
                                        : p < 6 ? g.d_axes[j][p - 3]
                                        : p < 9 ? g.d_angles[j][p - 6]
                                                : g.d_weight[j];
                const double h = 1e-4;
                auto shifted = [&](double s) {
                    ErbfModel mm = model;
                    slot(mm) += s;
                    return loss(mm);
                };
                const double fd =
                    (8.0 * (shifted(h) - shifted(-h)) - (shifted(2 * h) - shifted(-2 * h))) / (12.0 * h);
                const double tol = std::max(kGradRel * std::abs(analytic), kGradAbs);
                worst = std::max(worst, std::abs(fd - analytic) / tol);
                ++coords;
            }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1.0 && secs < kGradSeconds, "coords=" + std::to_string(coords) +
                                                     " worst_err_over_tol=" + fmt(worst) + " seconds=" + fmt(secs)};
}

Outcome normalization_round_trip()
{
    const auto t0 = Clock::now();
    SplitMix64 rng(7);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double m = -(0.05 + 2.0 * rng.uniform());
        const double h = normalization_h(m);
        const double s = m + (-4.0 * m) * rng.uniform();
        const double back = denormalize_sdf(normalize_sdf_value(s, m, h), m, h);
        worst = std::max(worst, std::abs(back - s) / std::abs(s));
    }
    const double secs = seconds_since(t0);
    return {worst < kNormRel && secs < kNormSeconds, "worst_rel=" + fmt(worst) + " seconds=" + fmt(secs)};
}

Outcome screening_equivalence()
{
    const auto t0 = Clock::now();
    SplitMix64 rng(99);
    double worst_ratio = 0.0;
    std::size_t bad_entries = 0;
    for (int cfg = 0; cfg < 50; ++cfg) {
        const auto model = testing_util::random_model(rng, 1 + rng.below(20), 0.5, 8.0);
        const auto pts = testing_util::random_points(rng, 2000, -1.5, 1.5);
        const auto screen = build_screen_index(pts, model, kScreenEps);
        const auto dense = model_eval(pts, model).values;
        const auto sparse = model_eval(pts, model, &screen).values;
        double max_w2 = 0.0;
        for (const auto& b : model.bases)
            max_w2 = std::max(max_w2, b.weight * b.weight);
        const double bound = double(model.size()) * max_w2 * kScreenEps;
        for (std::size_t i = 0; i < pts.size(); ++i)
            worst_ratio = std::max(worst_ratio, std::abs(dense[i] - sparse[i]) / bound);

        const auto frames = make_frames(model);
        const auto feats = compute_features(pts, frames, screen);
        for (std::size_t j = 0; j < model.size(); ++j) {
            std::vector<char> listed(pts.size(), 0);
            for (std::size_t k = 0; k < screen.neighbors[j].size(); ++k) {
                listed[screen.neighbors[j][k]] = 1;
                const double v = feats.values[j][k];
                if (v != 0.0 && v < kScreenEps)
                    ++bad_entries;
            }
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (!listed[i] && frames[j].response(pts[i]) >= kScreenEps)
                    ++bad_entries;
        }
    }
    const double secs = seconds_since(t0);
    return {worst_ratio <= 1.0 && bad_entries == 0 && secs < kScreenSeconds,
            "worst_diff_over_bound=" + fmt(worst_ratio) + " sub_eps_nonzero=" + std::to_string(bad_entries) +
                " seconds=" + fmt(secs)};
}

Outcome dynamic_weight_properties()
{
    SplitMix64 rng(5);
    std::size_t violations = 0;
    double worst_closed = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const std::size_t m = 1 + rng.below(20);
        std::vector<double> g2(m), g1(m);
        for (std::size_t j = 0; j < m; ++j) {
            g2[j] = 4.0 * (rng.uniform() - 0.5);
            g1[j] = 2.0 * (rng.uniform() - 0.5);
        }
        const auto w = dynamic_weights(g2, g1);
        if (!(w.alpha >= 0.0 && w.alpha <= 1.0) || w.beta != 1.0 - w.alpha)
            ++violations;

        const std::vector<double> zero(m, 0.0);
        worst_closed = std::max(worst_closed, std::abs(dynamic_weights(zero, g1).alpha - 1.0));
        std::vector<double> neg(m);
        for (std::size_t j = 0; j < m; ++j)
            neg[j] = -g1[j];
        worst_closed = std::max(worst_closed, std::abs(dynamic_weights(neg, g1).alpha - 0.5));
    }
    return {violations == 0 && worst_closed <= kAlphaClosedForm,
            "pairs=10000 violations=" + std::to_string(violations) + " worst_closed_form=" + fmt(worst_closed)};
}

Outcome inscribed_coverage()
{
    SplitMix64 rng(11);
    const auto sphere = AnalyticShape::sphere(1.0);
    PointList surface, normals;
    sphere.sample(3000, 3, surface, normals);
    std::size_t uncovered = 0, sets = 0, over_count = 0, not_input = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.below(500);
        PointList pts;
        while (pts.size() < n) {
            const Vec3 p = testing_util::random_vec(rng, -0.9, 0.9);
            if (p.norm() < 0.9 && p.norm() > 1e-3)
                pts.push_back(p);
        }
        std::vector<double> labels;
        for (const auto& p : pts)
            labels.push_back(normalize_sdf_value(sphere.sdf(p), -1.0, normalization_h(-1.0)));
        for (auto conv : {InscribedRadiusConvention::as_printed, InscribedRadiusConvention::squared}) {
            ++sets;
            const auto s = inscribed_sphere_init(pts, labels, surface, conv);
            if (s.centers.size() > pts.size())
                ++over_count;
            for (const auto& c : s.centers)
                if (std::find(pts.begin(), pts.end(), c) == pts.end())
                    ++not_input;
            for (const auto& p : pts) {
                bool covered = false;
                for (std::size_t j = 0; j < s.centers.size() && !covered; ++j) {
                    const double limit =
                        conv == InscribedRadiusConvention::squared ? s.radii[j] * s.radii[j] : s.radii[j];
                    covered = (p - s.centers[j]).squaredNorm() <= limit;
                }
                uncovered += !covered;
            }
        }
    }
    return {uncovered == 0 && over_count == 0 && not_input == 0,
            "sets=" + std::to_string(sets) + " uncovered=" + std::to_string(uncovered) +
                " count_violations=" + std::to_string(over_count) + " foreign_centers=" + std::to_string(not_input)};
}

Outcome add_basis_locality()
{
    SplitMix64 rng(13);
    std::size_t added_total = 0, not_extreme = 0, wrong_sign = 0, missed = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + rng.below(500);
        const auto pts = testing_util::random_points(rng, n, -1, 1);
        std::vector<double> errs(n);
        for (auto& e : errs)
            e = 0.1 * (rng.uniform() - 0.5);
        const auto surface = testing_util::random_points(rng, 200, -1.2, 1.2);
        AddBasisParams p;
        p.radius = 0.05 + 0.3 * rng.uniform();
        const auto added = add_basis(errs, pts, KdTree(surface), p);
        added_total += added.size();
        for (const auto& b : added) {
            const auto i = std::size_t(std::find(pts.begin(), pts.end(), b.center) - pts.begin());
            for (std::size_t k = 0; k < n; ++k)
                if ((pts[k] - pts[i]).norm() <= p.radius && std::abs(errs[k]) > std::abs(errs[i]))
                    ++not_extreme;
            if (!(b.weight * errs[i] < 0.0))
                ++wrong_sign;
        }
        std::size_t brute = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(std::abs(errs[i]) > 0.5 * p.tau_m))
                continue;
            bool extreme = true;
            for (std::size_t k = 0; k < n && extreme; ++k)
                if ((pts[k] - pts[i]).norm() <= p.radius && std::abs(errs[k]) > std::abs(errs[i]))
                    extreme = false;
            brute += extreme;
        }
        missed += brute != added.size();
    }
    return {not_extreme == 0 && wrong_sign == 0 && missed == 0 && added_total > 0,
            "added=" + std::to_string(added_total) + " not_extreme=" + std::to_string(not_extreme) +
                " wrong_sign=" + std::to_string(wrong_sign) + " count_mismatch=" + std::to_string(missed)};
}

Outcome pruning_invariant()
{
    SplitMix64 rng(17);
    std::size_t violations = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        auto model = testing_util::random_model(rng, 1 + rng.below(50));
        const double tau_d = 1e-3 + 0.1 * rng.uniform();
        for (auto& b : model.bases)
            if (rng.uniform() < 0.5)
                b.weight = 2.0 * tau_d * (rng.uniform() - 0.5);
        model.bases[rng.below(model.size())].weight = tau_d;
        const auto pruned = prune_basis(model, tau_d);
        for (const auto& b : pruned.bases)
            violations += !(std::abs(b.weight) >= tau_d);
        violations += int(pruned.size()) != effective_basis_count(model, tau_d);
    }
    return {violations == 0, "models=2000 violations=" + std::to_string(violations)};
}

Outcome metric_oracles()
{
    SplitMix64 rng(23);
    double worst = 0.0;
    std::size_t order_violations = 0;
    for (int trial = 0; trial < 60; ++trial) {
        SurfaceSamples a, b;
        const std::size_t na = 1 + rng.below(500), nb = 1 + rng.below(500);
        for (std::size_t i = 0; i < na; ++i) {
            a.points.push_back(testing_util::random_vec(rng, -1, 1));
            a.normals.push_back(testing_util::random_vec(rng, -1, 1).normalized());
        }
        for (std::size_t i = 0; i < nb; ++i) {
            b.points.push_back(testing_util::random_vec(rng, -1, 1));
            b.normals.push_back(testing_util::random_vec(rng, -1, 1).normalized());
        }
        auto brute = [](const SurfaceSamples& from, const SurfaceSamples& to, double& max_d, double& mean_d,
                        double& mean_cos) {
            max_d = mean_d = mean_cos = 0.0;
            for (std::size_t i = 0; i < from.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < to.size(); ++k)
                    if ((to.points[k] - from.points[i]).squaredNorm() <
                        (to.points[best] - from.points[i]).squaredNorm())
                        best = k;
                const double d = (to.points[best] - from.points[i]).norm();
                max_d = std::max(max_d, d);
                mean_d += d;
                mean_cos += std::abs(from.normals[i].dot(to.normals[best]));
            }
            mean_d /= double(from.size());
            mean_cos /= double(from.size());
        };
        double mab, dab, cab, mba, dba, cba;
        brute(a, b, mab, dab, cab);
        brute(b, a, mba, dba, cba);
        const double hd = std::max(mab, mba), cd = 0.5 * dab + 0.5 * dba, cs = 0.5 * cab + 0.5 * cba;
        const auto r = compare_samples(a, b);
        for (double diff : {r.hd - hd, r.cd - cd, r.cs - cs, hausdorff(a.points, b.points) - hd,
                            chamfer(a.points, b.points) - cd, cosine_similarity(a, b) - cs})
            worst = std::max(worst, std::abs(diff));
        order_violations += !(r.hd >= r.cd);
    }
    return {worst <= kMetricTol && order_violations == 0,
            "pairs=60 worst_abs_diff=" + fmt(worst) + " hd_below_cd=" + std::to_string(order_violations)};
}

// ---------------------------------------------------------------------------
// End-to-end runs through the command-line tool

struct EndToEnd
{
    fs::path dir;
    bool ok = false;
    std::string error;
    double fit_seconds = 0.0;
    std::map<std::string, std::string> done;   // event=done line of the fit log
    std::map<std::string, std::string> report; // eval report
    std::string model_a, model_b;
};

EndToEnd sphere_run(const fs::path& root)
{
    EndToEnd r;
    r.dir = root / "sphere";
    fs::create_directories(r.dir);
    const auto grid = (r.dir / "sphere.grid").string();
    if (run_cli("gen --shape sphere:1 --depth 6 --n-surface 40000 --seed 1 -o " + grid) != 0) {
        r.error = "gen failed";
        return r;
    }
    const auto t0 = Clock::now();
    if (run_cli("--threads 0 fit --grid " + grid + " -o " + (r.dir / "a.model").string() + " --log " +
                (r.dir / "a.log").string()) != 0) {
        r.error = "fit failed";
        return r;
    }
    r.fit_seconds = seconds_since(t0);
    if (run_cli("--threads 1 fit --grid " + grid + " -o " + (r.dir / "b.model").string()) != 0) {
        r.error = "second fit failed";
        return r;
    }
    if (run_cli("eval --model " + (r.dir / "a.model").string() + " --reference sphere:1 --grid " + grid +
                " --report " + (r.dir / "report.txt").string()) != 0) {
        r.error = "eval failed";
        return r;
    }
    r.done = fields(slurp(r.dir / "a.log"), "event=done");
    r.report = fields(slurp(r.dir / "report.txt"));
    r.model_a = slurp(r.dir / "a.model");
    r.model_b = slurp(r.dir / "b.model");
    r.ok = true;
    return r;
}

EndToEnd cube_run(const fs::path& root)
{
    EndToEnd r;
    r.dir = root / "cube";
    fs::create_directories(r.dir);
    const auto mesh = r.dir / "cube.obj";
    write_obj(mesh, make_cube_mesh());
    const auto grid = (r.dir / "cube.grid").string();
    if (run_cli("gen --mesh " + mesh.string() + " --depth 6 --n-surface 40000 --seed 1 -o " + grid) != 0) {
        r.error = "gen failed";
        return r;
    }
    const auto t0 = Clock::now();
    if (run_cli("--threads 0 fit --grid " + grid + " -o " + (r.dir / "a.model").string() + " --log " +
                (r.dir / "a.log").string()) != 0) {
        r.error = "fit failed";
        return r;
    }
    r.fit_seconds = seconds_since(t0);
    if (run_cli("eval --model " + (r.dir / "a.model").string() + " --reference " + mesh.string() + " --grid " +
                grid + " --report " + (r.dir / "report.txt").string()) != 0) {
        r.error = "eval failed";
        return r;
    }
    r.done = fields(slurp(r.dir / "a.log"), "event=done");
    r.report = fields(slurp(r.dir / "report.txt"));
    r.ok = true;
    return r;
}

Outcome sphere_end_to_end(const EndToEnd& r)
{
    if (!r.ok)
        return {false, r.error};
    const double cd = num(r.report, "cd_normalized");
    const double cs = num(r.report, "cs");
    const double eff = num(r.report, "effective_basis_count");
    return {r.fit_seconds < kSphereFitSeconds && cd < kSphereCd && cs > kSphereCs && eff <= kSphereEffective,
            "fit_seconds=" + fmt(r.fit_seconds) + " cd_normalized=" + fmt(cd) + " cs=" + fmt(cs) +
                " effective=" + fmt(eff) + " hd_normalized=" + fmt(num(r.report, "hd_normalized"))};
}

Outcome cube_end_to_end(const EndToEnd& r)
{
    if (!r.ok)
        return {false, r.error};
    const double max_error = num(r.done, "max_error");
    return {max_error < kCubeMaxError,
            "max_active_error=" + fmt(max_error) + " bases=" + fmt(num(r.done, "bases")) + " fit_seconds=" +
                fmt(r.fit_seconds) + " cd_normalized=" + fmt(num(r.report, "cd_normalized"))};
}

Outcome parameter_accounting(const std::vector<const EndToEnd*>& runs)
{
    std::size_t reports = 0, violations = 0;
    for (const auto* r : runs) {
        if (!r->ok)
            continue;
        ++reports;
        violations += num(r->report, "param_count") != 10.0 * num(r->report, "basis_count");
    }
    return {reports == runs.size() && violations == 0,
            "reports=" + std::to_string(reports) + " violations=" + std::to_string(violations)};
}

Outcome determinism(const EndToEnd& r)
{
    if (!r.ok)
        return {false, r.error};
    return {!r.model_a.empty() && r.model_a == r.model_b, "bytes=" + std::to_string(r.model_a.size())};
}

} // namespace

int main()
{
    int failures = 0;
    auto report = [&](const std::string& name, const Outcome& o) {
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ' ' << o.detail << std::endl;
        failures += !o.pass;
    };

    report("gradient_suite", gradient_suite());
    report("normalization_round_trip", normalization_round_trip());
    report("screening_equivalence", screening_equivalence());
    report("dynamic_weight_properties", dynamic_weight_properties());
    report("inscribed_sphere_coverage", inscribed_coverage());
    report("add_basis_locality", add_basis_locality());
    report("pruning_invariant", pruning_invariant());
    report("metric_oracles", metric_oracles());

    const auto root = testing_util::scratch_dir("acceptance");
    const auto sphere = sphere_run(root);
    report("sphere_end_to_end", sphere_end_to_end(sphere));
    const auto cube = cube_run(root);
    report("unit_cube_end_to_end", cube_end_to_end(cube));
    report("parameter_accounting", parameter_accounting({&sphere, &cube}));
    report("fit_determinism", determinism(sphere));

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
