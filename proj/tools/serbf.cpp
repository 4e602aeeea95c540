#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "serbf/serbf.hpp"

namespace {

using json = nlohmann::json;
using namespace serbf;

constexpr int kExitUsage = 1;
constexpr int kExitMissingFile = 2;
constexpr int kExitMalformed = 3;
constexpr int kExitAborted = 4;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::string dashed(std::string s)
{
    for (auto& c : s)
        if (c == '_')
            c = '-';
    return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// TrainConfig flags; JSON config values apply where the flag was not given.
class ConfigBinder
{
public:
    ConfigBinder(CLI::App* app, TrainConfig& cfg) : app_(app)
    {
        bind("batch_size", cfg.batch_size, "mini-batch size");
        bind("max_epochs", cfg.max_epochs, "total epochs");
        bind("l1_cutoff_epoch", cfg.l1_cutoff_epoch, "epoch after which only L2 is optimized");
        bind("lr", cfg.lr, "Adam learning rate");
        bind("lr_final", cfg.lr_final, "learning rate at the start of the final phase");
        bind("lr_final_min", cfg.lr_final_min, "learning rate at the end of the final phase");
        bind("l_max", cfg.l_max, "deepest octree layer used for training");
        bind("l_start", cfg.l_start, "starting layer (0 = automatic)");
        bind("tau1", cfg.tau1, "lower band threshold of the active set");
        bind("tau2", cfg.tau2, "upper band threshold of the active set");
        bind("tau_m", cfg.tau_m, "max-error threshold");
        bind("tau_d", cfg.tau_d, "pruning threshold on |w|");
        bind("tau_l1", cfg.tau_l1, "basis-count stability threshold");
        bind("tau_l2", cfg.tau_l2, "loss stability threshold");
        bind("k_l1", cfg.k_l1, "basis-count history length");
        bind("k_l2", cfg.k_l2, "loss history length");
        bind("gamma", cfg.gamma, "kernel value at half the center spacing");
        bind("epsilon", cfg.epsilon, "screening threshold");
        bind("layer_window_begin", cfg.layer_window_begin, "first epoch that may add a layer");
        bind("layer_window_end", cfg.layer_window_end, "last epoch that may add a layer");
        bind("layer_force_interval", cfg.layer_force_interval, "epochs between forced layer additions");
        bind("add_radius_factor", cfg.add_radius_factor, "local-maximum radius for new bases, in grid spacings");
        bind("add_min_spread", cfg.add_min_spread, "minimum surface distance for new bases, in grid spacings");
        bind("seed", cfg.seed, "shuffle seed");

        bind_enum("inscribed_radius", cfg.inscribed_radius_convention,
                  {{"as_printed", InscribedRadiusConvention::as_printed},
                   {"squared", InscribedRadiusConvention::squared}},
                  "sphere removal test: as_printed (d^2 <= r) or squared (d^2 <= r^2)");
        bind_enum("l1_activation", cfg.l1_activation,
                  {{"loss_and_error", L1Activation::loss_and_error}, {"loss_only", L1Activation::loss_only}},
                  "L1 switch-on rule: loss_and_error (loss stable and max error < tau_m) or loss_only");
    }

    void apply(const json& j) const
    {
        if (!j.is_object())
            throw std::invalid_argument("config: top level must be an object");
        for (const auto& [key, value] : j.items())
            if (!known_.count(key))
                throw std::invalid_argument("config: unknown key '" + key + "'");
        for (const auto& f : appliers_)
            f(j);
    }

private:
    template <class T>
    void bind(const std::string& name, T& ref, const std::string& help)
    {
        auto* opt = app_->add_option("--" + dashed(name), ref, help)->capture_default_str();
        known_.insert(name);
        appliers_.push_back([opt, &ref, name](const json& j) {
            if (j.contains(name) && opt->count() == 0)
                ref = j.at(name).get<T>();
        });
    }

    template <class E>
    void bind_enum(const std::string& name, E& ref, std::map<std::string, E> values, const std::string& help)
    {
        auto* opt = app_->add_option("--" + dashed(name), ref, help)
                        ->transform(CLI::CheckedTransformer(values, CLI::ignore_case));
        known_.insert(name);
        appliers_.push_back([opt, &ref, name, values](const json& j) {
            if (!j.contains(name) || opt->count() > 0)
                return;
            const auto it = values.find(j.at(name).get<std::string>());
            if (it == values.end())
                throw std::invalid_argument("config: invalid value for " + name);
            ref = it->second;
        });
    }

    CLI::App* app_;
    std::set<std::string> known_;
    std::vector<std::function<void(const json&)>> appliers_;
};

json load_json(const std::string& path)
{
    if (!std::filesystem::exists(path))
        throw FileError("config file not found: " + path);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path, 0, e.what());
    }
}

RootCube root_from_grid(const std::string& grid_path) { return training_data_from_grid(read_grid(grid_path)).octree.root; }

// ---------------------------------------------------------------------------

struct GenArgs
{
    std::string shape;
    std::string mesh;
    int depth = 6;
    std::size_t n_surface = 40000;
    std::uint64_t seed = 0;
    std::string out;
    std::string surface_out;
};

int run_gen(const GenArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    PointList surface;
    std::function<std::vector<double>(std::span<const Vec3>)> oracle;
    std::optional<MeshDistance> dist;
    AnalyticShape shape;
    if (!a.mesh.empty()) {
        auto mesh = read_mesh(a.mesh);
        if (mesh.empty())
            throw ParseError(a.mesh, 0, "mesh has no triangles");
        surface = sample_surface(mesh, a.n_surface, a.seed).points;
        dist.emplace(std::move(mesh));
        if (!dist->watertight())
            warn("mesh is not watertight; signs come from angle-weighted pseudonormals");
        oracle = [&](std::span<const Vec3> pts) { return mesh_sdf(*dist, pts); };
    } else {
        shape = AnalyticShape::parse(a.shape);
        std::vector<Vec3> normals;
        shape.sample(a.n_surface, a.seed, surface, normals);
        oracle = [&](std::span<const Vec3> pts) { return shape.sdf(pts); };
    }

    auto octree = build_octree(surface, a.depth);
    for (auto& layer : octree.layers)
        layer.sdf = oracle(layer.points);
    const auto grid = grid_from_octree(octree, surface);
    write_grid(a.out, grid);
    if (!a.surface_out.empty()) {
        GridSamples s;
        for (const auto& p : surface)
            s.push(p, 0.0, kSurfaceLayer);
        write_grid(a.surface_out, s);
    }
    std::cout << "event=gen grid=" << a.out << " layers=" << octree.layer_count()
              << " grid_points=" << octree.point_count() << " surface_points=" << surface.size()
              << " runtime=" << seconds_since(t0) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs
{
    std::string grid;
    std::string config;
    std::string out;
    std::string log;
};

int run_fit(const FitArgs& a, TrainConfig& cfg, const ConfigBinder& binder)
{
    if (!a.config.empty())
        binder.apply(load_json(a.config));
    cfg.validate();

    const auto t0 = std::chrono::steady_clock::now();
    const auto data = training_data_from_grid(read_grid(a.grid));

    std::ofstream log_file;
    if (!a.log.empty()) {
        log_file.open(a.log);
        if (!log_file)
            throw FileError("cannot write log file: " + a.log);
    }
    auto emit = [&](const std::string& line) {
        if (log_file.is_open())
            log_file << line << '\n' << std::flush;
    };
    {
        std::ostringstream os;
        os << "event=start grid=" << a.grid << " grid_points=" << data.octree.point_count()
           << " surface_points=" << data.surface.size() << " layers=" << data.octree.layer_count()
           << " seed=" << cfg.seed << " threads=" << thread_count();
        emit(os.str());
    }

    FitResult result;
    try {
        result = fit(data.octree, data.surface, cfg, [&](const EpochRecord& r) { emit(r.to_log_line()); });
    } catch (const TrainingAborted& e) {
        emit(std::string("event=abort reason=\"") + e.what() + "\"");
        std::cerr << "error: " << e.what() << '\n';
        return kExitAborted;
    }
    write_model(a.out, result.model);

    std::ostringstream os;
    os.precision(10);
    os << "event=done bases=" << result.model.size()
       << " effective=" << effective_basis_count(result.model, cfg.tau_d)
       << " params=" << result.model.param_count() << " start_layer=" << result.start_layer
       << " final_layer=" << result.final_layer << " max_error=" << result.final_max_error
       << " l2=" << result.final_l2 << " active=" << result.final_active
       << " points=" << result.training_points << " runtime=" << seconds_since(t0);
    emit(os.str());
    std::cout << os.str() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct ExtractArgs
{
    std::string model;
    std::string grid;
    std::string out;
    int resolution = 64;
};

int run_extract(const ExtractArgs& a)
{
    const auto model = read_model(a.model);
    if (model.empty())
        throw ParseError(a.model, 0, "model has no bases");
    const RootCube cube = a.grid.empty() ? model_bounds(model) : root_from_grid(a.grid);
    const auto mesh = extract_model(model, cube, a.resolution);
    if (mesh.empty())
        warn("the model output never reaches 1 on the lattice; writing an empty mesh");
    write_obj(a.out, mesh);
    std::cout << "event=extract vertices=" << mesh.vertices.size() << " triangles=" << mesh.triangles.size()
              << " watertight=" << (mesh.is_watertight() ? 1 : 0) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs
{
    std::string model;
    std::string reference;
    std::string grid;
    std::string report;
    int resolution = 64;
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    double tau_d = 0.01;
};

int run_eval(const EvalArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = read_model(a.model);
    if (model.empty())
        throw ParseError(a.model, 0, "model has no bases");
    const bool analytic = AnalyticShape::looks_like_shape(a.reference) && !std::filesystem::exists(a.reference);
    std::optional<RootCube> grid_cube;
    if (!a.grid.empty())
        grid_cube = root_from_grid(a.grid);

    TriangleMesh reference;
    if (analytic) {
        const auto shape = AnalyticShape::parse(a.reference);
        reference = extract_analytic(shape, grid_cube.value_or(shape_cube(shape)), a.resolution);
    } else {
        reference = read_mesh(a.reference);
    }
    const auto extracted = extract_model(model, grid_cube.value_or(model_bounds(model)), a.resolution);
    if (extracted.empty())
        throw std::runtime_error("the model output never reaches 1 on the lattice; nothing to compare");
    if (reference.empty())
        throw std::runtime_error("reference surface is empty");

    const auto test = sample_surface(extracted, a.samples, a.seed);
    const auto ref = sample_surface(reference, a.samples, a.seed);
    auto report = compare_samples(test, ref);
    report.basis_count = model.size();
    report.effective_basis_count = static_cast<std::size_t>(effective_basis_count(model, a.tau_d));
    report.param_count = model.param_count();
    report.runtime = seconds_since(t0);

    const std::string text = report.to_text();
    if (!a.report.empty()) {
        std::ofstream out(a.report);
        if (!out)
            throw FileError("cannot write report: " + a.report);
        out << text;
    }
    std::cout << text;
    return 0;
}

void configure_threads(const std::optional<unsigned>& flag)
{
    unsigned n = 0;
    if (flag) {
        n = *flag;
    } else if (const char* env = std::getenv("SERBF_THREADS")) {
        try {
            n = static_cast<unsigned>(std::stoul(env));
        } catch (const std::exception&) {
            warn(std::string("ignoring SERBF_THREADS='") + env + "'");
        }
    }
    set_thread_count(n);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse ellipsoidal RBF fitting of signed distance fields"};
    app.require_subcommand(1);
    std::optional<unsigned> threads;
    app.add_option("--threads", threads, "worker threads (0 = all cores; default from SERBF_THREADS)");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "sample an SDF on a layered octree grid");
    auto* src = gen_cmd->add_option_group("source");
    src->add_option("--shape", gen.shape, "analytic shape: sphere:R, box:hx,hy,hz or torus:R,r");
    src->add_option("--mesh", gen.mesh, "OBJ or PLY mesh");
    src->require_option(1);
    gen_cmd->add_option("--depth", gen.depth, "octree depth")->capture_default_str()->check(CLI::Range(1, 20));
    gen_cmd->add_option("--n-surface", gen.n_surface, "surface sample count")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "sampling seed")->capture_default_str();
    gen_cmd->add_option("-o,--out", gen.out, "grid file to write")->required();
    gen_cmd->add_option("--surface-out", gen.surface_out, "optional file with the surface samples only");

    FitArgs fit_args;
    TrainConfig cfg;
    auto* fit_cmd = app.add_subcommand("fit", "fit a sparse RBF network to a grid file");
    fit_cmd->add_option("--grid", fit_args.grid, "grid file from gen")->required();
    fit_cmd->add_option("--config", fit_args.config, "JSON file with training settings (flags take precedence)");
    fit_cmd->add_option("-o,--out", fit_args.out, "model file to write")->required();
    fit_cmd->add_option("--log", fit_args.log, "per-epoch key=value log");
    ConfigBinder binder(fit_cmd, cfg);

    ExtractArgs ex;
    auto* ex_cmd = app.add_subcommand("extract", "marching cubes on the model output at level 1");
    ex_cmd->add_option("--model", ex.model, "model file")->required();
    ex_cmd->add_option("--resolution", ex.resolution, "cells per axis")->capture_default_str()->check(CLI::Range(1, 2048));
    ex_cmd->add_option("--grid", ex.grid, "grid file whose root cube bounds the lattice");
    ex_cmd->add_option("-o,--out", ex.out, "OBJ file to write")->required();

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "compare the model surface with a reference");
    ev_cmd->add_option("--model", ev.model, "model file")->required();
    ev_cmd->add_option("--reference", ev.reference, "analytic shape spec or mesh path")->required();
    ev_cmd->add_option("--grid", ev.grid, "grid file whose root cube bounds the lattices");
    ev_cmd->add_option("--resolution", ev.resolution, "cells per axis")->capture_default_str()->check(CLI::Range(1, 2048));
    ev_cmd->add_option("--samples", ev.samples, "surface samples per side")->capture_default_str();
    ev_cmd->add_option("--seed", ev.seed, "sampling seed")->capture_default_str();
    ev_cmd->add_option("--tau-d", ev.tau_d, "weight threshold for the effective basis count")->capture_default_str();
    ev_cmd->add_option("--report", ev.report, "report file to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        configure_threads(threads);
        if (*gen_cmd)
            return run_gen(gen);
        if (*fit_cmd)
            return run_fit(fit_args, cfg, binder);
        if (*ex_cmd)
            return run_extract(ex);
        if (*ev_cmd)
            return run_eval(ev);
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitMissingFile;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitMalformed;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitMalformed;
    } catch (const json::exception& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kExitMalformed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
