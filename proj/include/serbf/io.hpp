#ifndef SERBF_IO_HPP
#define SERBF_IO_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/error.hpp"
#include "serbf/spatial.hpp"

namespace serbf {

// ---------------------------------------------------------------------------
// Binary model file: "SERBF" 0x01, u32 M, f64 m, f64 h, M x 10 f64, little-endian.

inline constexpr std::array<char, 6> kModelMagic = {'S', 'E', 'R', 'B', 'F', '\x01'};

namespace detail {

template <class T>
void put_le(std::string& out, T value)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw std::runtime_error("model file truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace detail

inline std::string encode_model(const ErbfModel& model)
{
    if (model.size() > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("encode_model: too many bases");
    std::string out(kModelMagic.begin(), kModelMagic.end());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.size()));
    detail::put_le(out, model.norm_m);
    detail::put_le(out, model.norm_h);
    for (const auto& b : model.bases) {
        for (int k = 0; k < 3; ++k)
            detail::put_le(out, b.center[k]);
        for (int k = 0; k < 3; ++k)
            detail::put_le(out, b.axes[k]);
        for (int k = 0; k < 3; ++k)
            detail::put_le(out, b.angles[k]);
        detail::put_le(out, b.weight);
    }
    return out;
}

inline ErbfModel decode_model(const std::string& bytes)
{
    if (bytes.size() < kModelMagic.size() || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
        throw std::runtime_error("not a model file (bad magic or version)");
    std::size_t pos = kModelMagic.size();
    const auto m = detail::get_le<std::uint32_t>(bytes, pos);
    ErbfModel model;
    model.norm_m = detail::get_le<double>(bytes, pos);
    model.norm_h = detail::get_le<double>(bytes, pos);
    const std::size_t expected = pos + static_cast<std::size_t>(m) * 10 * sizeof(double);
    if (bytes.size() != expected)
        throw std::runtime_error("model file size does not match its basis count");
    model.bases.resize(m);
    for (auto& b : model.bases) {
        for (int k = 0; k < 3; ++k)
            b.center[k] = detail::get_le<double>(bytes, pos);
        for (int k = 0; k < 3; ++k)
            b.axes[k] = detail::get_le<double>(bytes, pos);
        for (int k = 0; k < 3; ++k)
            b.angles[k] = detail::get_le<double>(bytes, pos);
        b.weight = detail::get_le<double>(bytes, pos);
    }
    return model;
}

inline void write_model(const std::filesystem::path& path, const ErbfModel& model)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FileError("cannot write model file: " + path.string());
    const auto bytes = encode_model(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw FileError("failed while writing model file: " + path.string());
}

inline ErbfModel read_model(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw FileError("model file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot open model file: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_model(bytes);
    } catch (const std::runtime_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

// ---------------------------------------------------------------------------
// Text grid file: "serbf-grid 1", "N <count>", then "x y z sdf layer" lines.

struct GridSamples
{
    PointList points;
    std::vector<double> sdf;
    std::vector<int> layer;

    std::size_t size() const { return points.size(); }

    void push(const Vec3& p, double s, int l)
    {
        points.push_back(p);
        sdf.push_back(s);
        layer.push_back(l);
    }
};

inline void write_grid(std::ostream& out, const GridSamples& g)
{
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "serbf-grid 1\n" << "N " << g.size() << '\n';
    for (std::size_t i = 0; i < g.size(); ++i)
        out << g.points[i].x() << ' ' << g.points[i].y() << ' ' << g.points[i].z() << ' ' << g.sdf[i] << ' '
            << g.layer[i] << '\n';
}

inline void write_grid(const std::filesystem::path& path, const GridSamples& g)
{
    std::ofstream out(path);
    if (!out)
        throw FileError("cannot write grid file: " + path.string());
    write_grid(out, g);
    if (!out)
        throw FileError("failed while writing grid file: " + path.string());
}

inline GridSamples read_grid(std::istream& in, const std::string& name)
{
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() {
        if (!std::getline(in, line))
            return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        return true;
    };
    if (!next() || line != "serbf-grid 1")
        throw ParseError(name, 1, "expected header 'serbf-grid 1'");
    std::size_t n = 0;
    {
        if (!next())
            throw ParseError(name, 2, "missing 'N <count>' line");
        std::istringstream ls(line);
        std::string tag, extra;
        if (!(ls >> tag >> n) || tag != "N" || (ls >> extra))
            throw ParseError(name, line_no, "expected 'N <count>'");
    }
    GridSamples g;
    g.points.reserve(n);
    g.sdf.reserve(n);
    g.layer.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!next())
            throw ParseError(name, line_no + 1, "expected " + std::to_string(n) + " records, found " + std::to_string(i));
        std::istringstream ls(line);
        Vec3 p;
        double s;
        long long layer;
        std::string extra;
        if (!(ls >> p.x() >> p.y() >> p.z() >> s >> layer) || (ls >> extra))
            throw ParseError(name, line_no, "expected 'x y z sdf layer'");
        if (!p.allFinite() || !std::isfinite(s))
            throw ParseError(name, line_no, "non-finite value");
        if (layer != kSurfaceLayer && (layer < 1 || layer > 64))
            throw ParseError(name, line_no, "layer must be -1 or a positive octree depth");
        g.push(p, s, static_cast<int>(layer));
    }
    while (next())
        if (line.find_first_not_of(" \t") != std::string::npos)
            throw ParseError(name, line_no, "more records than N declares");
    return g;
}

inline GridSamples read_grid(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw FileError("grid file not found: " + path.string());
    std::ifstream in(path);
    if (!in)
        throw FileError("cannot open grid file: " + path.string());
    return read_grid(in, path.string());
}

/// Grid records of an octree (SDF filled) followed by the surface samples.
inline GridSamples grid_from_octree(const OctreeGrid& octree, const PointList& surface)
{
    GridSamples g;
    for (const auto& layer : octree.layers)
        for (std::size_t i = 0; i < layer.points.size(); ++i)
            g.push(layer.points[i], layer.sdf.at(i), layer.index);
    for (const auto& p : surface)
        g.push(p, 0.0, kSurfaceLayer);
    return g;
}

/// Octree layers and surface samples recovered from a grid file. The root cube
/// is the bounding box of layer 1, which holds the eight root corners.
struct TrainingData
{
    OctreeGrid octree;
    PointList surface;
};

inline TrainingData training_data_from_grid(const GridSamples& g)
{
    TrainingData d;
    int depth = 0;
    for (int l : g.layer)
        depth = std::max(depth, l);
    if (depth < 1)
        throw std::invalid_argument("grid file has no grid records");
    d.octree.max_depth = depth;
    d.octree.layers.resize(static_cast<std::size_t>(depth));
    for (int l = 1; l <= depth; ++l)
        d.octree.layers[l - 1].index = l;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.layer[i] == kSurfaceLayer) {
            d.surface.push_back(g.points[i]);
            continue;
        }
        auto& layer = d.octree.layers[g.layer[i] - 1];
        layer.points.push_back(g.points[i]);
        layer.sdf.push_back(g.sdf[i]);
    }
    if (d.surface.empty())
        throw std::invalid_argument("grid file has no surface records (layer -1)");
    const auto& first = d.octree.layers.front().points;
    if (first.empty())
        throw std::invalid_argument("grid file has no layer-1 records");
    Vec3 lo = first.front(), hi = lo;
    for (const auto& p : first) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    d.octree.root = RootCube{lo, (hi - lo).maxCoeff()};
    return d;
}

} // namespace serbf

#endif // SERBF_IO_HPP
