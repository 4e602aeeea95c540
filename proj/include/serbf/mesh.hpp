#ifndef SERBF_MESH_HPP
#define SERBF_MESH_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "serbf/core.hpp"
#include "serbf/error.hpp"

namespace serbf {

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh
{
    PointList vertices;
    std::vector<Triangle> triangles;

    bool empty() const { return triangles.empty(); }

    Vec3 face_cross(std::size_t t) const
    {
        const auto& f = triangles[t];
        return (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
    }

    double area(std::size_t t) const { return 0.5 * face_cross(t).norm(); }

    Vec3 face_normal(std::size_t t) const
    {
        const Vec3 c = face_cross(t);
        const double n = c.norm();
        return n > 0.0 ? Vec3(c / n) : Vec3::Zero();
    }

    /// Area-weighted average of incident face normals, normalized.
    std::vector<Vec3> vertex_normals() const
    {
        std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
        for (std::size_t t = 0; t < triangles.size(); ++t) {
            const Vec3 c = face_cross(t); // |c| = 2 * area
            for (auto v : triangles[t])
                normals[v] += c;
        }
        for (auto& n : normals) {
            const double len = n.norm();
            if (len > 0.0)
                n /= len;
        }
        return normals;
    }

    /// Drops zero-area triangles.
    void remove_degenerate()
    {
        std::vector<Triangle> kept;
        kept.reserve(triangles.size());
        for (std::size_t t = 0; t < triangles.size(); ++t)
            if (face_cross(t).squaredNorm() > 0.0)
                kept.push_back(triangles[t]);
        triangles = std::move(kept);
    }

    /// Every undirected edge is shared by exactly two triangles.
    bool is_watertight() const
    {
        std::unordered_map<std::uint64_t, int> edges;
        for (const auto& f : triangles)
            for (int e = 0; e < 3; ++e) {
                std::uint64_t a = f[e], b = f[(e + 1) % 3];
                if (a > b)
                    std::swap(a, b);
                ++edges[(a << 32) | b];
            }
        if (edges.empty())
            return false;
        for (const auto& [key, count] : edges)
            if (count != 2)
                return false;
        return true;
    }

    void validate() const
    {
        for (const auto& f : triangles)
            for (auto v : f)
                if (v >= vertices.size())
                    throw std::invalid_argument("TriangleMesh: vertex index out of range");
    }
};

// ---------------------------------------------------------------------------
// OBJ (v / f records only)

inline TriangleMesh read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FileError("cannot open mesh file: " + path.string());
    TriangleMesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#')
            continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()) || !p.allFinite())
                throw ParseError(path.string(), line_no, "malformed vertex record");
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ls >> tok) {
                const auto slash = tok.find('/');
                long idx = 0;
                try {
                    idx = std::stol(tok.substr(0, slash));
                } catch (const std::exception&) {
                    throw ParseError(path.string(), line_no, "malformed face index '" + tok + "'");
                }
                if (idx < 0)
                    idx = static_cast<long>(mesh.vertices.size()) + idx + 1;
                if (idx < 1 || static_cast<std::size_t>(idx) > mesh.vertices.size())
                    throw ParseError(path.string(), line_no, "face index out of range");
                poly.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (poly.size() < 3)
                throw ParseError(path.string(), line_no, "face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k)
                mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    mesh.remove_degenerate();
    return mesh;
}

inline void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh)
{
    std::ofstream out(path);
    if (!out)
        throw FileError("cannot write mesh file: " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& v : mesh.vertices)
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : mesh.triangles)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out)
        throw FileError("failed while writing mesh file: " + path.string());
}

// ---------------------------------------------------------------------------
// PLY (ascii or binary little-endian; vertex x/y/z and face vertex lists)

namespace detail {

struct PlyProperty
{
    std::string name;
    std::string type;       // scalar type, or list item type
    std::string count_type; // non-empty for list properties
};

struct PlyElement
{
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

inline std::size_t ply_type_size(const std::string& t)
{
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},  {"uchar", 1},  {"int8", 1},  {"uint8", 1},   {"short", 2},  {"ushort", 2},
        {"int16", 2}, {"uint16", 2}, {"int", 4},   {"uint", 4},    {"int32", 4},  {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(t);
    return it == sizes.end() ? 0 : it->second;
}

template <class T>
T read_le(const unsigned char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return v;
}

inline double ply_decode(const std::string& t, const unsigned char* p)
{
    if (t == "char" || t == "int8")
        return read_le<std::int8_t>(p);
    if (t == "uchar" || t == "uint8")
        return read_le<std::uint8_t>(p);
    if (t == "short" || t == "int16")
        return read_le<std::int16_t>(p);
    if (t == "ushort" || t == "uint16")
        return read_le<std::uint16_t>(p);
    if (t == "int" || t == "int32")
        return read_le<std::int32_t>(p);
    if (t == "uint" || t == "uint32")
        return read_le<std::uint32_t>(p);
    if (t == "float" || t == "float32")
        return read_le<float>(p);
    return read_le<double>(p);
}

} // namespace detail

inline TriangleMesh read_ply(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot open mesh file: " + path.string());
    const std::string file = path.string();

    std::string line;
    std::size_t line_no = 0;
    std::string format;
    std::vector<detail::PlyElement> elements;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line))
            return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        return true;
    };
    if (!next_line() || line != "ply")
        throw ParseError(file, 1, "missing 'ply' magic");
    while (true) {
        if (!next_line())
            throw ParseError(file, line_no, "unterminated header");
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "end_header")
            break;
        if (tag == "format") {
            ls >> format;
        } else if (tag == "element") {
            detail::PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty())
                throw ParseError(file, line_no, "property before element");
            detail::PlyProperty p;
            std::string type;
            ls >> type;
            if (type == "list") {
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = type;
                ls >> p.name;
            }
            if (detail::ply_type_size(p.type) == 0 ||
                (!p.count_type.empty() && detail::ply_type_size(p.count_type) == 0))
                throw ParseError(file, line_no, "unknown property type");
            elements.back().props.push_back(p);
        }
    }
    const bool binary = format == "binary_little_endian";
    if (!binary && format != "ascii")
        throw ParseError(file, line_no, "unsupported PLY format '" + format + "'");

    TriangleMesh mesh;
    std::vector<unsigned char> buf(8);
    for (const auto& e : elements) {
        for (std::size_t r = 0; r < e.count; ++r) {
            std::istringstream ascii_row;
            if (!binary) {
                if (!next_line())
                    throw ParseError(file, line_no, "truncated element data");
                ascii_row.str(line);
            }
            auto scalar = [&](const std::string& type) -> double {
                if (binary) {
                    const auto n = detail::ply_type_size(type);
                    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
                        throw ParseError(file, line_no, "truncated binary data in element '" + e.name + "'");
                    return detail::ply_decode(type, buf.data());
                }
                double v;
                if (!(ascii_row >> v))
                    throw ParseError(file, line_no, "malformed ascii element row");
                return v;
            };
            Vec3 p = Vec3::Zero();
            std::vector<std::uint32_t> poly;
            for (const auto& prop : e.props) {
                if (prop.count_type.empty()) {
                    const double v = scalar(prop.type);
                    if (e.name == "vertex") {
                        if (prop.name == "x")
                            p.x() = v;
                        else if (prop.name == "y")
                            p.y() = v;
                        else if (prop.name == "z")
                            p.z() = v;
                    }
                } else {
                    const auto n = static_cast<std::size_t>(scalar(prop.count_type));
                    for (std::size_t k = 0; k < n; ++k) {
                        const double v = scalar(prop.type);
                        if (e.name == "face" && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
                            poly.push_back(static_cast<std::uint32_t>(v));
                    }
                }
            }
            if (e.name == "vertex")
                mesh.vertices.push_back(p);
            else if (e.name == "face") {
                if (poly.size() < 3)
                    throw ParseError(file, line_no, "face with fewer than 3 vertices");
                for (std::size_t k = 1; k + 1 < poly.size(); ++k)
                    mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
    }
    for (const auto& f : mesh.triangles)
        for (auto v : f)
            if (v >= mesh.vertices.size())
                throw ParseError(file, line_no, "face index out of range");
    mesh.remove_degenerate();
    return mesh;
}

inline TriangleMesh read_mesh(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw FileError("mesh file not found: " + path.string());
    auto ext = path.extension().string();
    for (auto& c : ext)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".ply")
        return read_ply(path);
    return read_obj(path);
}

/// Axis-aligned unit cube [lo, lo + size]^3 as 12 outward-wound triangles.
inline TriangleMesh make_cube_mesh(const Vec3& lo = Vec3::Zero(), double size = 1.0)
{
    TriangleMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back(lo + size * Vec3(double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)));
    const std::array<std::array<std::uint32_t, 4>, 6> quads = {{
        {0, 2, 3, 1}, // z = 0
        {4, 5, 7, 6}, // z = 1
        {0, 1, 5, 4}, // y = 0
        {2, 6, 7, 3}, // y = 1
        {0, 4, 6, 2}, // x = 0
        {1, 3, 7, 5}, // x = 1
    }};
    for (const auto& q : quads) {
        m.triangles.push_back({q[0], q[1], q[2]});
        m.triangles.push_back({q[0], q[2], q[3]});
    }
    return m;
}

} // namespace serbf

#endif // SERBF_MESH_HPP
