#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include "serbf/extract.hpp"
#include "serbf/mesh.hpp"
#include "serbf/metrics.hpp"
#include "serbf/sdf.hpp"
#include "test_util.hpp"

using namespace serbf;

namespace {

double outward_flux(const TriangleMesh& mesh, const Vec3& center)
{
    double s = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& f = mesh.triangles[t];
        const Vec3 c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
        s += mesh.face_cross(t).dot(c - center);
    }
    return s;
}

double enclosed_volume(const TriangleMesh& mesh)
{
    double v = 0.0;
    for (const auto& f : mesh.triangles)
        v += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]])) / 6.0;
    return v;
}

} // namespace

TEST(AnalyticSdf, KnownValues)
{
    EXPECT_DOUBLE_EQ(AnalyticShape::box(Vec3(1, 1, 1)).sdf(Vec3(1.5, 0, 0)), 0.5);
    const auto sphere = AnalyticShape::sphere(1.0);
    EXPECT_DOUBLE_EQ(sphere.sdf(Vec3::Zero()), -1.0);
    EXPECT_DOUBLE_EQ(sphere.sdf(Vec3(2, 0, 0)), 1.0);
    EXPECT_NEAR(AnalyticShape::box(Vec3(1, 1, 1)).sdf(Vec3(2, 2, 1)), std::sqrt(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(AnalyticShape::torus(1.0, 0.25).sdf(Vec3(1, 0, 0)), -0.25);
}

TEST(AnalyticSdf, ParseSpecs)
{
    EXPECT_DOUBLE_EQ(AnalyticShape::parse("sphere:2").sdf(Vec3::Zero()), -2.0);
    EXPECT_DOUBLE_EQ(AnalyticShape::parse("box:1,2,3").sdf(Vec3::Zero()), -1.0);
    EXPECT_DOUBLE_EQ(AnalyticShape::parse("box:0.5").sdf(Vec3::Zero()), -0.5);
    EXPECT_DOUBLE_EQ(AnalyticShape::parse("torus:1,0.3").sdf(Vec3(1, 0, 0)), -0.3);
    EXPECT_THROW(AnalyticShape::parse("sphere:-1"), std::invalid_argument);
    EXPECT_THROW(AnalyticShape::parse("cone:1"), std::invalid_argument);
    EXPECT_THROW(AnalyticShape::parse("box:1,2"), std::invalid_argument);
    EXPECT_TRUE(AnalyticShape::looks_like_shape("sphere:1"));
    EXPECT_FALSE(AnalyticShape::looks_like_shape("model.obj"));
}

TEST(AnalyticSdf, SamplesLieOnSurfaceWithUnitNormals)
{
    for (const auto& spec : {"sphere:1.3", "box:1,0.5,0.25", "torus:1,0.3"}) {
        const auto shape = AnalyticShape::parse(spec);
        PointList pts, normals;
        shape.sample(3000, 4, pts, normals);
        ASSERT_EQ(pts.size(), 3000u);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            EXPECT_NEAR(shape.sdf(pts[i]), 0.0, 1e-12) << spec;
            EXPECT_NEAR(normals[i].norm(), 1.0, 1e-12);
            EXPECT_GT(shape.sdf(pts[i] + 1e-4 * normals[i]), 0.0) << spec;
        }
        PointList again, n2;
        shape.sample(3000, 4, again, n2);
        EXPECT_EQ(pts, again);
    }
}

TEST(BoxSampling, AreaWeighted)
{
    const auto shape = AnalyticShape::box(Vec3(2, 1, 0.5));
    PointList pts, normals;
    shape.sample(70000, 2, pts, normals);
    int top = 0;
    for (const auto& n : normals)
        top += n.z() > 0.5;
    // top face area 8 of total 2*(8 + 4 + 2) = 28
    EXPECT_NEAR(double(top) / pts.size(), 8.0 / 28.0, 0.01);
}

TEST(Triangle, ClosestPointMatchesDenseSearch)
{
    SplitMix64 rng(3);
    for (int k = 0; k < 200; ++k) {
        const Vec3 a = testing_util::random_vec(rng, -1, 1), b = testing_util::random_vec(rng, -1, 1),
                   c = testing_util::random_vec(rng, -1, 1);
        const Vec3 p = testing_util::random_vec(rng, -2, 2);
        const auto cp = closest_point_on_triangle(p, a, b, c);
        double best = 1e300;
        const int n = 200;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) {
                const Vec3 q = a + (b - a) * (double(i) / n) + (c - a) * (double(j) / n);
                best = std::min(best, (p - q).norm());
            }
        EXPECT_LE((p - cp.point).norm(), best + 1e-12);
        EXPECT_GT((p - cp.point).norm(), best - 0.02);
    }
}

TEST(Triangle, RayHitsOnlyForward)
{
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    EXPECT_NEAR(*ray_triangle(Vec3(0.2, 0.2, 1), Vec3(0, 0, -1), a, b, c), 1.0, 1e-15);
    EXPECT_FALSE(ray_triangle(Vec3(0.2, 0.2, 1), Vec3(0, 0, 1), a, b, c));
    EXPECT_FALSE(ray_triangle(Vec3(2, 2, 1), Vec3(0, 0, -1), a, b, c));
}

TEST(CubeMesh, OutwardAndWatertight)
{
    const auto cube = make_cube_mesh();
    EXPECT_EQ(cube.triangles.size(), 12u);
    EXPECT_TRUE(cube.is_watertight());
    EXPECT_NEAR(enclosed_volume(cube), 1.0, 1e-15);
    EXPECT_GT(outward_flux(cube, Vec3::Constant(0.5)), 0.0);
}

TEST(MeshSdf, CubeCentroidAndOutside)
{
    const MeshDistance d(make_cube_mesh());
    EXPECT_TRUE(d.watertight());
    EXPECT_DOUBLE_EQ(d.signed_distance(Vec3(0.5, 0.5, 0.5)), -0.5);
    EXPECT_DOUBLE_EQ(d.signed_distance(Vec3(1.5, 0.5, 0.5)), 0.5);
    EXPECT_NEAR(d.signed_distance(Vec3(2, 2, 0.5)), std::sqrt(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(d.signed_distance(Vec3(0.5, 0.5, 0.0)), 0.0);
}

TEST(MeshSdf, MatchesAnalyticBox)
{
    const auto cube = make_cube_mesh(Vec3::Constant(-1), 2.0);
    const auto box = AnalyticShape::box(Vec3::Ones());
    SplitMix64 rng(10);
    const auto pts = testing_util::random_points(rng, 2000, -2, 2);
    const auto s = mesh_sdf(cube, pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
        EXPECT_NEAR(s[i], box.sdf(pts[i]), 1e-12);
}

TEST(MeshSdf, OpenMeshUsesPseudonormal)
{
    auto cube = make_cube_mesh();
    cube.triangles.pop_back();
    cube.triangles.pop_back();
    const MeshDistance d(cube);
    EXPECT_FALSE(d.watertight());
    EXPECT_LT(d.signed_distance(Vec3(0.5, 0.5, 0.5)), 0.0);
    EXPECT_GT(d.signed_distance(Vec3(-0.5, 0.5, 0.5)), 0.0);
}

TEST(MeshSdf, RejectsEmptyMesh) { EXPECT_THROW(MeshDistance(TriangleMesh{}), std::invalid_argument); }

TEST(MarchingCubes, SphereIsWatertightAndOutward)
{
    const auto sphere = AnalyticShape::sphere(1.0);
    const auto mesh = extract_analytic(sphere, shape_cube(sphere), 40);
    ASSERT_FALSE(mesh.empty());
    EXPECT_TRUE(mesh.is_watertight());
    EXPECT_GT(outward_flux(mesh, Vec3::Zero()), 0.0);
    EXPECT_NEAR(enclosed_volume(mesh), 4.0 / 3.0 * std::numbers::pi, 0.05);
    for (const auto& v : mesh.vertices)
        EXPECT_NEAR(v.norm(), 1.0, 0.01);
}

TEST(MarchingCubes, TorusHasGenusOne)
{
    const auto torus = AnalyticShape::torus(1.0, 0.35);
    const auto mesh = extract_analytic(torus, shape_cube(torus), 48);
    EXPECT_TRUE(mesh.is_watertight());
    std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& f : mesh.triangles)
        for (int k = 0; k < 3; ++k)
            edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
    const long euler = long(mesh.vertices.size()) - long(edges.size()) + long(mesh.triangles.size());
    EXPECT_EQ(euler, 0);
}

TEST(MarchingCubes, NoCrossingGivesEmptyMesh)
{
    const auto lat = sample_lattice({4, 4, 4}, Vec3::Zero(), 1.0, [](std::span<const Vec3> pts) {
        return std::vector<double>(pts.size(), 1.0);
    });
    EXPECT_TRUE(marching_cubes(lat, 0.0).empty());
}

TEST(Extract, ModelLevelSetFacesOutward)
{
    ErbfModel m;
    m.bases = {{Vec3::Zero(), Vec3::Ones(), Vec3::Zero(), 1.2}};
    const auto mesh = extract_model(m, model_bounds(m), 40);
    EXPECT_TRUE(mesh.is_watertight());
    EXPECT_GT(outward_flux(mesh, Vec3::Zero()), 0.0);
    // 1.44 exp(-r^2) = 1 at r = sqrt(ln 1.44)
    const double r = std::sqrt(std::log(1.44));
    for (const auto& v : mesh.vertices)
        EXPECT_NEAR(v.norm(), r, 0.01);
}

TEST(ObjIo, RoundTrip)
{
    const auto dir = testing_util::scratch_dir("obj");
    auto mesh = make_cube_mesh(Vec3(0.1, -0.2, 1.0 / 3.0), 0.7);
    write_obj(dir / "c.obj", mesh);
    const auto back = read_obj(dir / "c.obj");
    EXPECT_EQ(back.vertices, mesh.vertices);
    EXPECT_EQ(back.triangles, mesh.triangles);
}

TEST(ObjIo, PolygonsAndSlashForms)
{
    const auto dir = testing_util::scratch_dir("obj2");
    std::ofstream(dir / "q.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\n"
                                    "f 1//1 2//1 3//1 4//1\nf -4/1 -3/2 -2/3\n";
    const auto m = read_obj(dir / "q.obj");
    ASSERT_EQ(m.triangles.size(), 3u);
    EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
    EXPECT_EQ(m.triangles[1], (Triangle{0, 2, 3}));
    EXPECT_EQ(m.triangles[2], (Triangle{0, 1, 2}));
}

TEST(ObjIo, ErrorsCarryLineNumbers)
{
    const auto dir = testing_util::scratch_dir("obj3");
    std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
    try {
        read_obj(dir / "bad.obj");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    EXPECT_THROW(read_obj(dir / "missing.obj"), FileError);
}

TEST(PlyIo, BinaryLittleEndian)
{
    const auto dir = testing_util::scratch_dir("ply");
    std::ofstream out(dir / "t.ply", std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 4\nproperty float x\n"
           "property float y\nproperty float z\nproperty uchar red\nelement face 1\n"
           "property list uchar int vertex_indices\nend_header\n";
    const float v[4][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0.5f}};
    for (const auto& p : v) {
        out.write(reinterpret_cast<const char*>(p), 12);
        out.put(char(200));
    }
    out.put(char(4));
    const std::int32_t idx[4] = {0, 1, 2, 3};
    out.write(reinterpret_cast<const char*>(idx), 16);
    out.close();
    const auto m = read_mesh(dir / "t.ply");
    ASSERT_EQ(m.vertices.size(), 4u);
    EXPECT_EQ(m.vertices[3], Vec3(0, 1, 0.5));
    ASSERT_EQ(m.triangles.size(), 2u);
    EXPECT_EQ(m.triangles[1], (Triangle{0, 2, 3}));
}

TEST(PlyIo, AsciiAndTruncated)
{
    const auto dir = testing_util::scratch_dir("ply2");
    std::ofstream(dir / "a.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\n"
                                    "property double z\nelement face 1\nproperty list uchar uint vertex_indices\n"
                                    "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    EXPECT_EQ(read_mesh(dir / "a.ply").triangles.size(), 1u);
    std::ofstream(dir / "b.ply", std::ios::binary)
        << "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
           "property float z\nend_header\n";
    EXPECT_THROW(read_mesh(dir / "b.ply"), ParseError);
}

TEST(Metrics, HandComputedValues)
{
    SurfaceSamples a, b;
    a.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    a.normals = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    b.points = {Vec3(0, 0, 0), Vec3(0, 2, 0)};
    b.normals = {Vec3(0, 0, 1), Vec3(0.6, 0.8, 0)};
    EXPECT_DOUBLE_EQ(hausdorff(a.points, b.points), 2.0);
    EXPECT_DOUBLE_EQ(chamfer(a.points, b.points), 0.75);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.15);
    const auto r = compare_samples(a, b);
    EXPECT_DOUBLE_EQ(r.hd, 2.0);
    EXPECT_DOUBLE_EQ(r.cd, 0.75);
    EXPECT_DOUBLE_EQ(r.cs, 0.15);
    EXPECT_DOUBLE_EQ(r.diagonal, 2.0);
}

TEST(Metrics, IdenticalSamples)
{
    const auto sphere = AnalyticShape::sphere(1.0);
    SurfaceSamples s;
    sphere.sample(2000, 3, s.points, s.normals);
    const auto r = compare_samples(s, s);
    EXPECT_EQ(r.hd, 0.0);
    EXPECT_EQ(r.cd, 0.0);
    EXPECT_NEAR(r.cs, 1.0, 1e-15);
}

TEST(Metrics, HausdorffDominatesChamfer)
{
    SplitMix64 rng(19);
    for (int k = 0; k < 50; ++k) {
        const auto a = testing_util::random_points(rng, 1 + rng.below(60), -1, 1);
        const auto b = testing_util::random_points(rng, 1 + rng.below(60), -1, 1);
        EXPECT_GE(hausdorff(a, b), chamfer(a, b));
        EXPECT_DOUBLE_EQ(chamfer(a, b), chamfer(b, a));
    }
}

TEST(Metrics, MeshSamplesOnSphere)
{
    const auto sphere = AnalyticShape::sphere(1.0);
    const auto mesh = extract_analytic(sphere, shape_cube(sphere), 48);
    const auto s = sample_surface(mesh, 5000, 1);
    ASSERT_EQ(s.size(), 5000u);
    double agree = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_NEAR(s.points[i].norm(), 1.0, 0.01);
        agree += s.normals[i].dot(s.points[i].normalized());
    }
    EXPECT_GT(agree / s.size(), 0.999);
    EXPECT_THROW(sample_surface(TriangleMesh{}, 10, 1), std::invalid_argument);
}
