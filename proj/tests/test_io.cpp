#include "core/rng.hpp"
#include "core/volume.hpp"
#include "io/nifti.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace groupreg;

namespace {

const std::string kFixtures = std::string(GROUPREG_TEST_DIR) + "/fixtures";

std::filesystem::path tmp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("groupreg_io_" + name);
}

std::vector<unsigned char> slurp(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Volume sample_volume()
{
    GridInfo g = make_grid({5, 4, 3}, {1.25, 1.0, 2.0});
    Volume v(g);
    SplitMix64 rng(1234);
    for (double& x : v.data)
        x = 100.0 * rng.next_gaussian();
    return v;
}

} // namespace

TEST_CASE("float64 roundtrip is bitwise")
{
    Volume v = sample_volume();
    auto p = tmp_path("f64.nii");
    write_volume(p.string(), v, NiftiDatatype::kFloat64);
    Volume r = read_volume(p.string());
    CHECK(r.grid.dims == v.grid.dims);
    CHECK(r.grid.spacing == v.grid.spacing);
    CHECK(r.grid.affine == v.grid.affine);
    CHECK(r.data == v.data); // bitwise
}

TEST_CASE("float32 roundtrip is within one float32 ulp")
{
    Volume v = sample_volume();
    auto p = tmp_path("f32.nii");
    write_volume(p.string(), v, NiftiDatatype::kFloat32);
    Volume r = read_volume(p.string());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        float f = static_cast<float>(v.data[i]);
        CHECK(r.data[i] == static_cast<double>(f));
    }
}

TEST_CASE("integer writes round and clamp to the datatype range")
{
    GridInfo g = make_grid({4, 1, 1}, {1, 1, 1});
    Volume v(g, std::vector<double>{-7.6, 0.4, 254.5, 300.0});
    auto p = tmp_path("u8.nii");
    write_volume(p.string(), v, NiftiDatatype::kUint8);
    Volume r = read_volume(p.string());
    CHECK(r.data == std::vector<double>{0, 0, 255, 255});

    Volume w(g, std::vector<double>{-40000.0, -1.5, 2.5, 40000.0});
    auto q = tmp_path("i16.nii");
    write_volume(q.string(), w, NiftiDatatype::kInt16);
    Volume s = read_volume(q.string());
    // llround: halves away from zero
    CHECK(s.data == std::vector<double>{-32768, -2, 3, 32767});
}

TEST_CASE("gzip roundtrip by suffix is transparent")
{
    Volume v = sample_volume();
    auto p = tmp_path("roundtrip.nii.gz");
    write_volume(p.string(), v, NiftiDatatype::kFloat64);
    // file really is gzip: 0x1f 0x8b
    auto bytes = slurp(p.string());
    REQUIRE(bytes.size() > 2);
    CHECK(bytes[0] == 0x1f);
    CHECK(bytes[1] == 0x8b);
    Volume r = read_volume(p.string());
    CHECK(r.data == v.data);
}

TEST_CASE("vector field roundtrip preserves all components and metadata")
{
    GridInfo g = make_grid({4, 3, 5}, {2, 2, 2});
    VectorVolume f(g);
    SplitMix64 rng(77);
    for (int a = 0; a < 3; ++a)
        for (double& x : f.comp[a])
            x = rng.next_gaussian();
    auto p = tmp_path("field.nii.gz");
    write_field(p.string(), f, NiftiDatatype::kFloat64);
    VectorVolume r = read_field(p.string());
    CHECK(r.grid.dims == g.dims);
    for (int a = 0; a < 3; ++a)
        CHECK(r.comp[a] == f.comp[a]);

    // scalar readers refuse vector content and vice versa
    CHECK_THROWS_AS(read_volume(p.string()), UnsupportedDimensionality);
    auto q = tmp_path("scalar_for_field.nii");
    write_volume(q.string(), sample_volume(), NiftiDatatype::kFloat64);
    CHECK_THROWS_AS(read_field(q.string()), UnsupportedDimensionality);
}

TEST_CASE("mask write uses uint8 and read_mask binarizes")
{
    GridInfo g = make_grid({3, 3, 3}, {1, 1, 1});
    Mask m(g);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = i % 3 == 0;
    auto p = tmp_path("mask.nii");
    write_mask(p.string(), m);
    Mask r = read_mask(p.string());
    CHECK(r.data == m.data);

    // nonzero scalars binarize to 1
    Volume v(g, 2.5);
    auto q = tmp_path("ones.nii");
    write_volume(q.string(), v, NiftiDatatype::kFloat32);
    Mask ones = read_mask(q.string());
    CHECK(ones.count() == g.voxels());
}

TEST_CASE("independent fixtures decode to the exact expected arrays")
{
    const int n = 12;

    SUBCASE("float64 with sform")
    {
        for (const char* name : {"/ref_float64.nii", "/ref_float64.nii.gz"}) {
            Volume v = read_volume(kFixtures + name);
            REQUIRE(v.grid.dims == std::array<int, 3>{3, 2, 2});
            CHECK(v.grid.spacing == std::array<double, 3>{1.5, 2.0, 2.5});
            for (int i = 0; i < n; ++i)
                CHECK(v.data[i] == std::pow(-1.0, i) * (i * i + 0.125));
            CHECK(v.grid.affine[0] == 1.5);
            CHECK(v.grid.affine[5] == 2.0);
            CHECK(v.grid.affine[10] == 2.5);
            CHECK(v.grid.affine[15] == 1.0);
        }
    }

    SUBCASE("float32 little and big endian decode identically")
    {
        Volume le = read_volume(kFixtures + "/ref_float32.nii");
        Volume be = read_volume(kFixtures + "/ref_float32_be.nii");
        CHECK(le.data == be.data);
        for (int i = 0; i < n; ++i)
            CHECK(le.data[i] == static_cast<double>(static_cast<float>(i - 4.5)));
    }

    SUBCASE("int16 applies slope and intercept")
    {
        Volume v = read_volume(kFixtures + "/ref_int16_scaled.nii");
        for (int i = 0; i < n; ++i)
            CHECK(v.data[i] == 2.0 * (i - 3) - 1.0);
    }

    SUBCASE("uint8 and int32")
    {
        Volume u = read_volume(kFixtures + "/ref_uint8.nii");
        Volume s = read_volume(kFixtures + "/ref_int32.nii");
        for (int i = 0; i < n; ++i) {
            CHECK(u.data[i] == i % 2);
            CHECK(s.data[i] == 1000.0 * i - 5000.0);
        }
    }

    SUBCASE("quaternion orientation fills the affine")
    {
        Volume v = read_volume(kFixtures + "/ref_qform.nii");
        CHECK(v.grid.affine[0] == doctest::Approx(1.5).epsilon(1e-6));
        CHECK(v.grid.affine[3] == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(v.grid.affine[7] == doctest::Approx(4.0).epsilon(1e-6));
        CHECK(v.grid.affine[11] == doctest::Approx(5.0).epsilon(1e-6));
    }

    SUBCASE("vector field fixture")
    {
        VectorVolume f = read_field(kFixtures + "/ref_vector.nii");
        REQUIRE(f.grid.dims == std::array<int, 3>{3, 2, 2});
        for (int i = 0; i < n; ++i) {
            CHECK(f.comp[0][i] == 0.5 * i);
            CHECK(f.comp[1][i] == 10.0 + i);
            CHECK(f.comp[2][i] == -2.0 * i);
        }
    }
}

TEST_CASE("writer output matches the checked-in golden file byte for byte")
{
    GridInfo g = make_grid({2, 2, 2}, {1.0, 1.0, 1.0});
    Volume v(g, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
    auto p = tmp_path("golden.nii");
    write_volume(p.string(), v, NiftiDatatype::kFloat32);
    CHECK(slurp(p.string()) == slurp(kFixtures + "/golden_write_2x2x2.nii"));
}

TEST_CASE("malformed inputs raise the distinct error variants")
{
    auto base = slurp(kFixtures + "/ref_float32.nii");

    SUBCASE("bad magic")
    {
        auto b = base;
        b[344] = 'x';
        auto p = tmp_path("badmagic.nii");
        spit(p, b);
        CHECK_THROWS_AS(read_volume(p.string()), BadMagic);
    }
    SUBCASE("two-file magic gets its own message")
    {
        auto b = base;
        b[344] = 'n';
        b[345] = 'i';
        b[346] = '1';
        b[347] = 0;
        auto p = tmp_path("ni1.nii");
        spit(p, b);
        CHECK_THROWS_WITH_AS(read_volume(p.string()), doctest::Contains("two-file"),
                             BadMagic);
    }
    SUBCASE("bad header size")
    {
        auto b = base;
        b[0] = 99; // sizeof_hdr no longer 348 under either byte order
        auto p = tmp_path("badsize.nii");
        spit(p, b);
        CHECK_THROWS_AS(read_volume(p.string()), BadMagic);
    }
    SUBCASE("unsupported datatype")
    {
        auto b = base;
        b[70] = 128; // RGB24
        b[71] = 0;
        auto p = tmp_path("rgb.nii");
        spit(p, b);
        CHECK_THROWS_WITH_AS(read_volume(p.string()), doctest::Contains("datatype"),
                             UnsupportedDatatype);
    }
    SUBCASE("unsupported dimensionality")
    {
        auto b = base;
        b[40] = 5;  // dim0 = 5
        b[50] = 2;  // dim5 = 2 components
        auto p = tmp_path("dim5.nii");
        spit(p, b);
        CHECK_THROWS_AS(read_volume(p.string()), UnsupportedDimensionality);
    }
    SUBCASE("truncated data")
    {
        auto b = base;
        b.resize(b.size() - 10);
        auto p = tmp_path("short.nii");
        spit(p, b);
        CHECK_THROWS_WITH_AS(read_volume(p.string()), doctest::Contains("truncated"),
                             TruncatedFile);
    }
    SUBCASE("truncated header")
    {
        auto b = base;
        b.resize(100);
        auto p = tmp_path("tiny.nii");
        spit(p, b);
        CHECK_THROWS_AS(read_volume(p.string()), TruncatedFile);
    }
    SUBCASE("invalid vox_offset")
    {
        auto b = base;
        // vox_offset float at 108: set to 100.0f < header size
        b[108] = 0x00;
        b[109] = 0x00;
        b[110] = 0xc8;
        b[111] = 0x42;
        auto p = tmp_path("voxoff.nii");
        spit(p, b);
        CHECK_THROWS_AS(read_volume(p.string()), IoFailure);
    }
    SUBCASE("missing file names the path")
    {
        CHECK_THROWS_WITH_AS(read_volume("/nonexistent/nope.nii"),
                             doctest::Contains("/nonexistent/nope.nii"), IoFailure);
    }
}
