#include "core/volume.hpp"
#include "metrics/metrics.hpp"
#include "synth/synth.hpp"
#include "transform/svf.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>

using namespace groupreg;

namespace {

std::size_t class_count(const Volume& labels, int cls)
{
    std::size_t c = 0;
    for (double v : labels.data)
        c += std::llround(v) == cls;
    return c;
}

} // namespace

TEST_CASE("phantom is deterministic and anatomically plausible")
{
    Phantom a = make_phantom({24, 24, 24}, {2, 2, 2}, 12);
    Phantom b = make_phantom({24, 24, 24}, {2, 2, 2}, 12);
    CHECK(a.image.data == b.image.data);
    CHECK(a.labels.data == b.labels.data);

    Phantom c = make_phantom({24, 24, 24}, {2, 2, 2}, 13);
    CHECK(a.image.data != c.image.data);

    // all 5 classes are present and the head occupies a sane fraction
    for (int cls = 0; cls <= 4; ++cls)
        CHECK(class_count(a.labels, cls) > 0);
    double head_frac = static_cast<double>(a.head.count()) / a.head.grid.voxels();
    CHECK(head_frac > 0.1);
    CHECK(head_frac < 0.6);

    // tissue means are separated: sample means ordered CSF < GM < WM
    double sums[5] = {0, 0, 0, 0, 0};
    std::size_t counts[5] = {0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < a.image.data.size(); ++i) {
        int cls = static_cast<int>(std::llround(a.labels.data[i]));
        sums[cls] += a.image.data[i];
        ++counts[cls];
    }
    // FLAIR-like contrast: background < CSF < WM < GM < tumor
    double mean_bg = sums[0] / counts[0];
    double mean_csf = sums[1] / counts[1];
    double mean_gm = sums[2] / counts[2];
    double mean_wm = sums[3] / counts[3];
    double mean_tumor = sums[4] / counts[4];
    CHECK(mean_bg < mean_csf);
    CHECK(mean_csf < mean_wm);
    CHECK(mean_wm < mean_gm);
    CHECK(mean_gm < mean_tumor);
    CHECK_THROWS_AS(make_phantom({4, 24, 24}, {2, 2, 2}, 1), InvalidArgument);
}

TEST_CASE("random smooth velocity honours amplitude, support and seed")
{
    GridInfo g = make_grid({16, 16, 16}, {2, 2, 2});
    VectorVolume v = random_smooth_velocity(g, 3.0, 6.0, 42);
    CHECK(v.max_norm() == doctest::Approx(3.0).epsilon(1e-12));

    VectorVolume v2 = random_smooth_velocity(g, 3.0, 6.0, 42);
    for (int a = 0; a < 3; ++a)
        CHECK(v.comp[a] == v2.comp[a]);

    CHECK(random_smooth_velocity(g, 0.0, 6.0, 42).max_norm() == 0.0);

    Mask support(g, std::uint8_t{0});
    for (int z = 6; z < 10; ++z)
        for (int y = 6; y < 10; ++y)
            for (int x = 6; x < 10; ++x)
                support.data[g.index(x, y, z)] = 1;
    VectorVolume vs = random_smooth_velocity(g, 3.0, 6.0, 42, &support);
    // field vanishes far away from the support
    double corner = std::sqrt(vs.comp[0][0] * vs.comp[0][0] + vs.comp[1][0] * vs.comp[1][0] +
                              vs.comp[2][0] * vs.comp[2][0]);
    CHECK(corner == 0.0);
    CHECK(vs.max_norm() == doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS(random_smooth_velocity(g, -1.0, 6.0, 1), InvalidArgument);
    CHECK_THROWS_AS(random_smooth_velocity(g, 1.0, 0.0, 1), InvalidArgument);
}

TEST_CASE("synthetic group velocities are centered and fold-free")
{
    Phantom ph = make_phantom({20, 20, 20}, {2, 2, 2}, 9);
    GroupParams params;
    params.n = 4;
    params.amplitude_mm = 4.0;
    params.seed = 5;
    SyntheticGroup sg = make_group(ph, params);

    REQUIRE(sg.group.size() == 4);
    REQUIRE(sg.true_velocities.size() == 4);
    const GridInfo& g = ph.image.grid;
    for (int a = 0; a < 3; ++a)
        for (std::size_t j = 0; j < g.voxels(); ++j) {
            double sum = 0.0;
            for (const auto& v : sg.true_velocities)
                sum += v.comp[a][j];
            CHECK(std::abs(sum) <= 1e-9);
        }
    Mask full(g, std::uint8_t{1});
    for (const auto& v : sg.true_velocities) {
        JacobianMap jm = jacobian_determinant(exponentiate(v, 7));
        CHECK(smoothness(jm, full).folding_percent == 0.0);
    }
    // members differ from each other and masks exclude the tumor
    CHECK(sg.group.members[0].image.data != sg.group.members[1].image.data);
    for (const auto& m : sg.group.members) {
        REQUIRE(m.labels.has_value());
        for (std::size_t j = 0; j < g.voxels(); ++j) {
            if (std::llround(m.labels->data[j]) == kTumor)
                CHECK(m.mask.data[j] == 0);
        }
    }
}

TEST_CASE("zero amplitude reproduces the phantom in every member")
{
    Phantom ph = make_phantom({16, 16, 16}, {2, 2, 2}, 21);
    GroupParams params;
    params.n = 3;
    params.amplitude_mm = 0.0;
    params.seed = 2;
    SyntheticGroup sg = make_group(ph, params);
    for (const auto& m : sg.group.members)
        CHECK(m.image.data == ph.image.data);
}

TEST_CASE("tumor growth makes the later tumors strictly larger")
{
    Phantom ph = make_phantom({24, 24, 24}, {2, 2, 2}, 33);
    GroupParams params;
    params.n = 3;
    params.amplitude_mm = 0.0; // isolate the growth component
    params.tumor_growth_mm = 4.0;
    params.seed = 6;
    SyntheticGroup sg = make_group(ph, params);
    std::size_t early = class_count(*sg.group.members[0].labels, kTumor);
    std::size_t mid = class_count(*sg.group.members[1].labels, kTumor);
    std::size_t late = class_count(*sg.group.members[2].labels, kTumor);
    CHECK(early < mid);
    CHECK(mid < late);
}

TEST_CASE("intensity shift brightens only the tumor and scales with time")
{
    Phantom ph = make_phantom({24, 24, 24}, {2, 2, 2}, 44);
    GroupParams params;
    params.n = 3;
    params.amplitude_mm = 0.0;
    params.intensity_shift = 0.4;
    params.seed = 8;
    SyntheticGroup sg = make_group(ph, params);

    const auto& first = sg.group.members[0].image;
    const auto& last = sg.group.members[2].image;
    double tumor_delta = 0.0, normal_delta = 0.0;
    std::size_t tc = 0, nc = 0;
    for (std::size_t j = 0; j < first.data.size(); ++j) {
        double d = last.data[j] - first.data[j];
        if (std::llround(ph.labels.data[j]) == kTumor) {
            tumor_delta += d;
            ++tc;
        } else {
            normal_delta += std::abs(d);
            ++nc;
        }
    }
    REQUIRE(tc > 0);
    CHECK(tumor_delta / tc > 50.0); // 40% of an 850 range, full step
    CHECK(normal_delta / nc == 0.0);

    GroupParams bad = params;
    bad.intensity_shift = 1.5;
    CHECK_THROWS_AS(make_group(ph, bad), InvalidArgument);
}

TEST_CASE("group generation is reproducible per seed")
{
    Phantom ph = make_phantom({16, 16, 16}, {2, 2, 2}, 55);
    GroupParams params;
    params.n = 3;
    params.amplitude_mm = 3.0;
    params.intensity_shift = 0.2;
    params.seed = 77;
    SyntheticGroup a = make_group(ph, params);
    SyntheticGroup b = make_group(ph, params);
    for (int i = 0; i < 3; ++i) {
        CHECK(a.group.members[i].image.data == b.group.members[i].image.data);
        CHECK(a.group.members[i].mask.data == b.group.members[i].mask.data);
        for (int c = 0; c < 3; ++c)
            CHECK(a.true_velocities[i].comp[c] == b.true_velocities[i].comp[c]);
    }
}
