#include "core/rng.hpp"
#include "core/volume.hpp"
#include "loss/group_loss.hpp"
#include "synth/synth.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace groupreg;

namespace {

Volume random_volume(const GridInfo& g, std::uint64_t seed, double mean = 0.0,
                     double scale = 1.0)
{
    SplitMix64 rng(seed);
    Volume v(g);
    for (double& x : v.data)
        x = mean + scale * rng.next_gaussian();
    return v;
}

Mask blob_mask(const GridInfo& g, std::uint64_t seed)
{
    // Random smooth indicator thresholded at its mean: a connected-ish
    // blob covering roughly half the grid.
    Volume f = random_volume(g, seed);
    f = gaussian_smooth(f, {3 * g.spacing[0], 3 * g.spacing[1], 3 * g.spacing[2]});
    double m = 0.0;
    for (double v : f.data)
        m += v;
    m /= static_cast<double>(f.data.size());
    Mask out(g);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        out.data[i] = f.data[i] > m;
    return out;
}

Group make_test_group(const GridInfo& g, int n, std::uint64_t seed, bool full_masks)
{
    // Warped copies of one structured volume plus noise, so the members
    // genuinely correlate but are not identical.
    Volume base = random_volume(g, seed, 100.0, 30.0);
    base = gaussian_smooth(base, {2 * g.spacing[0], 2 * g.spacing[1], 2 * g.spacing[2]});
    Group group;
    for (int i = 0; i < n; ++i) {
        VectorVolume v = random_smooth_velocity(g, 1.5, 4.0, seed * 100 + i + 1);
        Volume img = warp(base, exponentiate(v, 6));
        SplitMix64 noise(seed * 991 + i);
        for (double& x : img.data)
            x += 0.5 * noise.next_gaussian();
        Mask m = full_masks ? Mask(g, std::uint8_t{1}) : blob_mask(g, seed * 17 + i);
        group.members.push_back({std::move(img), std::move(m), std::nullopt});
    }
    return group;
}

std::vector<VectorVolume> random_velocities(const GridInfo& g, int n, std::uint64_t seed,
                                            double amplitude)
{
    std::vector<VectorVolume> v;
    for (int i = 0; i < n; ++i)
        v.push_back(random_smooth_velocity(g, amplitude, 4.0, seed + 7 * i + 1));
    return v;
}

} // namespace

TEST_CASE("lncc equals the per-voxel loop reference")
{
    GridInfo g = make_grid({14, 13, 12}, {2, 2, 2});
    Volume a = random_volume(g, 1, 100.0, 25.0);
    Volume b = random_volume(g, 2, 80.0, 20.0);
    // correlate them somewhat
    for (std::size_t i = 0; i < g.voxels(); ++i)
        b.data[i] += 0.5 * a.data[i];
    for (int radius : {2, 4}) {
        for (bool full : {true, false}) {
            Mask m = full ? Mask(g, std::uint8_t{1}) : blob_mask(g, 5);
            double fast = lncc(a, b, m, radius);
            double slow = oracle::naive_lncc(a, b, m, radius);
            CHECK(std::abs(fast - slow) <= 1e-10);
        }
    }
}

TEST_CASE("lncc is 1 for an image against itself when variance dominates the floor")
{
    GridInfo g = make_grid({12, 12, 12}, {1, 1, 1});
    Volume a = random_volume(g, 3, 500.0, 120.0);
    Mask m(g, std::uint8_t{1});
    CHECK(lncc(a, a, m, 4) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lncc rejects grid mismatches and empty masks")
{
    GridInfo g = make_grid({8, 8, 8}, {1, 1, 1});
    GridInfo g2 = make_grid({8, 8, 9}, {1, 1, 1});
    Volume a(g), b(g), c(g2);
    CHECK_THROWS_AS(lncc(a, c, Mask(g, std::uint8_t{1}), 4), GridMismatch);
    CHECK_THROWS_AS(lncc(a, b, Mask(g, std::uint8_t{0}), 4), EmptyMask);
}

TEST_CASE("lncc gradient matches finite differences in both arguments")
{
    GridInfo g = make_grid({9, 9, 9}, {2, 2, 2});
    Volume a = random_volume(g, 11, 100.0, 20.0);
    Volume b = random_volume(g, 12, 90.0, 25.0);
    Mask m = blob_mask(g, 13);
    const int radius = 2;

    LnccResult res = lncc_with_gradient(a, b, m, radius);
    CHECK(res.value == doctest::Approx(lncc(a, b, m, radius)).epsilon(1e-12));

    const double h = 1e-5;
    SplitMix64 pick(14);
    for (int probe = 0; probe < 12; ++probe) {
        std::size_t j = pick.next_u64() % g.voxels();
        Volume ap = a, am = a;
        ap.data[j] += h;
        am.data[j] -= h;
        double fd = (lncc(ap, b, m, radius) - lncc(am, b, m, radius)) / (2 * h);
        CHECK(res.grad_a.data[j] == doctest::Approx(fd).epsilon(1e-6));

        Volume bp = b, bm = b;
        bp.data[j] += h;
        bm.data[j] -= h;
        fd = (lncc(a, bp, m, radius) - lncc(a, bm, m, radius)) / (2 * h);
        CHECK(res.grad_b.data[j] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("velocity regularizer matches a direct stencil computation")
{
    GridInfo g = make_grid({7, 6, 8}, {1.5, 2.0, 2.5});
    VectorVolume v(g);
    SplitMix64 rng(21);
    for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < g.voxels(); ++i)
            v.comp[a][i] = rng.next_gaussian();

    double direct = 0.0;
    for (int a = 0; a < 3; ++a) {
        Volume comp(g, v.comp[a]);
        VectorVolume grads = gradient_central(comp);
        for (int b = 0; b < 3; ++b)
            for (std::size_t i = 0; i < g.voxels(); ++i)
                direct += grads.comp[b][i] * grads.comp[b][i];
    }
    direct /= static_cast<double>(g.voxels());
    CHECK(velocity_regularizer(v) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("velocity regularizer gradient matches finite differences")
{
    GridInfo g = make_grid({6, 6, 6}, {2, 1, 2});
    VectorVolume v(g);
    SplitMix64 rng(31);
    for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < g.voxels(); ++i)
            v.comp[a][i] = rng.next_gaussian();
    VectorVolume grad(g);
    double val = velocity_regularizer_with_gradient(v, grad);
    CHECK(val == doctest::Approx(velocity_regularizer(v)).epsilon(1e-12));

    const double h = 1e-6;
    SplitMix64 pick(32);
    for (int probe = 0; probe < 12; ++probe) {
        int a = static_cast<int>(pick.next_u64() % 3);
        std::size_t i = pick.next_u64() % g.voxels();
        VectorVolume vp = v, vm = v;
        vp.comp[a][i] += h;
        vm.comp[a][i] -= h;
        double fd = (velocity_regularizer(vp) - velocity_regularizer(vm)) / (2 * h);
        CHECK(grad.comp[a][i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("group loss breakdown is consistent and permutation invariant")
{
    GridInfo g = make_grid({10, 10, 10}, {2, 2, 2});
    Group group = make_test_group(g, 3, 41, false);
    auto vel = random_velocities(g, 3, 43, 1.0);
    LossSettings s;
    s.lambda = 0.7;
    s.window_radius = 2;
    s.squaring_steps = 5;

    LossBreakdown b = total_loss(group, vel, s);
    CHECK(b.total == doctest::Approx(-b.similarity_term + s.lambda * b.regularizer_term)
                         .epsilon(1e-12));
    CHECK(b.masked_voxel_count > 0);

    // permute members and velocities together: identical total
    Group p;
    p.members.push_back(group.members[2]);
    p.members.push_back(group.members[0]);
    p.members.push_back(group.members[1]);
    std::vector<VectorVolume> pv = {vel[2], vel[0], vel[1]};
    LossBreakdown pb = total_loss(p, pv, s);
    CHECK(pb.total == b.total); // bitwise, by order-canonical reductions
}

TEST_CASE("group loss gradient matches finite differences without masking")
{
    GridInfo g = make_grid({12, 12, 12}, {2, 2, 2});
    Group group = make_test_group(g, 3, 51, true);
    auto vel = random_velocities(g, 3, 53, 0.8);
    LossSettings s;
    s.lambda = 1.0;
    s.window_radius = 2;
    s.squaring_steps = 4;

    auto grads = loss_gradient(group, vel, s);
    REQUIRE(grads.size() == 3);

    SplitMix64 pick(54);
    double num = 0.0, den = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        int mem = static_cast<int>(pick.next_u64() % 3);
        int axis = static_cast<int>(pick.next_u64() % 3);
        std::size_t vox = pick.next_u64() % g.voxels();
        double fd = oracle::fd_loss_derivative(group, vel, s, mem, axis, vox, 1e-4);
        double an = grads[mem].comp[axis][vox];
        num += (fd - an) * (fd - an);
        den += fd * fd;
    }
    CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den));
}

TEST_CASE("group loss gradient matches finite differences with a fixed region")
{
    GridInfo g = make_grid({12, 12, 12}, {1.5, 1.5, 1.5});
    Group group = make_test_group(g, 3, 61, false);
    auto vel = random_velocities(g, 3, 63, 0.8);
    Mask region = blob_mask(g, 64);
    LossSettings s;
    s.lambda = 0.0;
    s.window_radius = 2;
    s.squaring_steps = 4;

    LossEvaluation ev = evaluate_group_loss(group, vel, s, true, nullptr, &region);
    REQUIRE(ev.gradients.size() == 3);
    CHECK(ev.breakdown.masked_voxel_count == region.count());

    SplitMix64 pick(65);
    double num = 0.0, den = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        int mem = static_cast<int>(pick.next_u64() % 3);
        int axis = static_cast<int>(pick.next_u64() % 3);
        std::size_t vox = pick.next_u64() % g.voxels();
        double fd = oracle::fd_loss_derivative(group, vel, s, mem, axis, vox, 1e-4, &region);
        double an = ev.gradients[mem].comp[axis][vox];
        num += (fd - an) * (fd - an);
        den += fd * fd;
    }
    CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den));
}

TEST_CASE("residual base velocities shift the expansion point")
{
    // Evaluating at (base, v) must equal evaluating at (0, base + v).
    GridInfo g = make_grid({10, 10, 10}, {2, 2, 2});
    Group group = make_test_group(g, 2, 71, true);
    auto base = random_velocities(g, 2, 73, 1.0);
    auto vel = random_velocities(g, 2, 74, 0.5);
    LossSettings s;
    s.window_radius = 2;
    s.squaring_steps = 5;

    std::vector<VectorVolume> summed;
    for (int i = 0; i < 2; ++i) {
        VectorVolume t(g);
        for (int a = 0; a < 3; ++a)
            for (std::size_t j = 0; j < g.voxels(); ++j)
                t.comp[a][j] = base[i].comp[a][j] + vel[i].comp[a][j];
        summed.push_back(std::move(t));
    }
    LossEvaluation with_base = evaluate_group_loss(group, vel, s, false, &base);
    LossEvaluation direct = evaluate_group_loss(group, summed, s, false);
    CHECK(with_base.breakdown.total == doctest::Approx(direct.breakdown.total).epsilon(1e-14));
}

TEST_CASE("disjoint masks raise the empty-intersection error")
{
    GridInfo g = make_grid({8, 8, 8}, {1, 1, 1});
    Group group;
    for (int i = 0; i < 2; ++i) {
        Volume img = random_volume(g, 80 + i, 50.0, 10.0);
        Mask m(g, std::uint8_t{0});
        for (int z = 0; z < 8; ++z)
            for (int y = 0; y < 8; ++y)
                for (int x = i * 5; x < i * 5 + 3; ++x)
                    m.data[g.index(x, y, z)] = 1;
        group.members.push_back({std::move(img), std::move(m), std::nullopt});
    }
    std::vector<VectorVolume> vel = {VectorVolume(g), VectorVolume(g)};
    LossSettings s;
    CHECK_THROWS_AS(total_loss(group, vel, s), EmptyMask);
}

TEST_CASE("group validation rejects undersized and mismatched groups")
{
    GridInfo g = make_grid({6, 6, 6}, {1, 1, 1});
    Group solo;
    solo.members.push_back({Volume(g), Mask(g, std::uint8_t{1}), std::nullopt});
    CHECK_THROWS_AS(validate_group(solo), InvalidArgument);

    Group mixed;
    mixed.members.push_back({Volume(g), Mask(g, std::uint8_t{1}), std::nullopt});
    GridInfo g2 = make_grid({6, 6, 7}, {1, 1, 1});
    mixed.members.push_back({Volume(g2), Mask(g2, std::uint8_t{1}), std::nullopt});
    CHECK_THROWS_AS(validate_group(mixed), GridMismatch);
}
