#include "core/rng.hpp"
#include "core/volume.hpp"
#include "metrics/metrics.hpp"
#include "synth/synth.hpp"
#include "transform/svf.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace groupreg;

namespace {

Volume random_labels(const GridInfo& g, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Volume v(g);
    for (double& x : v.data)
        x = static_cast<double>(rng.next_u64() % 5);
    return v;
}

} // namespace

TEST_CASE("dice handles hand-checkable overlaps")
{
    GridInfo g = make_grid({4, 1, 1}, {1, 1, 1});
    Volume a(g, std::vector<double>{1, 1, 0, 2});
    Volume b(g, std::vector<double>{1, 0, 0, 2});
    CHECK(dice(a, b, 1) == doctest::Approx(2.0 * 1 / (2 + 1)));
    CHECK(dice(a, b, 2) == doctest::Approx(1.0));
    CHECK(dice(a, b, 3) == 1.0); // absent from both: perfect by convention
    CHECK(dice(a, b, 0) == doctest::Approx(2.0 * 1 / (1 + 2)));
}

TEST_CASE("group_dice equals the pairwise enumeration oracle")
{
    GridInfo g = make_grid({9, 8, 7}, {1, 1, 1});
    std::vector<Volume> labels;
    for (int i = 0; i < 4; ++i)
        labels.push_back(random_labels(g, 100 + i));
    for (int cls = 0; cls <= 4; ++cls)
        CHECK(group_dice(labels, cls) == oracle::pairwise_group_dice(labels, cls));
    CHECK_THROWS_AS(group_dice({labels[0]}, 1), InvalidArgument);
}

TEST_CASE("ssim equals the direct-formula oracle")
{
    GridInfo g = make_grid({12, 11, 10}, {2, 2, 2});
    SplitMix64 rng(7);
    Volume a(g), b(g);
    for (std::size_t i = 0; i < g.voxels(); ++i) {
        a.data[i] = 200.0 + 50.0 * rng.next_gaussian();
        b.data[i] = 0.8 * a.data[i] + 20.0 * rng.next_gaussian();
    }
    Mask full(g, std::uint8_t{1});
    CHECK(std::abs(ssim_masked(a, b, full) - oracle::naive_ssim(a, b, full)) <= 1e-10);

    Mask half(g, std::uint8_t{0});
    for (std::size_t i = 0; i < g.voxels() / 2; ++i)
        half.data[i] = 1;
    CHECK(std::abs(ssim_masked(a, b, half) - oracle::naive_ssim(a, b, half)) <= 1e-10);

    // identical images: SSIM is exactly 1
    CHECK(ssim_masked(a, a, full) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("centrality is zero for centered fields and positive otherwise")
{
    GridInfo g = make_grid({8, 8, 8}, {2, 2, 2});
    VectorVolume u1 = random_smooth_velocity(g, 2.0, 5.0, 11);
    VectorVolume u2(g), u3(g);
    for (int a = 0; a < 3; ++a)
        for (std::size_t j = 0; j < g.voxels(); ++j) {
            u2.comp[a][j] = -0.5 * u1.comp[a][j];
            u3.comp[a][j] = -0.5 * u1.comp[a][j];
        }
    std::vector<DisplacementField> centered;
    centered.emplace_back(std::move(u1));
    centered.emplace_back(std::move(u2));
    centered.emplace_back(std::move(u3));
    Mask full(g, std::uint8_t{1});
    CHECK(centrality(centered, full) <= 1e-12);
    CHECK(centrality_mean_norm(centered, full) > 0.1);

    std::vector<DisplacementField> biased;
    VectorVolume w1(g), w2(g);
    for (std::size_t j = 0; j < g.voxels(); ++j) {
        w1.comp[0][j] = 1.0;
        w2.comp[0][j] = 2.0;
    }
    biased.emplace_back(std::move(w1));
    biased.emplace_back(std::move(w2));
    CHECK(centrality(biased, full) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(centrality_mean_norm(biased, full) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("smoothness reports folding percent and jacobian spread")
{
    GridInfo g = make_grid({10, 10, 10}, {1, 1, 1});
    // Compression along x strong enough to fold in the middle stripe:
    // u_x = -c * sin-like bump gives J = 1 + du_x/dx < 0 where the slope
    // is steeper than -1.
    VectorVolume u(g);
    for (int z = 0; z < 10; ++z)
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x)
                u.comp[0][g.index(x, y, z)] = (x == 5) ? -3.0 : 0.0;
    JacobianMap jm = jacobian_determinant(DisplacementField(std::move(u)));
    Mask full(g, std::uint8_t{1});
    Smoothness s = smoothness(jm, full);
    CHECK(s.folding_percent > 0.0);
    CHECK(s.jacobian_sd > 0.0);

    // identity: no folding, zero spread
    JacobianMap id = jacobian_determinant(DisplacementField(VectorVolume(g)));
    Smoothness si = smoothness(id, full);
    CHECK(si.folding_percent == 0.0);
    CHECK(si.jacobian_sd == 0.0);
}

TEST_CASE("wilcoxon matches exhaustive enumeration on random data")
{
    SplitMix64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        int m = 8;
        std::vector<double> x(m), y(m);
        for (int i = 0; i < m; ++i) {
            // quantized so ties actually occur
            x[i] = std::floor(rng.next_uniform() * 8.0) / 4.0;
            y[i] = std::floor(rng.next_uniform() * 8.0) / 4.0;
        }
        bool all_zero = true;
        for (int i = 0; i < m; ++i)
            all_zero = all_zero && x[i] == y[i];
        if (all_zero)
            continue;
        WilcoxonResult fast = wilcoxon_signed_rank(x, y);
        oracle::WilcoxonOracle slow = oracle::exhaustive_wilcoxon(x, y);
        CHECK(fast.statistic == slow.statistic);
        CHECK(fast.p_value == slow.p_value);
    }
}

TEST_CASE("wilcoxon hits the textbook extremes")
{
    // All 15 differences positive and distinct: W- = 0, the most extreme
    // configuration; two-sided exact p = 2 * 2^-15.
    std::vector<double> x(15), y(15);
    for (int i = 0; i < 15; ++i) {
        x[i] = i + 1.0;
        y[i] = 0.0;
    }
    WilcoxonResult r = wilcoxon_signed_rank(x, y);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == doctest::Approx(2.0 * std::pow(2.0, -15.0)).epsilon(1e-14));

    CHECK_THROWS_AS(wilcoxon_signed_rank({1.0, 2.0}, {1.0, 2.0}), InvalidArgument);
    CHECK_THROWS_AS(wilcoxon_signed_rank({1.0}, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("evaluate_group on identity fields scores perfect overlap")
{
    Phantom ph = make_phantom({16, 16, 16}, {2, 2, 2}, 3);
    Group group;
    for (int i = 0; i < 3; ++i)
        group.members.push_back({ph.image, ph.head, ph.labels});
    std::vector<DisplacementField> fields;
    for (int i = 0; i < 3; ++i)
        fields.emplace_back(VectorVolume(ph.image.grid));

    MetricsReport r = evaluate_group(group, fields);
    CHECK(r.n_members == 3);
    CHECK(r.dice_csf == 1.0);
    CHECK(r.dice_gm == 1.0);
    CHECK(r.dice_wm == 1.0);
    CHECK(r.mean_ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.centrality_mm == 0.0);
    CHECK(r.folding_percent == 0.0);
    CHECK(r.jacobian_sd == 0.0);
    CHECK(r.masked_voxels > 0);
}

TEST_CASE("dice outside the evaluation region is ignored")
{
    GridInfo g = make_grid({6, 6, 6}, {1, 1, 1});
    Volume la(g, 0.0), lb(g, 0.0);
    // agree inside the region, disagree outside
    Mask region(g, std::uint8_t{0});
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 6; ++y)
            for (int z = 0; z < 6; ++z)
                region.data[g.index(x, y, z)] = 1;
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            for (int z = 0; z < 6; ++z) {
                la.at(x, y, z) = 2.0;
                lb.at(x, y, z) = (x < 3) ? 2.0 : 3.0;
            }
    std::vector<DisplacementField> fields;
    fields.emplace_back(VectorVolume(g));
    fields.emplace_back(VectorVolume(g));
    std::vector<Volume> labels = {la, lb};
    MetricsReport r = evaluate_group(fields, region, nullptr, &labels);
    CHECK(r.dice_gm == 1.0); // the x>=3 disagreement is outside the region
    CHECK(std::isnan(r.mean_ssim));
}

TEST_CASE("metrics csv emits one row per group plus a mean row")
{
    MetricsReport a;
    a.group_id = "g0";
    a.n_members = 3;
    a.dice_csf = a.dice_gm = a.dice_wm = a.dice_tumor = 0.5;
    a.mean_ssim = 0.9;
    a.centrality_mm = 0.1;
    a.centrality_mean_norm_mm = 1.0;
    a.folding_percent = 0.0;
    a.jacobian_sd = 0.2;
    a.masked_voxels = 1000;
    MetricsReport b = a;
    b.group_id = "g1";
    b.dice_gm = 0.7;

    std::string csv = metrics_csv({a, b});
    CHECK(csv.find("group,n_members,dice_csf,dice_gm,dice_wm,dice_tumor,mean_ssim,"
                   "centrality_mm,centrality_mean_norm_mm,folding_percent,jacobian_sd,"
                   "masked_voxels\n") == 0);
    CHECK(csv.find("\ng0,3,") != std::string::npos);
    CHECK(csv.find("\ng1,3,") != std::string::npos);
    CHECK(csv.find("\nmean,3,") != std::string::npos);
    CHECK(csv.find("0.59999999999999998") != std::string::npos); // mean of 0.5, 0.7

    std::string single = metrics_csv({a});
    CHECK(single.find("\nmean,") == std::string::npos);
}
