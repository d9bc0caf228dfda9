#include "metrics/metrics.hpp"

#include "core/boxsum.hpp"
#include "core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace groupreg {

namespace {

bool has_class(double v, int class_id)
{
    return std::llround(v) == class_id;
}

double quiet_nan()
{
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace

double dice(const Volume& a, const Volume& b, int class_id)
{
    require_same_grid(a.grid, b.grid, "dice");
    std::size_t ca = 0, cb = 0, both = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        bool ia = has_class(a.data[i], class_id);
        bool ib = has_class(b.data[i], class_id);
        ca += ia;
        cb += ib;
        both += ia && ib;
    }
    if (ca + cb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(ca + cb);
}

double group_dice(const std::vector<Volume>& warped_labels, int class_id)
{
    const int n = static_cast<int>(warped_labels.size());
    if (n < 2)
        throw InvalidArgument("group_dice: needs at least 2 label maps");
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            sum += dice(warped_labels[i], warped_labels[j], class_id);
            ++pairs;
        }
    }
    return sum / pairs;
}

double ssim_masked(const Volume& a, const Volume& b, const Mask& mask)
{
    require_same_grid(a.grid, b.grid, "ssim_masked");
    require_same_grid(a.grid, mask.grid, "ssim_masked");
    if (mask.count() == 0)
        throw EmptyMask("ssim_masked: empty mask");
    const auto& g = a.grid;
    const std::size_t n = g.voxels();
    constexpr int kRadius = 3; // 7^3 window
    constexpr double kK1 = 0.01, kK2 = 0.03;

    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.data[i])
            continue;
        vmin = std::min({vmin, a.data[i], b.data[i]});
        vmax = std::max({vmax, a.data[i], b.data[i]});
    }
    const double range = vmax - vmin;
    if (range == 0.0)
        return 1.0;
    const double c1 = (kK1 * range) * (kK1 * range);
    const double c2 = (kK2 * range) * (kK2 * range);

    std::vector<double> aa(n), bb(n), ab(n);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            aa[i] = a.data[i] * a.data[i];
            bb[i] = b.data[i] * b.data[i];
            ab[i] = a.data[i] * b.data[i];
        }
    });
    auto sum_a = box_sum(g, a.data, kRadius);
    auto sum_b = box_sum(g, b.data, kRadius);
    auto sum_aa = box_sum(g, aa, kRadius);
    auto sum_bb = box_sum(g, bb, kRadius);
    auto sum_ab = box_sum(g, ab, kRadius);

    double total = parallel_sum(n, [&](std::size_t lo, std::size_t hi) {
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            if (!mask.data[i])
                continue;
            double cnt = window_count(g, i, kRadius);
            double mu_a = sum_a[i] / cnt;
            double mu_b = sum_b[i] / cnt;
            double va = sum_aa[i] / cnt - mu_a * mu_a;
            double vb = sum_bb[i] / cnt - mu_b * mu_b;
            double cov = sum_ab[i] / cnt - mu_a * mu_b;
            acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
        }
        return acc;
    });
    return total / static_cast<double>(mask.count());
}

namespace {

void validate_fields(const std::vector<DisplacementField>& fields, const Mask& mask,
                     const char* what)
{
    if (fields.size() < 2)
        throw InvalidArgument(std::string(what) + ": needs at least 2 fields");
    for (const auto& f : fields)
        require_same_grid(f.grid(), mask.grid, what);
    if (mask.count() == 0)
        throw EmptyMask(std::string(what) + ": empty mask");
}

} // namespace

double centrality(const std::vector<DisplacementField>& fields, const Mask& mask)
{
    validate_fields(fields, mask, "centrality");
    const int n = static_cast<int>(fields.size());
    const std::size_t nvox = mask.grid.voxels();
    double total = parallel_sum(nvox, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> vals(n);
        double acc = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
            if (!mask.data[j])
                continue;
            double sq = 0.0;
            for (int a = 0; a < 3; ++a) {
                for (int i = 0; i < n; ++i)
                    vals[i] = fields[i].u.comp[a][j];
                double m = symmetric_sum(vals.data(), n) / n;
                sq += m * m;
            }
            acc += std::sqrt(sq);
        }
        return acc;
    });
    return total / static_cast<double>(mask.count());
}

double centrality_mean_norm(const std::vector<DisplacementField>& fields, const Mask& mask)
{
    validate_fields(fields, mask, "centrality");
    const int n = static_cast<int>(fields.size());
    const std::size_t nvox = mask.grid.voxels();
    std::vector<double> member_means(n);
    for (int i = 0; i < n; ++i) {
        double total = parallel_sum(nvox, [&](std::size_t lo, std::size_t hi) {
            double acc = 0.0;
            for (std::size_t j = lo; j < hi; ++j) {
                if (!mask.data[j])
                    continue;
                double sq = 0.0;
                for (int a = 0; a < 3; ++a) {
                    double v = fields[i].u.comp[a][j];
                    sq += v * v;
                }
                acc += std::sqrt(sq);
            }
            return acc;
        });
        member_means[i] = total / static_cast<double>(mask.count());
    }
    return symmetric_sum(member_means.data(), n) / n;
}

Smoothness smoothness(const JacobianMap& jac, const Mask& mask)
{
    require_same_grid(jac.det.grid, mask.grid, "smoothness");
    if (mask.count() == 0)
        throw EmptyMask("smoothness: empty mask");
    const double m = static_cast<double>(mask.count());
    std::size_t folded = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < jac.det.data.size(); ++i) {
        if (!mask.data[i])
            continue;
        double j = jac.det.data[i];
        folded += j <= 0.0;
        sum += j;
    }
    const double mean = sum / m;
    double ss = 0.0;
    for (std::size_t i = 0; i < jac.det.data.size(); ++i) {
        if (!mask.data[i])
            continue;
        double d = jac.det.data[i] - mean;
        ss += d * d;
    }
    Smoothness out;
    out.folding_percent = 100.0 * static_cast<double>(folded) / m;
    out.jacobian_sd = std::sqrt(ss / m);
    return out;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size())
        throw InvalidArgument("wilcoxon: paired samples must have equal length");
    const int k = static_cast<int>(x.size());
    if (k < 2 || k > 25)
        throw InvalidArgument("wilcoxon: supports 2..25 pairs (exact regime)");

    struct Diff {
        double mag;
        int sign;
    };
    std::vector<Diff> diffs;
    for (int i = 0; i < k; ++i) {
        double d = x[i] - y[i];
        if (!std::isfinite(d))
            throw InvalidArgument("wilcoxon: differences must be finite");
        if (d != 0.0)
            diffs.push_back({std::abs(d), d > 0 ? 1 : -1});
    }
    const int m = static_cast<int>(diffs.size());
    if (m == 0)
        throw InvalidArgument("wilcoxon: all differences are zero, test undefined");

    std::sort(diffs.begin(), diffs.end(),
              [](const Diff& a, const Diff& b) { return a.mag < b.mag; });

    // Mid-ranks over ties; doubled so every rank is an exact integer.
    std::vector<int> rank2(m);
    for (int i = 0; i < m;) {
        int j = i;
        while (j < m && diffs[j].mag == diffs[i].mag)
            ++j;
        int sum2 = (i + 1 + j) * (j - i); // 2 * sum of positions i+1..j
        int mid2 = sum2 / (j - i);        // doubled mid-rank, always integral
        for (int q = i; q < j; ++q)
            rank2[q] = mid2;
        i = j;
    }

    long long wplus2 = 0, total2 = 0;
    for (int i = 0; i < m; ++i) {
        total2 += rank2[i];
        if (diffs[i].sign > 0)
            wplus2 += rank2[i];
    }
    long long wminus2 = total2 - wplus2;
    long long wobs2 = std::min(wplus2, wminus2);

    // Distribution of W+ (doubled units) over all 2^m sign assignments.
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    for (int i = 0; i < m; ++i) {
        for (long long s = total2; s >= rank2[i]; --s)
            count[s] += count[s - rank2[i]];
    }
    double favourable = 0.0;
    for (long long s = 0; s <= total2; ++s) {
        if (std::min(s, total2 - s) <= wobs2)
            favourable += count[s];
    }
    WilcoxonResult out;
    out.statistic = static_cast<double>(wobs2) / 2.0;
    out.p_value = favourable / std::ldexp(1.0, m);
    return out;
}

MetricsReport evaluate_group(const std::vector<DisplacementField>& fields, const Mask& region,
                             const std::vector<Volume>* warped_images,
                             const std::vector<Volume>* warped_labels)
{
    validate_fields(fields, region, "evaluate_group");
    const int n = static_cast<int>(fields.size());
    MetricsReport r;
    r.n_members = n;
    r.masked_voxels = region.count();

    if (warped_labels) {
        if (static_cast<int>(warped_labels->size()) != n)
            throw InvalidArgument("evaluate_group: one label map per field required");
        // Restrict the voxel sets to the region: outside voxels get a
        // class id no tissue uses.
        std::vector<Volume> restricted;
        restricted.reserve(n);
        for (const auto& l : *warped_labels) {
            require_same_grid(l.grid, region.grid, "evaluate_group");
            Volume v = l;
            for (std::size_t i = 0; i < v.data.size(); ++i) {
                if (!region.data[i])
                    v.data[i] = -1.0;
            }
            restricted.push_back(std::move(v));
        }
        r.dice_csf = group_dice(restricted, 1);
        r.dice_gm = group_dice(restricted, 2);
        r.dice_wm = group_dice(restricted, 3);
        r.dice_tumor = group_dice(restricted, 4);
    } else {
        r.dice_csf = r.dice_gm = r.dice_wm = r.dice_tumor = quiet_nan();
    }

    if (warped_images) {
        if (static_cast<int>(warped_images->size()) != n)
            throw InvalidArgument("evaluate_group: one image per field required");
        for (const auto& w : *warped_images)
            require_same_grid(w.grid, region.grid, "evaluate_group");
        Volume mean = mean_image(*warped_images);
        std::vector<double> vals(n);
        for (int i = 0; i < n; ++i)
            vals[i] = ssim_masked((*warped_images)[i], mean, region);
        r.mean_ssim = symmetric_sum(vals.data(), n) / n;
    } else {
        r.mean_ssim = quiet_nan();
    }

    r.centrality_mm = centrality(fields, region);
    r.centrality_mean_norm_mm = centrality_mean_norm(fields, region);

    std::vector<double> fold(n), sd(n);
    for (int i = 0; i < n; ++i) {
        Smoothness s = smoothness(jacobian_determinant(fields[i]), region);
        fold[i] = s.folding_percent;
        sd[i] = s.jacobian_sd;
    }
    r.folding_percent = symmetric_sum(fold.data(), n) / n;
    r.jacobian_sd = symmetric_sum(sd.data(), n) / n;
    return r;
}

MetricsReport evaluate_group(const Group& group, const std::vector<DisplacementField>& fields)
{
    validate_group(group);
    const int n = group.size();
    if (static_cast<int>(fields.size()) != n)
        throw InvalidArgument("evaluate_group: one field per member required");

    std::vector<Volume> warped_images;
    std::vector<Mask> warped_masks;
    warped_images.reserve(n);
    warped_masks.reserve(n);
    for (int i = 0; i < n; ++i) {
        warped_images.push_back(warp(group.members[i].image, fields[i]));
        warped_masks.push_back(warp_mask(group.members[i].mask, fields[i]));
    }
    Mask region = common_mask(warped_masks);
    if (region.count() == 0)
        throw EmptyMask("evaluate_group: warped masks do not overlap");

    bool all_labels = true;
    for (const auto& m : group.members)
        all_labels = all_labels && m.labels.has_value();
    std::vector<Volume> warped_labels;
    if (all_labels) {
        warped_labels.reserve(n);
        for (int i = 0; i < n; ++i)
            warped_labels.push_back(warp_labels(*group.members[i].labels, fields[i]));
    }
    return evaluate_group(fields, region, &warped_images,
                          all_labels ? &warped_labels : nullptr);
}

namespace {

std::string format_value(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string metrics_csv(const std::vector<MetricsReport>& rows)
{
    std::ostringstream os;
    os << "group,n_members,dice_csf,dice_gm,dice_wm,dice_tumor,mean_ssim,"
          "centrality_mm,centrality_mean_norm_mm,folding_percent,jacobian_sd,"
          "masked_voxels\n";
    auto emit = [&](const MetricsReport& r) {
        os << r.group_id << ',' << r.n_members << ',' << format_value(r.dice_csf) << ','
           << format_value(r.dice_gm) << ',' << format_value(r.dice_wm) << ','
           << format_value(r.dice_tumor) << ',' << format_value(r.mean_ssim) << ','
           << format_value(r.centrality_mm) << ','
           << format_value(r.centrality_mean_norm_mm) << ','
           << format_value(r.folding_percent) << ',' << format_value(r.jacobian_sd) << ','
           << r.masked_voxels << '\n';
    };
    for (const auto& r : rows)
        emit(r);
    if (rows.size() > 1) {
        MetricsReport agg;
        agg.group_id = "mean";
        double nr = static_cast<double>(rows.size());
        for (const auto& r : rows) {
            agg.n_members += r.n_members;
            agg.dice_csf += r.dice_csf / nr;
            agg.dice_gm += r.dice_gm / nr;
            agg.dice_wm += r.dice_wm / nr;
            agg.dice_tumor += r.dice_tumor / nr;
            agg.mean_ssim += r.mean_ssim / nr;
            agg.centrality_mm += r.centrality_mm / nr;
            agg.centrality_mean_norm_mm += r.centrality_mean_norm_mm / nr;
            agg.folding_percent += r.folding_percent / nr;
            agg.jacobian_sd += r.jacobian_sd / nr;
            agg.masked_voxels += r.masked_voxels;
        }
        agg.n_members = static_cast<int>(agg.n_members / rows.size());
        agg.masked_voxels = agg.masked_voxels / rows.size();
        emit(agg);
    }
    return os.str();
}

std::string metrics_text(const MetricsReport& r)
{
    std::ostringstream os;
    auto line = [&](const char* name, double v) {
        char buf[80];
        std::snprintf(buf, sizeof(buf), "  %-26s %.6g\n", name, v);
        os << buf;
    };
    os << "group " << r.group_id << " (" << r.n_members << " members, "
       << r.masked_voxels << " masked voxels)\n";
    line("dice CSF", r.dice_csf);
    line("dice GM", r.dice_gm);
    line("dice WM", r.dice_wm);
    line("dice tumor", r.dice_tumor);
    line("mean SSIM", r.mean_ssim);
    line("centrality [mm]", r.centrality_mm);
    line("centrality (mean norm)", r.centrality_mean_norm_mm);
    line("foldings [%]", r.folding_percent);
    line("Jacobian SD", r.jacobian_sd);
    return os.str();
}

} // namespace groupreg
