#include "optim/registration.hpp"

#include "core/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace groupreg {

RegistrationConfig default_config()
{
    RegistrationConfig cfg;
    cfg.stages = {StageConfig{1, 300, 0.5}, StageConfig{0, 150, 0.25}};
    return cfg;
}

void validate_config(const RegistrationConfig& cfg)
{
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
        throw InvalidArgument("config: lambda must be a finite scalar >= 0");
    if (cfg.window_radius < 1)
        throw InvalidArgument("config: window_radius must be >= 1");
    if (cfg.squaring_steps < 0 || cfg.squaring_steps > 30)
        throw InvalidArgument("config: squaring_steps must be in [0, 30]");
    if (cfg.stages.empty())
        throw InvalidArgument("config: stages must not be empty");
    for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
        const auto& s = cfg.stages[k];
        if (s.downsample_levels < 0 || s.downsample_levels > 6)
            throw InvalidArgument("config: stages[" + std::to_string(k) +
                                  "].downsample_levels must be in [0, 6]");
        if (s.max_iterations < 0)
            throw InvalidArgument("config: stages[" + std::to_string(k) +
                                  "].max_iterations must be >= 0");
        if (!(s.step_size > 0.0) || !std::isfinite(s.step_size))
            throw InvalidArgument("config: stages[" + std::to_string(k) +
                                  "].step_size must be a finite scalar > 0");
        if (k > 0 && s.downsample_levels > cfg.stages[k - 1].downsample_levels)
            throw InvalidArgument("config: stages must go from coarse to fine "
                                  "(downsample_levels non-increasing)");
    }
    if (!(cfg.first_moment_decay >= 0.0 && cfg.first_moment_decay < 1.0))
        throw InvalidArgument("config: first_moment_decay must be in [0, 1)");
    if (!(cfg.second_moment_decay >= 0.0 && cfg.second_moment_decay < 1.0))
        throw InvalidArgument("config: second_moment_decay must be in [0, 1)");
    if (!(cfg.adam_epsilon > 0.0))
        throw InvalidArgument("config: adam_epsilon must be > 0");
    if (!(cfg.convergence_tolerance >= 0.0))
        throw InvalidArgument("config: convergence_tolerance must be >= 0");
    if (cfg.convergence_window < 1)
        throw InvalidArgument("config: convergence_window must be >= 1");
}

std::vector<VectorVolume> center_velocities(std::vector<VectorVolume> velocities)
{
    const int n = static_cast<int>(velocities.size());
    if (n == 0)
        return velocities;
    const GridInfo& g = velocities.front().grid;
    for (const auto& v : velocities)
        require_same_grid(v.grid, g, "center_velocities");

    const std::size_t nvox = g.voxels();
    for (int a = 0; a < 3; ++a) {
        std::vector<double> mean(nvox);
        parallel_for(nvox, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> vals(n);
            for (std::size_t j = lo; j < hi; ++j) {
                for (int i = 0; i < n; ++i)
                    vals[i] = velocities[i].comp[a][j];
                mean[j] = symmetric_sum(vals.data(), n) / n;
            }
        });
        for (int i = 0; i < n; ++i) {
            auto& c = velocities[i].comp[a];
            parallel_for(nvox, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t j = lo; j < hi; ++j)
                    c[j] -= mean[j];
            });
        }
    }
    return velocities;
}

namespace {

struct AdamState {
    VectorVolume m;
    VectorVolume v;

    explicit AdamState(const GridInfo& g) : m(g), v(g) {}
};

} // namespace

StageResult register_stage(const Group& group, std::vector<VectorVolume> init,
                           const RegistrationConfig& cfg, const StageConfig& stage,
                           const std::vector<VectorVolume>* base, int stage_index,
                           const ProgressFn& progress)
{
    validate_group(group);
    const int n = group.size();
    if (static_cast<int>(init.size()) != n)
        throw InvalidArgument("register_stage: one initial velocity per member required");
    const GridInfo& g = group.grid();
    for (const auto& v : init)
        require_same_grid(v.grid, g, "register_stage");

    const LossSettings settings = cfg.loss_settings();
    std::vector<VectorVolume> vel = center_velocities(std::move(init));

    StageResult out;
    out.velocities = vel;
    out.trace.records.reserve(stage.max_iterations);

    std::vector<AdamState> adam;
    adam.reserve(n);
    for (int i = 0; i < n; ++i)
        adam.emplace_back(g);

    const std::size_t nvox = g.voxels();
    double best = std::numeric_limits<double>::infinity();
    double beta1_t = 1.0, beta2_t = 1.0;

    for (int t = 1; t <= stage.max_iterations; ++t) {
        LossEvaluation ev;
        try {
            ev = evaluate_group_loss(group, vel, settings, true, base);
        } catch (const EmptyMask& e) {
            throw EmptyMask("stage " + std::to_string(stage_index) + " iterate " +
                            std::to_string(t) + ": " + e.what());
        }
        if (progress)
            progress(stage_index, t, ev.breakdown);

        if (ev.breakdown.total < best) {
            best = ev.breakdown.total;
            out.velocities = vel;
            out.best = ev.breakdown;
        }
        out.trace.records.push_back({t, ev.breakdown.total, best});
        out.trace.iterations = t;

        const int w = cfg.convergence_window;
        if (t > w) {
            double prev = out.trace.records[t - 1 - w].best_loss;
            double rel = (prev - best) / std::max(std::abs(prev), 1e-30);
            if (rel < cfg.convergence_tolerance) {
                out.trace.converged = true;
                break;
            }
        }

        beta1_t *= cfg.first_moment_decay;
        beta2_t *= cfg.second_moment_decay;
        const double corr1 = 1.0 / (1.0 - beta1_t);
        const double corr2 = 1.0 / (1.0 - beta2_t);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) {
                auto& mi = adam[i].m.comp[a];
                auto& vi = adam[i].v.comp[a];
                auto& xi = vel[i].comp[a];
                const auto& gi = ev.gradients[i].comp[a];
                parallel_for(nvox, [&](std::size_t lo, std::size_t hi) {
                    for (std::size_t j = lo; j < hi; ++j) {
                        double grad = gi[j];
                        mi[j] = cfg.first_moment_decay * mi[j] +
                                (1.0 - cfg.first_moment_decay) * grad;
                        vi[j] = cfg.second_moment_decay * vi[j] +
                                (1.0 - cfg.second_moment_decay) * grad * grad;
                        double mh = mi[j] * corr1;
                        double vh = vi[j] * corr2;
                        xi[j] -= stage.step_size * mh / (std::sqrt(vh) + cfg.adam_epsilon);
                    }
                });
            }
        }
        vel = center_velocities(std::move(vel));
    }
    return out;
}

namespace {

Group downsample_group(const Group& fine, int levels)
{
    Group g = fine;
    for (auto& m : g.members)
        m.labels.reset(); // stages only need image + mask
    for (int l = 0; l < levels; ++l) {
        for (auto& m : g.members) {
            m.image = downsample2(m.image);
            m.mask = downsample2_mask(m.mask);
        }
    }
    return g;
}

std::vector<VectorVolume> zeros_like(const GridInfo& g, int n)
{
    std::vector<VectorVolume> v;
    v.reserve(n);
    for (int i = 0; i < n; ++i)
        v.emplace_back(g);
    return v;
}

std::vector<VectorVolume> add_fields(const std::vector<VectorVolume>& a,
                                     const std::vector<VectorVolume>& b)
{
    std::vector<VectorVolume> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            for (std::size_t j = 0; j < out[i].comp[c].size(); ++j)
                out[i].comp[c][j] += b[i].comp[c][j];
        }
    }
    return out;
}

} // namespace

RegistrationResult register_multistage(const Group& group, const RegistrationConfig& cfg,
                                       const ProgressFn& progress)
{
    validate_config(cfg);
    validate_group(group);
    const int n = group.size();
    const auto t0 = std::chrono::steady_clock::now();

    RegistrationResult res;
    std::vector<VectorVolume> accum; // total velocity at the current stage grid
    bool have_accum = false;

    for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
        const StageConfig& stage = cfg.stages[k];
        Group stage_group = downsample_group(group, stage.downsample_levels);
        const GridInfo& sg = stage_group.grid();

        std::vector<VectorVolume> base;
        if (have_accum) {
            if (same_grid(accum.front().grid, sg)) {
                base = accum;
            } else {
                base.reserve(n);
                for (const auto& v : accum)
                    base.push_back(upsample_to(v, sg));
            }
        }

        StageResult sr = register_stage(stage_group, zeros_like(sg, n), cfg, stage,
                                        have_accum ? &base : nullptr,
                                        static_cast<int>(k), progress);
        res.stage_traces.push_back(std::move(sr.trace));
        res.iteration_counts.push_back(res.stage_traces.back().iterations);

        accum = have_accum ? add_fields(base, sr.velocities) : std::move(sr.velocities);
        have_accum = true;
    }

    const GridInfo& fine = group.grid();
    if (!same_grid(accum.front().grid, fine)) {
        for (auto& v : accum)
            v = upsample_to(v, fine);
    }
    res.velocities = std::move(accum);
    res.displacements.reserve(n);
    for (int i = 0; i < n; ++i)
        res.displacements.push_back(
            exponentiate(res.velocities[i], cfg.squaring_steps));
    res.final_loss = total_loss(group, res.velocities, cfg.loss_settings());

    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace groupreg
