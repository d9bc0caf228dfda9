#include "groupreg.h"

#include "core/parallel.hpp"
#include "io/config_io.hpp"
#include "io/nifti.hpp"
#include "loss/group_loss.hpp"
#include "metrics/metrics.hpp"
#include "optim/registration.hpp"
#include "synth/synth.hpp"
#include "transform/svf.hpp"

#include <cstring>
#include <new>
#include <string>
#include <vector>

using namespace groupreg;

struct grg_volume {
    Volume v;
};
struct grg_field {
    VectorVolume f;
};
struct grg_config {
    RegistrationConfig c;
};
struct grg_group {
    Group g;
};
struct grg_result {
    std::vector<grg_field> velocities;
    std::vector<grg_field> displacements;
    std::vector<StageTrace> traces;
    LossBreakdown final_loss;
    double wall_seconds = 0.0;
};
struct grg_synth {
    std::vector<grg_volume> images, masks, labels;
    std::vector<grg_field> true_fields;
    grg_volume phantom_image, phantom_labels, phantom_head;
};
struct grg_report {
    MetricsReport r;
};

namespace {

thread_local std::string tl_error;

template <typename F>
grg_status wrap(F&& fn) noexcept
{
    try {
        fn();
        return GRG_OK;
    } catch (const InvalidArgument& e) {
        tl_error = e.what();
        return GRG_ERR_INVALID;
    } catch (const NumericFailure& e) {
        tl_error = e.what();
        return GRG_ERR_NUMERIC;
    } catch (const Error& e) {
        // grid mismatches, empty masks, I/O problems
        tl_error = e.what();
        return GRG_ERR_DATA;
    } catch (const std::bad_alloc&) {
        tl_error = "out of memory";
        return GRG_ERR_NUMERIC;
    } catch (const std::exception& e) {
        tl_error = e.what();
        return GRG_ERR_NUMERIC;
    }
}

void require_handle(const void* p, const char* what)
{
    if (!p)
        throw InvalidArgument(std::string(what) + ": null handle");
}

Mask to_mask(const Volume& v)
{
    Mask m(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        m.data[i] = v.data[i] != 0.0;
    return m;
}

NiftiDatatype to_datatype(int code)
{
    switch (code) {
    case 2:
        return NiftiDatatype::kUint8;
    case 4:
        return NiftiDatatype::kInt16;
    case 8:
        return NiftiDatatype::kInt32;
    case 16:
        return NiftiDatatype::kFloat32;
    case 64:
        return NiftiDatatype::kFloat64;
    default:
        throw InvalidArgument("unsupported datatype code " + std::to_string(code));
    }
}

char* dup_string(const std::string& s)
{
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

GridInfo grid_from(const int dims[3], const double spacing[3])
{
    if (!dims || !spacing)
        throw InvalidArgument("null dims/spacing");
    return make_grid({dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]});
}

} // namespace

extern "C" {

const char* grg_version(void)
{
    return "1.0.0";
}

const char* grg_last_error(void)
{
    return tl_error.c_str();
}

void grg_free_string(char* s)
{
    delete[] s;
}

void grg_set_threads(int n)
{
    set_thread_count(n);
}

int grg_get_threads(void)
{
    return thread_count();
}

/* ---- volumes ------------------------------------------------------ */

grg_status grg_volume_create(const int dims[3], const double spacing[3],
                             const double* data_or_null, grg_volume** out)
{
    return wrap([&] {
        require_handle(out, "grg_volume_create");
        GridInfo g = grid_from(dims, spacing);
        auto* h = new grg_volume;
        if (data_or_null) {
            std::vector<double> data(data_or_null, data_or_null + g.voxels());
            h->v = Volume(g, std::move(data));
        } else {
            h->v = Volume(g);
        }
        *out = h;
    });
}

grg_status grg_volume_read(const char* path, grg_volume** out)
{
    return wrap([&] {
        require_handle(path, "grg_volume_read");
        require_handle(out, "grg_volume_read");
        auto* h = new grg_volume;
        try {
            h->v = read_volume(path);
        } catch (...) {
            delete h;
            throw;
        }
        *out = h;
    });
}

grg_status grg_volume_write(const char* path, const grg_volume* vol, int datatype)
{
    return wrap([&] {
        require_handle(path, "grg_volume_write");
        require_handle(vol, "grg_volume_write");
        write_volume(path, vol->v, to_datatype(datatype));
    });
}

void grg_volume_free(grg_volume* vol)
{
    delete vol;
}

void grg_volume_dims(const grg_volume* vol, int dims[3])
{
    for (int a = 0; a < 3; ++a)
        dims[a] = vol->v.grid.dims[a];
}

void grg_volume_spacing(const grg_volume* vol, double spacing[3])
{
    for (int a = 0; a < 3; ++a)
        spacing[a] = vol->v.grid.spacing[a];
}

size_t grg_volume_size(const grg_volume* vol)
{
    return vol->v.data.size();
}

const double* grg_volume_data(const grg_volume* vol)
{
    return vol->v.data.data();
}

double* grg_volume_data_mut(grg_volume* vol)
{
    return vol->v.data.data();
}

/* ---- fields ------------------------------------------------------- */

grg_status grg_field_create(const int dims[3], const double spacing[3], grg_field** out)
{
    return wrap([&] {
        require_handle(out, "grg_field_create");
        *out = new grg_field{VectorVolume(grid_from(dims, spacing))};
    });
}

grg_status grg_field_read(const char* path, grg_field** out)
{
    return wrap([&] {
        require_handle(path, "grg_field_read");
        require_handle(out, "grg_field_read");
        *out = new grg_field{read_field(path)};
    });
}

grg_status grg_field_write(const char* path, const grg_field* field, int datatype)
{
    return wrap([&] {
        require_handle(path, "grg_field_write");
        require_handle(field, "grg_field_write");
        write_field(path, field->f, to_datatype(datatype));
    });
}

void grg_field_free(grg_field* field)
{
    delete field;
}

void grg_field_dims(const grg_field* field, int dims[3])
{
    for (int a = 0; a < 3; ++a)
        dims[a] = field->f.grid.dims[a];
}

void grg_field_spacing(const grg_field* field, double spacing[3])
{
    for (int a = 0; a < 3; ++a)
        spacing[a] = field->f.grid.spacing[a];
}

size_t grg_field_size(const grg_field* field)
{
    return field->f.grid.voxels();
}

const double* grg_field_data(const grg_field* field, int component)
{
    if (component < 0 || component > 2)
        return nullptr;
    return field->f.comp[component].data();
}

double* grg_field_data_mut(grg_field* field, int component)
{
    if (component < 0 || component > 2)
        return nullptr;
    return field->f.comp[component].data();
}

/* ---- transform utilities ------------------------------------------ */

grg_status grg_warp_image(const grg_volume* img, const grg_field* u, grg_volume** out)
{
    return wrap([&] {
        require_handle(img, "grg_warp_image");
        require_handle(u, "grg_warp_image");
        require_handle(out, "grg_warp_image");
        *out = new grg_volume{warp(img->v, DisplacementField(u->f))};
    });
}

grg_status grg_warp_labels(const grg_volume* labels, const grg_field* u, grg_volume** out)
{
    return wrap([&] {
        require_handle(labels, "grg_warp_labels");
        require_handle(u, "grg_warp_labels");
        require_handle(out, "grg_warp_labels");
        *out = new grg_volume{warp_labels(labels->v, DisplacementField(u->f))};
    });
}

grg_status grg_warp_binary(const grg_volume* mask, const grg_field* u, grg_volume** out)
{
    return wrap([&] {
        require_handle(mask, "grg_warp_binary");
        require_handle(u, "grg_warp_binary");
        require_handle(out, "grg_warp_binary");
        Mask warped = warp_mask(to_mask(mask->v), DisplacementField(u->f));
        *out = new grg_volume{mask_to_volume(warped)};
    });
}

grg_status grg_exponentiate(const grg_field* v, int squaring_steps, grg_field** out)
{
    return wrap([&] {
        require_handle(v, "grg_exponentiate");
        require_handle(out, "grg_exponentiate");
        *out = new grg_field{exponentiate(v->f, squaring_steps).u};
    });
}

grg_status grg_mean_volume(const grg_volume* const* vols, int n, grg_volume** out)
{
    return wrap([&] {
        require_handle(vols, "grg_mean_volume");
        require_handle(out, "grg_mean_volume");
        std::vector<Volume> in;
        in.reserve(n);
        for (int i = 0; i < n; ++i) {
            require_handle(vols[i], "grg_mean_volume");
            in.push_back(vols[i]->v);
        }
        *out = new grg_volume{mean_image(in)};
    });
}

grg_status grg_intersect_masks(const grg_volume* const* masks, int n, grg_volume** out)
{
    return wrap([&] {
        require_handle(masks, "grg_intersect_masks");
        require_handle(out, "grg_intersect_masks");
        std::vector<Mask> in;
        in.reserve(n);
        for (int i = 0; i < n; ++i) {
            require_handle(masks[i], "grg_intersect_masks");
            in.push_back(to_mask(masks[i]->v));
        }
        *out = new grg_volume{mask_to_volume(common_mask(in))};
    });
}

/* ---- config -------------------------------------------------------- */

grg_config* grg_config_default(void)
{
    return new (std::nothrow) grg_config{default_config()};
}

grg_status grg_config_read(const char* path, grg_config** out)
{
    return wrap([&] {
        require_handle(path, "grg_config_read");
        require_handle(out, "grg_config_read");
        *out = new grg_config{read_config(path)};
    });
}

grg_status grg_config_to_json(const grg_config* cfg, char** out)
{
    return wrap([&] {
        require_handle(cfg, "grg_config_to_json");
        require_handle(out, "grg_config_to_json");
        *out = dup_string(config_to_json(cfg->c));
    });
}

void grg_config_free(grg_config* cfg)
{
    delete cfg;
}

/* ---- groups and registration --------------------------------------- */

grg_group* grg_group_create(void)
{
    return new (std::nothrow) grg_group;
}

grg_status grg_group_add_member(grg_group* group, const grg_volume* image,
                                const grg_volume* mask, const grg_volume* labels)
{
    return wrap([&] {
        require_handle(group, "grg_group_add_member");
        require_handle(image, "grg_group_add_member");
        require_handle(mask, "grg_group_add_member");
        GroupMember m;
        m.image = image->v;
        m.mask = to_mask(mask->v);
        if (labels)
            m.labels = labels->v;
        require_same_grid(m.image.grid, m.mask.grid, "grg_group_add_member");
        if (m.labels)
            require_same_grid(m.image.grid, m.labels->grid, "grg_group_add_member");
        group->g.members.push_back(std::move(m));
    });
}

int grg_group_size(const grg_group* group)
{
    return group ? group->g.size() : 0;
}

void grg_group_free(grg_group* group)
{
    delete group;
}

grg_status grg_register_group(const grg_group* group, const grg_config* cfg,
                              grg_progress_fn progress_or_null, void* user,
                              grg_result** out)
{
    return wrap([&] {
        require_handle(group, "grg_register_group");
        require_handle(cfg, "grg_register_group");
        require_handle(out, "grg_register_group");
        ProgressFn progress;
        if (progress_or_null) {
            progress = [progress_or_null, user](int stage, int iter,
                                                const LossBreakdown& b) {
                progress_or_null(stage, iter, b.total, user);
            };
        }
        RegistrationResult r = register_multistage(group->g, cfg->c, progress);
        auto* h = new grg_result;
        h->velocities.reserve(r.velocities.size());
        for (auto& v : r.velocities)
            h->velocities.push_back(grg_field{std::move(v)});
        h->displacements.reserve(r.displacements.size());
        for (auto& d : r.displacements)
            h->displacements.push_back(grg_field{std::move(d.u)});
        h->traces = std::move(r.stage_traces);
        h->final_loss = r.final_loss;
        h->wall_seconds = r.wall_seconds;
        *out = h;
    });
}

int grg_result_member_count(const grg_result* res)
{
    return res ? static_cast<int>(res->velocities.size()) : 0;
}

int grg_result_stage_count(const grg_result* res)
{
    return res ? static_cast<int>(res->traces.size()) : 0;
}

const grg_field* grg_result_velocity(const grg_result* res, int member)
{
    if (!res || member < 0 || member >= static_cast<int>(res->velocities.size()))
        return nullptr;
    return &res->velocities[member];
}

const grg_field* grg_result_displacement(const grg_result* res, int member)
{
    if (!res || member < 0 || member >= static_cast<int>(res->displacements.size()))
        return nullptr;
    return &res->displacements[member];
}

void grg_result_final_loss(const grg_result* res, double* total, double* similarity,
                           double* regularizer)
{
    if (!res)
        return;
    if (total)
        *total = res->final_loss.total;
    if (similarity)
        *similarity = res->final_loss.similarity_term;
    if (regularizer)
        *regularizer = res->final_loss.regularizer_term;
}

double grg_result_wall_seconds(const grg_result* res)
{
    return res ? res->wall_seconds : 0.0;
}

int grg_result_iterations(const grg_result* res, int stage)
{
    if (!res || stage < 0 || stage >= static_cast<int>(res->traces.size()))
        return 0;
    return res->traces[stage].iterations;
}

int grg_result_trace_length(const grg_result* res, int stage)
{
    if (!res || stage < 0 || stage >= static_cast<int>(res->traces.size()))
        return 0;
    return static_cast<int>(res->traces[stage].records.size());
}

grg_status grg_result_trace_entry(const grg_result* res, int stage, int index,
                                  int* iteration, double* loss, double* best_loss)
{
    return wrap([&] {
        require_handle(res, "grg_result_trace_entry");
        if (stage < 0 || stage >= static_cast<int>(res->traces.size()))
            throw InvalidArgument("grg_result_trace_entry: stage out of range");
        const auto& recs = res->traces[stage].records;
        if (index < 0 || index >= static_cast<int>(recs.size()))
            throw InvalidArgument("grg_result_trace_entry: index out of range");
        if (iteration)
            *iteration = recs[index].iteration;
        if (loss)
            *loss = recs[index].loss;
        if (best_loss)
            *best_loss = recs[index].best_loss;
    });
}

void grg_result_free(grg_result* res)
{
    delete res;
}

/* ---- synthetic data ------------------------------------------------- */

grg_status grg_synth_create(const int dims[3], const double spacing[3], int n,
                            double amplitude_mm, double tumor_growth_mm,
                            double intensity_shift, uint64_t seed, grg_synth** out)
{
    return wrap([&] {
        require_handle(out, "grg_synth_create");
        Phantom ph = make_phantom({dims[0], dims[1], dims[2]},
                                  {spacing[0], spacing[1], spacing[2]}, seed);
        GroupParams params;
        params.n = n;
        params.amplitude_mm = amplitude_mm;
        params.tumor_growth_mm = tumor_growth_mm;
        params.intensity_shift = intensity_shift;
        params.seed = seed;
        SyntheticGroup sg = make_group(ph, params);

        auto* h = new grg_synth;
        h->phantom_image = grg_volume{std::move(sg.phantom.image)};
        h->phantom_labels = grg_volume{std::move(sg.phantom.labels)};
        h->phantom_head = grg_volume{mask_to_volume(sg.phantom.head)};
        for (int i = 0; i < n; ++i) {
            auto& m = sg.group.members[i];
            h->images.push_back(grg_volume{std::move(m.image)});
            h->masks.push_back(grg_volume{mask_to_volume(m.mask)});
            h->labels.push_back(grg_volume{std::move(*m.labels)});
            h->true_fields.push_back(grg_field{std::move(sg.true_velocities[i])});
        }
        *out = h;
    });
}

int grg_synth_member_count(const grg_synth* s)
{
    return s ? static_cast<int>(s->images.size()) : 0;
}

const grg_volume* grg_synth_image(const grg_synth* s, int member)
{
    if (!s || member < 0 || member >= static_cast<int>(s->images.size()))
        return nullptr;
    return &s->images[member];
}

const grg_volume* grg_synth_mask(const grg_synth* s, int member)
{
    if (!s || member < 0 || member >= static_cast<int>(s->masks.size()))
        return nullptr;
    return &s->masks[member];
}

const grg_volume* grg_synth_labels(const grg_synth* s, int member)
{
    if (!s || member < 0 || member >= static_cast<int>(s->labels.size()))
        return nullptr;
    return &s->labels[member];
}

const grg_field* grg_synth_true_velocity(const grg_synth* s, int member)
{
    if (!s || member < 0 || member >= static_cast<int>(s->true_fields.size()))
        return nullptr;
    return &s->true_fields[member];
}

const grg_volume* grg_synth_phantom_image(const grg_synth* s)
{
    return s ? &s->phantom_image : nullptr;
}

const grg_volume* grg_synth_phantom_labels(const grg_synth* s)
{
    return s ? &s->phantom_labels : nullptr;
}

const grg_volume* grg_synth_phantom_head(const grg_synth* s)
{
    return s ? &s->phantom_head : nullptr;
}

void grg_synth_free(grg_synth* s)
{
    delete s;
}

/* ---- evaluation ------------------------------------------------------ */

grg_status grg_evaluate(const grg_field* const* fields, int n, const grg_volume* region,
                        const grg_volume* const* warped_images_or_null,
                        const grg_volume* const* warped_labels_or_null, grg_report** out)
{
    return wrap([&] {
        require_handle(fields, "grg_evaluate");
        require_handle(region, "grg_evaluate");
        require_handle(out, "grg_evaluate");
        std::vector<DisplacementField> dfields;
        dfields.reserve(n);
        for (int i = 0; i < n; ++i) {
            require_handle(fields[i], "grg_evaluate");
            dfields.emplace_back(fields[i]->f);
        }
        Mask mask = to_mask(region->v);
        std::vector<Volume> images, labels;
        if (warped_images_or_null) {
            for (int i = 0; i < n; ++i) {
                require_handle(warped_images_or_null[i], "grg_evaluate");
                images.push_back(warped_images_or_null[i]->v);
            }
        }
        if (warped_labels_or_null) {
            for (int i = 0; i < n; ++i) {
                require_handle(warped_labels_or_null[i], "grg_evaluate");
                labels.push_back(warped_labels_or_null[i]->v);
            }
        }
        MetricsReport r = evaluate_group(dfields, mask,
                                         warped_images_or_null ? &images : nullptr,
                                         warped_labels_or_null ? &labels : nullptr);
        *out = new grg_report{std::move(r)};
    });
}

grg_status grg_report_value(const grg_report* rep, grg_metric metric, double* out)
{
    return wrap([&] {
        require_handle(rep, "grg_report_value");
        require_handle(out, "grg_report_value");
        const MetricsReport& r = rep->r;
        switch (metric) {
        case GRG_METRIC_DICE_CSF:
            *out = r.dice_csf;
            break;
        case GRG_METRIC_DICE_GM:
            *out = r.dice_gm;
            break;
        case GRG_METRIC_DICE_WM:
            *out = r.dice_wm;
            break;
        case GRG_METRIC_DICE_TUMOR:
            *out = r.dice_tumor;
            break;
        case GRG_METRIC_MEAN_SSIM:
            *out = r.mean_ssim;
            break;
        case GRG_METRIC_CENTRALITY_MM:
            *out = r.centrality_mm;
            break;
        case GRG_METRIC_CENTRALITY_MEAN_NORM_MM:
            *out = r.centrality_mean_norm_mm;
            break;
        case GRG_METRIC_FOLDING_PERCENT:
            *out = r.folding_percent;
            break;
        case GRG_METRIC_JACOBIAN_SD:
            *out = r.jacobian_sd;
            break;
        case GRG_METRIC_MASKED_VOXELS:
            *out = static_cast<double>(r.masked_voxels);
            break;
        default:
            throw InvalidArgument("grg_report_value: unknown metric");
        }
    });
}

grg_status grg_report_csv(const grg_report* rep, const char* group_id, char** out)
{
    return wrap([&] {
        require_handle(rep, "grg_report_csv");
        require_handle(out, "grg_report_csv");
        MetricsReport r = rep->r;
        if (group_id)
            r.group_id = group_id;
        *out = dup_string(metrics_csv({r}));
    });
}

grg_status grg_report_text(const grg_report* rep, const char* group_id, char** out)
{
    return wrap([&] {
        require_handle(rep, "grg_report_text");
        require_handle(out, "grg_report_text");
        MetricsReport r = rep->r;
        if (group_id)
            r.group_id = group_id;
        *out = dup_string(metrics_text(r));
    });
}

void grg_report_free(grg_report* rep)
{
    delete rep;
}

grg_status grg_wilcoxon(const double* x, const double* y, int k, double* statistic,
                        double* p_value)
{
    return wrap([&] {
        require_handle(x, "grg_wilcoxon");
        require_handle(y, "grg_wilcoxon");
        if (k < 0)
            throw InvalidArgument("grg_wilcoxon: negative length");
        WilcoxonResult r = wilcoxon_signed_rank(std::vector<double>(x, x + k),
                                                std::vector<double>(y, y + k));
        if (statistic)
            *statistic = r.statistic;
        if (p_value)
            *p_value = r.p_value;
    });
}

} // extern "C"
