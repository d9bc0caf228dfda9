// Command-line front end. Talks to the engine exclusively through the
// shared library's C interface.

#include <groupreg.h>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace {

// Exit codes: 0 success, 1 usage, 2 data, 3 numerical failure.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(grg_status st)
{
    switch (st) {
    case GRG_OK:
        return 0;
    case GRG_ERR_INVALID:
        return kExitUsage;
    case GRG_ERR_DATA:
        return kExitData;
    default:
        return kExitNumeric;
    }
}

[[noreturn]] void die(grg_status st, int override_code = -1)
{
    std::fprintf(stderr, "error: %s\n", grg_last_error());
    std::exit(override_code >= 0 ? override_code : exit_code_for(st));
}

[[noreturn]] void die_usage(const std::string& msg)
{
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    std::exit(kExitUsage);
}

void apply_threads(int threads_flag)
{
    int n = 0;
    if (const char* env = std::getenv("GROUPREG_THREADS"))
        n = std::atoi(env);
    if (threads_flag > 0)
        n = threads_flag; // the flag wins over the environment
    grg_set_threads(n);
}

std::array<int, 3> parse_dims(const std::string& s)
{
    std::array<int, 3> dims{};
    if (std::sscanf(s.c_str(), "%d,%d,%d", &dims[0], &dims[1], &dims[2]) == 3)
        return dims;
    int n = 0;
    if (std::sscanf(s.c_str(), "%d", &n) == 1 && std::to_string(n) == s) {
        dims = {n, n, n};
        return dims;
    }
    die_usage("--dims expects N or NX,NY,NZ, got '" + s + "'");
}

std::string member_name(int i, const char* suffix)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "member_%03d_%s.nii.gz", i, suffix);
    return buf;
}

void ensure_out_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        die_usage("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) {
        std::fprintf(stderr, "error: cannot write '%s'\n", path.c_str());
        std::exit(kExitData);
    }
}

struct VolumeDeleter {
    void operator()(grg_volume* v) const { grg_volume_free(v); }
};
struct FieldDeleter {
    void operator()(grg_field* f) const { grg_field_free(f); }
};
using VolumePtr = std::unique_ptr<grg_volume, VolumeDeleter>;
using FieldPtr = std::unique_ptr<grg_field, FieldDeleter>;

VolumePtr load_volume(const std::string& path)
{
    grg_volume* v = nullptr;
    if (grg_status st = grg_volume_read(path.c_str(), &v); st != GRG_OK)
        die(st);
    return VolumePtr(v);
}

FieldPtr load_field(const std::string& path)
{
    grg_field* f = nullptr;
    if (grg_status st = grg_field_read(path.c_str(), &f); st != GRG_OK)
        die(st);
    return FieldPtr(f);
}

void save_volume(const std::string& path, const grg_volume* v, int datatype)
{
    if (grg_status st = grg_volume_write(path.c_str(), v, datatype); st != GRG_OK)
        die(st);
}

void save_field(const std::string& path, const grg_field* f)
{
    if (grg_status st = grg_field_write(path.c_str(), f, 16); st != GRG_OK)
        die(st);
}

/* ---- synth ---------------------------------------------------------- */

int cmd_synth(const std::string& dims_str, double spacing, int n, double amplitude,
              double growth, double shift, std::uint64_t seed, const std::string& out_dir)
{
    auto dims = parse_dims(dims_str);
    ensure_out_dir(out_dir);
    const double sp[3] = {spacing, spacing, spacing};

    grg_synth* synth = nullptr;
    if (grg_status st = grg_synth_create(dims.data(), sp, n, amplitude, growth, shift,
                                         seed, &synth);
        st != GRG_OK)
        die(st);

    namespace fs = std::filesystem;
    fs::path dir(out_dir);
    save_volume((dir / "phantom_image.nii.gz").string(), grg_synth_phantom_image(synth), 16);
    save_volume((dir / "phantom_labels.nii.gz").string(), grg_synth_phantom_labels(synth), 2);
    save_volume((dir / "phantom_head.nii.gz").string(), grg_synth_phantom_head(synth), 2);
    for (int i = 0; i < n; ++i) {
        save_volume((dir / member_name(i, "image")).string(), grg_synth_image(synth, i), 16);
        save_volume((dir / member_name(i, "mask")).string(), grg_synth_mask(synth, i), 2);
        save_volume((dir / member_name(i, "labels")).string(), grg_synth_labels(synth, i), 2);
        save_field((dir / member_name(i, "true_velocity")).string(),
                   grg_synth_true_velocity(synth, i));
    }
    grg_synth_free(synth);
    return 0;
}

/* ---- register ------------------------------------------------------- */

void progress_line(int stage, int iteration, double loss, void*)
{
    std::fprintf(stderr, "PROG stage=%d iter=%d loss=%.12g\n", stage, iteration, loss);
}

int cmd_register(const std::string& config_path, const std::vector<std::string>& images,
                 const std::vector<std::string>& masks, const std::string& out_dir)
{
    if (images.size() != masks.size())
        die_usage("got " + std::to_string(images.size()) + " --image but " +
                  std::to_string(masks.size()) + " --mask; counts must match");
    if (images.size() < 2)
        die_usage("need at least 2 --image/--mask pairs, got " +
                  std::to_string(images.size()));
    ensure_out_dir(out_dir);
    namespace fs = std::filesystem;
    fs::path dir(out_dir);
    const int n = static_cast<int>(images.size());

    grg_config* cfg = nullptr;
    if (config_path.empty()) {
        cfg = grg_config_default();
    } else if (grg_status st = grg_config_read(config_path.c_str(), &cfg); st != GRG_OK) {
        die(st);
    }

    std::vector<VolumePtr> imgs, msks;
    grg_group* group = grg_group_create();
    for (int i = 0; i < n; ++i) {
        imgs.push_back(load_volume(images[i]));
        msks.push_back(load_volume(masks[i]));
        if (grg_status st =
                grg_group_add_member(group, imgs.back().get(), msks.back().get(), nullptr);
            st != GRG_OK)
            die(st);
    }

    grg_result* result = nullptr;
    if (grg_status st = grg_register_group(group, cfg, progress_line, nullptr, &result);
        st != GRG_OK) {
        // any failure inside the solver counts as a registration failure
        die(st, st == GRG_ERR_INVALID ? kExitUsage : kExitNumeric);
    }

    // Per-member fields and warped images, then the implicit-template view.
    std::vector<VolumePtr> warped, warped_masks;
    std::vector<const grg_volume*> warped_raw, warped_mask_raw;
    for (int i = 0; i < n; ++i) {
        const grg_field* vel = grg_result_velocity(result, i);
        const grg_field* disp = grg_result_displacement(result, i);
        save_field((dir / member_name(i, "velocity")).string(), vel);
        save_field((dir / member_name(i, "displacement")).string(), disp);
        grg_volume* w = nullptr;
        if (grg_status st = grg_warp_image(imgs[i].get(), disp, &w); st != GRG_OK)
            die(st);
        warped.emplace_back(w);
        warped_raw.push_back(w);
        save_volume((dir / member_name(i, "warped")).string(), w, 16);
        grg_volume* wm = nullptr;
        if (grg_status st = grg_warp_binary(msks[i].get(), disp, &wm); st != GRG_OK)
            die(st);
        warped_masks.emplace_back(wm);
        warped_mask_raw.push_back(wm);
    }
    grg_volume* mean = nullptr;
    if (grg_status st = grg_mean_volume(warped_raw.data(), n, &mean); st != GRG_OK)
        die(st);
    save_volume((dir / "mean_image.nii.gz").string(), mean, 16);
    grg_volume_free(mean);
    grg_volume* region = nullptr;
    if (grg_status st = grg_intersect_masks(warped_mask_raw.data(), n, &region);
        st != GRG_OK)
        die(st);
    save_volume((dir / "common_mask.nii.gz").string(), region, 2);
    grg_volume_free(region);

    std::string trace = "stage,iteration,loss,best_loss\n";
    for (int s = 0; s < grg_result_stage_count(result); ++s) {
        for (int k = 0; k < grg_result_trace_length(result, s); ++k) {
            int it = 0;
            double loss = 0.0, best = 0.0;
            grg_result_trace_entry(result, s, k, &it, &loss, &best);
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", s, it, loss, best);
            trace += buf;
        }
    }
    write_text_file((dir / "loss_trace.csv").string(), trace);

    char* cfg_json = nullptr;
    if (grg_config_to_json(cfg, &cfg_json) == GRG_OK) {
        write_text_file((dir / "config_used.json").string(), cfg_json);
        grg_free_string(cfg_json);
    }

    double total = 0.0, sim = 0.0, reg = 0.0;
    grg_result_final_loss(result, &total, &sim, &reg);
    std::fprintf(stderr, "final loss=%.12g similarity=%.12g regularizer=%.12g (%.1fs)\n",
                 total, sim, reg, grg_result_wall_seconds(result));

    grg_result_free(result);
    grg_group_free(group);
    grg_config_free(cfg);
    return 0;
}

/* ---- warp ------------------------------------------------------------ */

int cmd_warp(const std::string& image_path, const std::string& labels_path,
             const std::string& field_path, const std::string& out_path)
{
    if (image_path.empty() == labels_path.empty())
        die_usage("pass exactly one of --image (trilinear) or --labels (nearest)");
    FieldPtr field = load_field(field_path);
    VolumePtr input = load_volume(image_path.empty() ? labels_path : image_path);
    grg_volume* out = nullptr;
    grg_status st = image_path.empty() ? grg_warp_labels(input.get(), field.get(), &out)
                                       : grg_warp_image(input.get(), field.get(), &out);
    if (st != GRG_OK)
        die(st);
    save_volume(out_path, out, image_path.empty() ? 2 : 16);
    grg_volume_free(out);
    return 0;
}

/* ---- metrics ---------------------------------------------------------- */

int cmd_metrics(const std::vector<std::string>& field_paths,
                const std::vector<std::string>& label_paths,
                const std::vector<std::string>& image_paths, const std::string& mask_path,
                const std::string& out_path)
{
    const int n = static_cast<int>(field_paths.size());
    if (n < 2)
        die_usage("need at least 2 --field, got " + std::to_string(n));
    if (!label_paths.empty() && static_cast<int>(label_paths.size()) != n)
        die_usage("got " + std::to_string(label_paths.size()) + " --labels for " +
                  std::to_string(n) + " --field; counts must match");
    if (!image_paths.empty() && static_cast<int>(image_paths.size()) != n)
        die_usage("got " + std::to_string(image_paths.size()) + " --image for " +
                  std::to_string(n) + " --field; counts must match");

    std::vector<FieldPtr> fields;
    std::vector<const grg_field*> fields_raw;
    for (const auto& p : field_paths) {
        fields.push_back(load_field(p));
        fields_raw.push_back(fields.back().get());
    }
    VolumePtr mask = load_volume(mask_path);

    // Inputs are member-space volumes; warp them into the mean space with
    // the given fields before evaluating.
    std::vector<VolumePtr> warped_images, warped_labels;
    std::vector<const grg_volume*> warped_images_raw, warped_labels_raw;
    for (int i = 0; i < n; ++i) {
        if (!image_paths.empty()) {
            VolumePtr img = load_volume(image_paths[i]);
            grg_volume* w = nullptr;
            if (grg_status st = grg_warp_image(img.get(), fields_raw[i], &w); st != GRG_OK)
                die(st);
            warped_images.emplace_back(w);
            warped_images_raw.push_back(w);
        }
        if (!label_paths.empty()) {
            VolumePtr lab = load_volume(label_paths[i]);
            grg_volume* w = nullptr;
            if (grg_status st = grg_warp_labels(lab.get(), fields_raw[i], &w); st != GRG_OK)
                die(st);
            warped_labels.emplace_back(w);
            warped_labels_raw.push_back(w);
        }
    }

    grg_report* report = nullptr;
    if (grg_status st = grg_evaluate(fields_raw.data(), n, mask.get(),
                                     image_paths.empty() ? nullptr : warped_images_raw.data(),
                                     label_paths.empty() ? nullptr : warped_labels_raw.data(),
                                     &report);
        st != GRG_OK)
        die(st);

    char* csv = nullptr;
    if (grg_status st = grg_report_csv(report, "group", &csv); st != GRG_OK)
        die(st);
    write_text_file(out_path, csv);
    grg_free_string(csv);

    char* text = nullptr;
    if (grg_report_text(report, "group", &text) == GRG_OK) {
        std::fputs(text, stdout);
        grg_free_string(text);
    }
    grg_report_free(report);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"groupwise diffeomorphic registration of longitudinal volumes"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (overrides GROUPREG_THREADS; 0 = all cores)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic group with ground truth");
    std::string dims_str = "48";
    double spacing = 2.0, amplitude = 6.0, growth = 0.0, shift = 0.0;
    int n = 3;
    std::uint64_t seed = 1;
    std::string out_dir;
    synth->add_option("--dims", dims_str, "grid size, N or NX,NY,NZ")->capture_default_str();
    synth->add_option("--spacing", spacing, "voxel spacing in mm")->capture_default_str();
    synth->add_option("--n", n, "number of members")->capture_default_str();
    synth->add_option("--amplitude", amplitude, "deformation amplitude in mm")
        ->capture_default_str();
    synth->add_option("--growth", growth, "tumor radial growth spread in mm")
        ->capture_default_str();
    synth->add_option("--shift", shift, "tumor intensity shift, fraction of range")
        ->capture_default_str();
    synth->add_option("--seed", seed, "random seed")->capture_default_str();
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* reg = app.add_subcommand("register", "groupwise registration to the implicit mean space");
    std::string config_path;
    std::vector<std::string> images, masks;
    std::string reg_out;
    reg->add_option("--config", config_path, "JSON config (defaults when omitted)");
    reg->add_option("--image", images, "member image (repeat n times, order names the outputs)");
    reg->add_option("--mask", masks, "member normal-tissue mask (repeat, parallel to --image)");
    reg->add_option("--out", reg_out, "output directory")->required();

    auto* warp = app.add_subcommand("warp", "apply a displacement field to one volume");
    std::string warp_image, warp_labels_path, warp_field, warp_out;
    warp->add_option("--image", warp_image, "scalar image (trilinear)");
    warp->add_option("--labels", warp_labels_path, "label map (nearest semantics)");
    warp->add_option("--field", warp_field, "displacement field")->required();
    warp->add_option("--out", warp_out, "output path")->required();

    auto* metrics = app.add_subcommand("metrics", "evaluation battery over fields and volumes");
    std::vector<std::string> m_fields, m_labels, m_images;
    std::string m_mask, m_out;
    metrics->add_option("--field", m_fields, "displacement field (repeat n times)");
    metrics->add_option("--labels", m_labels, "member label map (repeat, warped before scoring)");
    metrics->add_option("--image", m_images, "member image (repeat, warped before scoring)");
    metrics->add_option("--mask", m_mask, "evaluation region (the common mask H)")->required();
    metrics->add_option("--out", m_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    apply_threads(threads);

    if (synth->parsed())
        return cmd_synth(dims_str, spacing, n, amplitude, growth, shift, seed, out_dir);
    if (reg->parsed())
        return cmd_register(config_path, images, masks, reg_out);
    if (warp->parsed())
        return cmd_warp(warp_image, warp_labels_path, warp_field, warp_out);
    if (metrics->parsed())
        return cmd_metrics(m_fields, m_labels, m_images, m_mask, m_out);
    return kExitUsage;
}
