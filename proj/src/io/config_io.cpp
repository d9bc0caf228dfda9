#include "io/config_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace groupreg {

namespace {

using nlohmann::json;

// nlohmann reports byte offsets; convert to line/column for diagnostics.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

[[noreturn]] void bad_field(const std::string& origin, const std::string& what)
{
    throw InvalidArgument(origin + ": " + what);
}

double number_field(const json& j, const std::string& key, const std::string& origin)
{
    if (!j.at(key).is_number())
        bad_field(origin, "'" + key + "' must be a number");
    return j.at(key).get<double>();
}

int integer_field(const json& j, const std::string& key, const std::string& origin)
{
    if (!j.at(key).is_number_integer())
        bad_field(origin, "'" + key + "' must be an integer");
    return j.at(key).get<int>();
}

} // namespace

RegistrationConfig parse_config(const std::string& text, const std::string& origin)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw InvalidArgument(origin + ":" + std::to_string(line) + ":" +
                              std::to_string(col) + ": " + e.what());
    }
    if (!j.is_object())
        bad_field(origin, "top level must be an object");

    static const char* kKnown[] = {"lambda",
                                   "window_radius",
                                   "squaring_steps",
                                   "stages",
                                   "first_moment_decay",
                                   "second_moment_decay",
                                   "adam_epsilon",
                                   "convergence_tolerance",
                                   "convergence_window",
                                   "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : kKnown)
            known = known || it.key() == k;
        if (!known)
            bad_field(origin, "unknown key '" + it.key() + "'");
    }

    RegistrationConfig cfg = default_config();
    if (j.contains("lambda"))
        cfg.lambda = number_field(j, "lambda", origin);
    if (j.contains("window_radius"))
        cfg.window_radius = integer_field(j, "window_radius", origin);
    if (j.contains("squaring_steps"))
        cfg.squaring_steps = integer_field(j, "squaring_steps", origin);
    if (j.contains("first_moment_decay"))
        cfg.first_moment_decay = number_field(j, "first_moment_decay", origin);
    if (j.contains("second_moment_decay"))
        cfg.second_moment_decay = number_field(j, "second_moment_decay", origin);
    if (j.contains("adam_epsilon"))
        cfg.adam_epsilon = number_field(j, "adam_epsilon", origin);
    if (j.contains("convergence_tolerance"))
        cfg.convergence_tolerance = number_field(j, "convergence_tolerance", origin);
    if (j.contains("convergence_window"))
        cfg.convergence_window = integer_field(j, "convergence_window", origin);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            bad_field(origin, "'seed' must be a non-negative integer");
        auto s = j.at("seed").get<long long>();
        if (s < 0)
            bad_field(origin, "'seed' must be a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("stages")) {
        if (!j.at("stages").is_array())
            bad_field(origin, "'stages' must be an array");
        cfg.stages.clear();
        std::size_t idx = 0;
        for (const auto& sj : j.at("stages")) {
            std::string where = "stages[" + std::to_string(idx) + "]";
            if (!sj.is_object())
                bad_field(origin, where + " must be an object");
            for (auto it = sj.begin(); it != sj.end(); ++it) {
                if (it.key() != "downsample_levels" && it.key() != "max_iterations" &&
                    it.key() != "step_size")
                    bad_field(origin, "unknown key '" + where + "." + it.key() + "'");
            }
            StageConfig sc;
            if (sj.contains("downsample_levels"))
                sc.downsample_levels = integer_field(sj, "downsample_levels", origin);
            if (sj.contains("max_iterations"))
                sc.max_iterations = integer_field(sj, "max_iterations", origin);
            if (sj.contains("step_size"))
                sc.step_size = number_field(sj, "step_size", origin);
            cfg.stages.push_back(sc);
            ++idx;
        }
    }
    validate_config(cfg);
    return cfg;
}

RegistrationConfig read_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoFailure("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string config_to_json(const RegistrationConfig& cfg)
{
    json stages = json::array();
    for (const auto& s : cfg.stages) {
        stages.push_back({{"downsample_levels", s.downsample_levels},
                          {"max_iterations", s.max_iterations},
                          {"step_size", s.step_size}});
    }
    json j = {{"lambda", cfg.lambda},
              {"window_radius", cfg.window_radius},
              {"squaring_steps", cfg.squaring_steps},
              {"stages", stages},
              {"first_moment_decay", cfg.first_moment_decay},
              {"second_moment_decay", cfg.second_moment_decay},
              {"adam_epsilon", cfg.adam_epsilon},
              {"convergence_tolerance", cfg.convergence_tolerance},
              {"convergence_window", cfg.convergence_window},
              {"seed", cfg.seed}};
    return j.dump(2) + "\n";
}

} // namespace groupreg
