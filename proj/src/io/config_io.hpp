#pragma once

#include "optim/registration.hpp"

#include <string>

namespace groupreg {

// JSON config file -> validated RegistrationConfig. Absent keys take the
// documented defaults; unknown keys are rejected by name; parse errors
// report line and column.
RegistrationConfig read_config(const std::string& path);
RegistrationConfig parse_config(const std::string& text, const std::string& origin);

// Canonical serialization of a config (the defaults-filled effective
// form), suitable for re-reading.
std::string config_to_json(const RegistrationConfig& cfg);

} // namespace groupreg
