#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "blood/experiment.hpp"

namespace blood {

/// Reads an INI run configuration. Sections: experiment, data, ood, model,
/// train, blood, detectors, analysis. Missing keys keep their defaults;
/// unknown sections or keys and unparsable values raise ConfigError.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// The fully resolved configuration in the same INI format, every key spelled out.
std::string to_ini(const ExperimentConfig& config);

}  // namespace blood
