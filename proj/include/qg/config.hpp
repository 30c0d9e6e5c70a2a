#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qg/lattice.hpp"

namespace qg {

/// Parsed run configuration. `raw` keeps the exact document for the manifest
/// echo, so a config round-trips losslessly.
struct RunConfig {
    LatticeSpec lattice;
    DisorderModel disorder;
    std::string output_directory = ".";
    std::vector<std::string> warnings;
    std::shared_ptr<nlohmann::json> raw;

    /// Command parameter access rooted at the command's section; throws
    /// ConfigError with a field path on missing/invalid entries.
    const nlohmann::json& section(const std::string& command) const;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

} // namespace qg
