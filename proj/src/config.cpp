#include "qg/config.hpp"

#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

namespace qg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json& need(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) fail(path + "." + key, "missing");
    return j.at(key);
}

double need_number(const json& j, const std::string& key, const std::string& path) {
    const json& v = need(j, key, path);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

Potential parse_potential(const json& j, const std::string& path) {
    const std::string type = need(j, "type", path).get<std::string>();
    if (type == "zero") return Potential::zero();
    if (type == "constant") return Potential::constant(need_number(j, "value", path));
    if (type == "piecewise") {
        std::vector<double> breaks, values;
        for (const auto& b : need(j, "breakpoints", path)) breaks.push_back(b.get<double>());
        for (const auto& v : need(j, "values", path)) values.push_back(v.get<double>());
        return Potential::piecewise(std::move(breaks), std::move(values));
    }
    if (type == "grid") {
        std::vector<double> values;
        for (const auto& v : need(j, "values", path)) values.push_back(v.get<double>());
        return Potential::grid(std::move(values));
    }
    fail(path + ".type", "unknown potential type '" + type + "'");
}

LatticeSpec parse_lattice(const json& j, const std::string& path) {
    LatticeSpec spec;
    spec.dimension = int(need_number(j, "dimension", path));
    const json& edges = need(j, "edges", path);
    if (!edges.is_array()) fail(path + ".edges", "expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string epath = path + ".edges[" + std::to_string(i) + "]";
        EdgeProfile profile;
        profile.length = need_number(edges[i], "length", epath);
        profile.potential = parse_potential(need(edges[i], "potential", epath), epath + ".potential");
        if (edges[i].contains("integration_steps"))
            profile.integration_steps = edges[i].at("integration_steps").get<int>();
        spec.edge_profiles.push_back(std::move(profile));
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return spec;
}

DisorderModel parse_disorder(const json& j, const std::string& path) {
    DisorderModel model;
    const json& density = need(j, "density", path);
    const std::string type = need(density, "type", path + ".density").get<std::string>();
    if (type == "uniform") {
        model.density = DisorderModel::Density::uniform;
    } else if (type == "truncated_gaussian") {
        model.density = DisorderModel::Density::truncated_gaussian;
        model.mu = need_number(density, "mu", path + ".density");
        model.sigma = need_number(density, "sigma", path + ".density");
    } else {
        fail(path + ".density.type", "unknown density type '" + type + "'");
    }
    model.alpha_minus = need_number(density, "alpha_minus", path + ".density");
    model.alpha_plus = need_number(density, "alpha_plus", path + ".density");
    model.coupling = need_number(j, "coupling", path);
    model.master_seed = need(j, "master_seed", path).get<std::uint64_t>();
    try {
        model.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return model;
}

} // namespace

const nlohmann::json& RunConfig::section(const std::string& command) const {
    if (!raw->contains(command))
        throw ConfigError(command + ": missing command section in the config");
    return raw->at(command);
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    config.raw = std::make_shared<nlohmann::json>();
    try {
        *config.raw = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const json& root = *config.raw;
    config.lattice = parse_lattice(need(root, "lattice", "config"), "config.lattice");
    config.disorder = parse_disorder(need(root, "disorder", "config"), "config.disorder");
    if (root.contains("output") && root.at("output").contains("directory"))
        config.output_directory = root.at("output").at("directory").get<std::string>();
    return config;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

} // namespace qg
