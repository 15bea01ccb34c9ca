// Command-line front end: build or load a polynomial network, certify it,
// bound the interaction energy flows, partition, and validate by simulation.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "compsys/errors.hpp"
#include "compsys/pipeline.hpp"

namespace {

std::vector<double> parse_levels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw compsys::ConfigError("cannot open levels file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw compsys::ConfigError(std::string("levels file does not parse: ") + e.what());
    }
    if (j.is_object() && j.contains("levels")) j = j["levels"];
    if (!j.is_array()) throw compsys::ConfigError("levels file must hold an array (or {\"levels\": [...]})");
    return j.get<std::vector<double>>();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"certify, bound, and decompose a polynomial dynamical network"};
    app.name("decompose");

    std::string model_arg;
    std::uint64_t seed = 1;
    std::string gamma_arg = "0.6";
    int k = 2;
    std::string mode_arg = "worst";
    std::string levels_path;
    std::string out_dir;
    int samples = 50;
    double horizon = 20.0;
    double dt = 1e-3;
    std::vector<std::string> variant_paths;

    app.add_option("--model", model_arg, "model file, builtin:lv16, or builtin:vdp9")->required();
    app.add_option("--seed", seed, "generator / sampling / clustering seed");
    app.add_option("--gamma", gamma_arg, "domain level (scalar or comma-separated per node)");
    app.add_option("--k", k, "number of sub-networks");
    app.add_option("--mode", mode_arg, "adjacency mode: worst | initial");
    app.add_option("--levels", levels_path, "per-node v(0) file for initial mode");
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--samples", samples, "validation sample count");
    app.add_option("--horizon", horizon, "simulation horizon");
    app.add_option("--dt", dt, "integration step");
    app.add_option("--variant", variant_paths, "levels file for a comparison variant (repeatable)");

    CLI11_PARSE(app, argc, argv);

    try {
        compsys::ScenarioConfig config;
        if (model_arg == "builtin:lv16")
            config.source = compsys::ModelSource::BuiltinLv16;
        else if (model_arg == "builtin:vdp9")
            config.source = compsys::ModelSource::BuiltinVdp9;
        else {
            config.source = compsys::ModelSource::File;
            config.model_path = model_arg;
        }
        config.seed = seed;
        config.k = k;
        config.samples = samples;
        config.horizon = horizon;
        config.dt = dt;
        config.out_dir = out_dir;

        for (size_t pos = 0; pos < gamma_arg.size();) {
            size_t comma = gamma_arg.find(',', pos);
            if (comma == std::string::npos) comma = gamma_arg.size();
            config.gamma.push_back(std::stod(gamma_arg.substr(pos, comma - pos)));
            pos = comma + 1;
        }

        if (mode_arg == "worst")
            config.mode = compsys::AdjacencyMode::WorstCase;
        else if (mode_arg == "initial")
            config.mode = compsys::AdjacencyMode::Initial;
        else
            throw compsys::ConfigError("mode must be 'worst' or 'initial'");
        if (config.mode == compsys::AdjacencyMode::Initial) {
            if (levels_path.empty()) throw compsys::ConfigError("initial mode needs --levels");
            config.initial_levels = parse_levels_file(levels_path);
        }

        for (const auto& path : variant_paths)
            config.variants.push_back({path, parse_levels_file(path)});

        int code = compsys::run(config);
        if (code != 0) std::fprintf(stderr, "decompose: finished with exit code %d\n", code);
        return code;
    } catch (const compsys::Error& e) {
        std::fprintf(stderr, "decompose: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "decompose: %s\n", e.what());
        return 1;
    }
}
