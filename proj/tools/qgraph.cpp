#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qg/bandedge.hpp"
#include "qg/config.hpp"
#include "qg/csv.hpp"
#include "qg/fmm.hpp"
#include "qg/kernels/kernels.hpp"
#include "qg/parallel.hpp"
#include "qg/spectra.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunContext {
    qg::RunConfig config;
    std::string command;
    fs::path out_dir;
    unsigned threads = 1;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
    json results;
};

double need_num(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || !j.at(key).is_number())
        throw qg::ConfigError(path + "." + key + ": missing or not a number");
    return j.at(key).get<double>();
}

std::vector<double> window_of(const json& j, const std::string& path) {
    if (!j.contains("window") || !j.at("window").is_array() || j.at("window").size() != 2)
        throw qg::ConfigError(path + ".window: expected [lo, hi]");
    return {j.at("window")[0].get<double>(), j.at("window")[1].get<double>()};
}

std::string out_file(RunContext& ctx, const std::string& name) {
    const fs::path p = ctx.out_dir / name;
    ctx.outputs.push_back(p.string());
    return p.string();
}

qg::GraphPoint parse_point(const json& j, const std::string& path) {
    qg::GraphPoint p;
    if (!j.contains("m") || !j.at("m").is_array())
        throw qg::ConfigError(path + ".m: expected coordinate array");
    for (std::size_t k = 0; k < j.at("m").size() && k < 3; ++k) p.m[k] = j.at("m")[k].get<int>();
    p.direction = j.value("j", 0);
    p.t = need_num(j, "t", path);
    return p;
}

// ------------------------------------------------------------------ commands

void cmd_bands(RunContext& ctx) {
    const json& p = ctx.config.section("bands");
    const auto window = window_of(p, "bands");
    const double resolution = need_num(p, "resolution", "bands");
    const auto scan =
        qg::band_edges(ctx.config.lattice, ctx.config.disorder, window[0], window[1], resolution);

    qg::CsvWriter csv(out_file(ctx, "bands.csv"),
                      {"E", "indicator", "lower_factor", "upper_factor", "in_dirichlet_window"});
    for (const auto& row : scan.grid)
        csv.write_row({row.energy, double(row.indicator), row.lower_factor, row.upper_factor,
                       row.in_dirichlet_window ? 1.0 : 0.0});

    json bands = json::array(), windows = json::array();
    for (const auto& b : scan.bands) bands.push_back({b.lo, b.hi});
    for (const auto& w : scan.dirichlet_windows) windows.push_back({w.lo, w.hi});
    ctx.results["bands"] = bands;
    ctx.results["dirichlet_windows"] = windows;
}

void cmd_eigs(RunContext& ctx) {
    const json& p = ctx.config.section("eigs");
    const auto window = window_of(p, "eigs");
    const qg::Box box{int(need_num(p, "box_radius", "eigs")), ctx.config.lattice.dimension};
    const double lambda = p.value("lambda", ctx.config.disorder.coupling);
    const auto sample_index = std::uint64_t(p.value("sample_index", 0));
    const int grid_points = p.value("grid_points", 512);

    const auto disorder = qg::sample_disorder(ctx.config.disorder, box, sample_index);

    // split the requested window around Dirichlet exclusion zones
    std::vector<qg::GraphEigenpair> pairs;
    const auto exclusions =
        qg::dirichlet_exclusion_windows(ctx.config.lattice, window[0], window[1]);
    double cursor = window[0];
    std::vector<qg::Interval> segments;
    for (const auto& w : exclusions) {
        if (w.lo > cursor) segments.push_back({cursor, w.lo});
        cursor = std::max(cursor, w.hi);
    }
    if (cursor < window[1]) segments.push_back({cursor, window[1]});
    for (const auto& seg : segments) {
        auto found = qg::find_eigenvalues(ctx.config.lattice, box, disorder, lambda, seg.lo, seg.hi,
                                          grid_points);
        for (auto& pair : found) pairs.push_back(std::move(pair));
    }
    for (auto& pair : pairs) qg::reconstruct_eigenfunction(ctx.config.lattice, pair);

    json jpairs = json::array();
    {
        qg::CsvWriter csv(out_file(ctx, "eigenfunctions.csv"), [&] {
            std::vector<std::string> header;
            for (int j = 0; j < ctx.config.lattice.dimension; ++j)
                header.push_back("m" + std::to_string(j + 1));
            header.insert(header.end(), {"j", "t", "value"});
            return header;
        }());
        for (const auto& pair : pairs) {
            json jp;
            jp["energy"] = pair.energy;
            jp["residual"] = pair.residual;
            jp["degenerate"] = pair.degenerate;
            jp["lattice_vector"] = std::vector<double>(
                pair.lattice_vector.data(), pair.lattice_vector.data() + pair.lattice_vector.size());
            json norms = json::array();
            for (const auto& f : pair.edge_functions) {
                json e;
                e["m"] = std::vector<int>(f.m.begin(), f.m.begin() + ctx.config.lattice.dimension);
                e["j"] = f.direction;
                e["sup"] = f.sup_norm;
                e["l2"] = f.l2_norm;
                norms.push_back(e);
                for (std::size_t q = 0; q < f.t.size(); ++q) {
                    std::vector<double> row;
                    for (int j = 0; j < ctx.config.lattice.dimension; ++j)
                        row.push_back(double(f.m[j]));
                    row.insert(row.end(), {double(f.direction), f.t[q], f.value[q]});
                    csv.write_row(row);
                }
            }
            jp["edge_sup_norms"] = norms;
            jpairs.push_back(jp);
        }
    }
    std::ofstream out(out_file(ctx, "eigenpairs.json"));
    out << jpairs.dump(2) << "\n";
    ctx.results["eigenvalue_count"] = pairs.size();
}

void cmd_green(RunContext& ctx) {
    const json& p = ctx.config.section("green");
    const qg::Box box{int(need_num(p, "box_radius", "green")), ctx.config.lattice.dimension};
    const double lambda = p.value("lambda", ctx.config.disorder.coupling);
    const auto sample_index = std::uint64_t(p.value("sample_index", 0));
    const auto disorder = qg::sample_disorder(ctx.config.disorder, box, sample_index);
    if (!p.contains("queries") || !p.at("queries").is_array())
        throw qg::ConfigError("green.queries: expected an array");

    qg::CsvWriter csv(out_file(ctx, "green.csv"),
                      {"E", "src_m1", "src_j", "src_t", "tgt_m1", "tgt_j", "tgt_t", "value"});
    for (std::size_t i = 0; i < p.at("queries").size(); ++i) {
        const std::string path = "green.queries[" + std::to_string(i) + "]";
        const json& q = p.at("queries")[i];
        qg::GreenKernelQuery query;
        query.energy = need_num(q, "energy", path);
        query.source = parse_point(q.at("source"), path + ".source");
        query.target = parse_point(q.at("target"), path + ".target");
        query.box = box;
        const double value = qg::green_kernel(query, ctx.config.lattice, disorder, lambda);
        csv.write_row({query.energy, double(query.source.m[0]), double(query.source.direction),
                       query.source.t, double(query.target.m[0]), double(query.target.direction),
                       query.target.t, value});
    }
}

void cmd_fm(RunContext& ctx) {
    const json& p = ctx.config.section("fm");
    const double energy = need_num(p, "energy", "fm");
    const double s = need_num(p, "s", "fm");
    const qg::Box box{int(need_num(p, "box_radius", "fm")), ctx.config.lattice.dimension};
    const int n_samples = int(need_num(p, "n_samples", "fm"));
    const int max_distance = int(p.value("max_distance", box.radius));

    std::vector<qg::PairSpec> pairs;
    for (int k = 0; k <= max_distance; ++k) {
        qg::PairSpec ps;
        ps.to = {0, 0, 0};
        ps.from = {k, 0, 0};
        pairs.push_back(ps);
    }
    const auto est = qg::fractional_moments(ctx.config.lattice, box, ctx.config.disorder, energy, s,
                                            pairs, n_samples, ctx.threads);
    qg::CsvWriter csv(out_file(ctx, "moments.csv"),
                      {"E", "lambda", "s", "pair_distance", "moment_mean", "std_err"});
    for (const auto& pm : est.pairs)
        csv.write_row({est.energy, est.lambda, est.s, double(pm.distance), pm.mean, pm.std_err});

    const auto decay = qg::fit_decay(est);
    ctx.results["fit"] = {{"amplitude", decay.amplitude},
                          {"rate", decay.rate},
                          {"r_squared", decay.r_squared}};
    ctx.results["capped_count"] = est.capped_count;
    if (est.heavy_tail_warning)
        ctx.warnings.push_back("fm: more than 1% of resolvent entries were capped at 1e12");
}

qg::CriterionConstants constants_from(const json& p, const qg::DisorderModel& model, double s,
                                      RunContext& ctx) {
    if (p.contains("constants")) {
        const json& c = p.at("constants");
        auto k = qg::user_constants(s, need_num(c, "C_s", "criterion.constants"),
                                    need_num(c, "D_s", "criterion.constants"));
        ctx.results["constants"] = {{"C_s", k.c_s}, {"D_s", k.d_s}, {"C_tilde", k.c_tilde},
                                    {"provenance", "user_supplied"}};
        return k;
    }
    const int trials = int(p.value("trials", 10000));
    auto k = qg::estimate_constants(model, s, trials);
    ctx.results["constants"] = {{"C_s", k.c_s},       {"D_s", k.d_s},
                                {"C_tilde", k.c_tilde}, {"provenance", "estimated"},
                                {"trials", k.trials},   {"trace", k.trace}};
    return k;
}

void cmd_criterion(RunContext& ctx) {
    const json& p = ctx.config.section("criterion");
    const double s = need_num(p, "s", "criterion");
    const double beta = need_num(p, "beta", "criterion");
    if (!(s > 0 && s < 0.25))
        ctx.warnings.push_back("criterion: s outside (0, 1/4); proceeding (the decoupling "
                               "requirement is not needed for energy-independent randomness)");
    std::vector<double> energies;
    for (const auto& e : p.at("energies")) energies.push_back(e.get<double>());
    std::vector<double> lambdas;
    if (p.contains("lambdas"))
        for (const auto& l : p.at("lambdas")) lambdas.push_back(l.get<double>());
    else
        lambdas.push_back(ctx.config.disorder.coupling);
    const std::string mode = p.value("mode", "single_point");

    const auto constants = constants_from(p, ctx.config.disorder, s, ctx);

    std::optional<qg::CsvWriter> single, finite;
    if (mode == "single_point" || mode == "both")
        single.emplace(out_file(ctx, "criterion_single.csv"),
                       std::vector<std::string>{"E", "lambda", "criterion_value", "beta", "satisfied"});
    if (mode == "finite_volume" || mode == "both")
        finite.emplace(out_file(ctx, "criterion_finite.csv"),
                       std::vector<std::string>{"E", "lambda", "criterion_value", "beta", "satisfied"});

    for (double lambda : lambdas) {
        qg::DisorderModel model = ctx.config.disorder;
        model.coupling = lambda;
        for (double e : energies) {
            if (single) {
                const auto rep = qg::single_point_criterion(ctx.config.lattice, model, e, s,
                                                            constants, beta);
                single->write_row({e, lambda, rep.value, beta, rep.satisfied ? 1.0 : 0.0});
            }
            if (finite) {
                const qg::Box box{int(need_num(p, "box_radius", "criterion")),
                                  ctx.config.lattice.dimension};
                const auto rep = qg::finite_volume_criterion(
                    ctx.config.lattice, model, box, e, s, constants,
                    int(need_num(p, "n_samples", "criterion")), int(p.value("n_subsets", 16)), beta,
                    ctx.threads);
                finite->write_row({e, lambda, rep.kernel.total, beta, rep.satisfied ? 1.0 : 0.0});
                if (rep.heavy_tail_warning)
                    ctx.warnings.push_back("criterion: heavy-tail warning in the finite-volume run");
            }
        }
    }
}

void cmd_ids(RunContext& ctx) {
    const json& p = ctx.config.section("ids");
    const double e0 = need_num(p, "reference_energy", "ids");
    const int radius = int(need_num(p, "box_radius", "ids"));
    const int n_samples = int(need_num(p, "n_samples", "ids"));
    const json& eps = p.at("eps");
    const auto grid = qg::log_eps_grid(need_num(eps, "lo", "ids.eps"), need_num(eps, "hi", "ids.eps"),
                                       int(eps.value("per_decade", 16)));
    const auto curve = qg::ids_curve(ctx.config.lattice, ctx.config.disorder, e0, radius, n_samples,
                                     grid, ctx.threads);
    qg::CsvWriter csv(out_file(ctx, "ids.csv"), {"epsilon", "ids", "ci"});
    for (const auto& pt : curve.points) csv.write_row({pt.epsilon, pt.n_hat, pt.ci_half_width});
    ctx.results["shift"] = curve.shift;

    double flo = grid.front(), fhi = grid.back();
    if (p.contains("fit_range")) {
        flo = p.at("fit_range")[0].get<double>();
        fhi = p.at("fit_range")[1].get<double>();
    }
    try {
        const auto fit = qg::lifshitz_fit(curve, flo, fhi);
        ctx.results["lifshitz"] = {{"slope", fit.slope},
                                   {"std_err", fit.std_err},
                                   {"r_squared", fit.r_squared},
                                   {"used", fit.used},
                                   {"dropped", fit.dropped}};
    } catch (const qg::InsufficientData& e) {
        ctx.warnings.push_back(std::string("ids: ") + e.what());
    }
}

void cmd_ct(RunContext& ctx) {
    const json& p = ctx.config.section("ct");
    const double energy = need_num(p, "energy", "ct");
    const double lambda = p.value("lambda", ctx.config.disorder.coupling);
    const qg::Box box{int(need_num(p, "box_radius", "ct")), ctx.config.lattice.dimension};
    const int n_samples = int(need_num(p, "n_samples", "ct"));
    std::vector<double> eps_list;
    for (const auto& e : p.at("eps_list")) eps_list.push_back(e.get<double>());

    json rates = json::array();
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        const auto table = qg::combes_thomas_check(ctx.config.lattice, ctx.config.disorder, energy,
                                                   lambda, box, n_samples, eps_list[k], ctx.threads);
        qg::CsvWriter csv(out_file(ctx, "ct_" + std::to_string(k) + ".csv"),
                          {"distance", "max_abs_entry"});
        for (const auto& row : table.rows) csv.write_row({double(row.distance), row.max_abs_entry});
        rates.push_back({{"eps", table.eps},
                         {"rate", table.rate},
                         {"r_squared", table.r_squared},
                         {"kept", table.kept},
                         {"discarded", table.discarded}});
    }
    ctx.results["ct"] = rates;
}

void cmd_converge(RunContext& ctx) {
    const json& p = ctx.config.section("converge");
    const double target = need_num(p, "target_energy", "converge");
    const double lambda = p.value("lambda", ctx.config.disorder.coupling);
    std::vector<int> radii;
    for (const auto& r : p.at("radii")) radii.push_back(r.get<int>());
    const auto rows = qg::convergence_test(ctx.config.lattice, ctx.config.disorder, lambda, target,
                                           radii, p.value("halfwidth", 0.5),
                                           std::uint64_t(p.value("sample_index", 0)),
                                           p.value("grid_points", 128));
    qg::CsvWriter csv(out_file(ctx, "converge.csv"), {"N", "eigenvalue", "diff_from_prev"});
    for (const auto& row : rows)
        csv.write_row({double(row.radius), row.eigenvalue, row.diff_from_prev});
}

void write_manifest(RunContext& ctx, double wall_seconds) {
    json manifest;
    manifest["command"] = ctx.command;
    manifest["config"] = *ctx.config.raw;
    manifest["master_seed"] = ctx.config.disorder.master_seed;
    manifest["threads"] = ctx.threads;
    manifest["version"] = "qgraph 0.1.0";
    manifest["compiler"] = std::string(__VERSION__);
    manifest["kernel_isa"] = qg::kernels::isa_name(qg::kernels::active_isa());
    manifest["wall_time_s"] = wall_seconds;
    manifest["outputs"] = ctx.outputs;
    manifest["warnings"] = ctx.warnings;
    manifest["results"] = ctx.results;
    std::ofstream out(ctx.out_dir / (ctx.command + "_manifest.json"));
    out << manifest.dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral computations for Z^d-periodic quantum graphs with random vertex couplings"};
    std::string config_path, command, out_dir;
    std::optional<std::uint64_t> seed_override;
    unsigned threads = qg::default_thread_count();
    app.add_option("--config", config_path, "Path to the JSON run configuration")->required();
    app.add_option("--command", command,
                   "One of: bands, eigs, green, fm, criterion, ids, ct, converge")
        ->required();
    app.add_option("--out", out_dir, "Output directory (defaults to the config's output.directory)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed override");
    app.add_option("--threads", threads, "Worker threads");
    CLI11_PARSE(app, argc, argv);

    const auto t0 = std::chrono::steady_clock::now();
    RunContext ctx;
    try {
        ctx.config = qg::parse_config_file(config_path);
        if (seed_opt->count()) {
            seed_override = seed_value;
            ctx.config.disorder.master_seed = *seed_override;
            (*ctx.config.raw)["disorder"]["master_seed"] = *seed_override;
        }
        ctx.command = command;
        ctx.threads = std::max(1u, threads);
        ctx.out_dir = out_dir.empty() ? fs::path(ctx.config.output_directory) : fs::path(out_dir);
        fs::create_directories(ctx.out_dir);
        ctx.warnings = ctx.config.warnings;

        if (command == "bands")
            cmd_bands(ctx);
        else if (command == "eigs")
            cmd_eigs(ctx);
        else if (command == "green")
            cmd_green(ctx);
        else if (command == "fm")
            cmd_fm(ctx);
        else if (command == "criterion")
            cmd_criterion(ctx);
        else if (command == "ids")
            cmd_ids(ctx);
        else if (command == "ct")
            cmd_ct(ctx);
        else if (command == "converge")
            cmd_converge(ctx);
        else
            throw qg::ConfigError("unknown command: " + command);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << "\n";
    write_manifest(ctx, wall);
    return 0;
}
