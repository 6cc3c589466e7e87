// SPDX-License-Identifier: Apache-2.0
#include "adaguide/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "adaguide/adjoint.hpp"
#include "adaguide/errors.hpp"
#include "adaguide/guarantees.hpp"
#include "adaguide/hjb.hpp"
#include "adaguide/io.hpp"
#include "adaguide/kernels.hpp"
#include "adaguide/parallel.hpp"

#ifndef ADAGUIDE_VERSION
#define ADAGUIDE_VERSION "0.0.0"
#endif

namespace adaguide {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* tool_version() noexcept { return ADAGUIDE_VERSION; }

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "model",      "out",        "alpha",         "seed",         "steps",
        "paths",      "workers",    "method",        "antithetic",   "classes",
        "cutoff",     "w",          "deltas",        "ito_paths",    "h",
        "half_width", "tol_g",      "pde_dt",        "slice_times",  "iterations",
        "learning_rate", "optimizer", "clip_norm",   "init_w",       "lambda_clip",
        "drop_guidance_hessian",    "grad_w_quantile_clip"};
    return keys;
}

namespace {

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw InvalidInput("config key '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw InvalidInput("config key '" + key + "' must be finite");
    return d;
}

std::uint64_t as_unsigned(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw InvalidInput("config key '" + key + "' must be a non-negative integer");
}

std::string as_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw InvalidInput("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw InvalidInput("config key '" + key + "' must be true or false");
    return v.get<bool>();
}

std::vector<double> as_doubles(const json& v, const std::string& key) {
    if (!v.is_array()) throw InvalidInput("config key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(as_double(e, key));
    return out;
}

std::vector<int> as_ints(const json& v, const std::string& key) {
    if (!v.is_array()) throw InvalidInput("config key '" + key + "' must be an array");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) throw InvalidInput("config key '" + key + "' must hold integers");
        out.push_back(e.get<int>());
    }
    return out;
}

Method parse_method(const std::string& s) {
    if (s == "euler") return Method::euler;
    if (s == "heun") return Method::heun;
    throw InvalidInput("method must be euler or heun");
}

Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    throw InvalidInput("optimizer must be sgd or adam");
}

std::size_t default_paths(const std::string& command) {
    if (command == "verify") return 10000;
    if (command == "train") return 256;
    return 1000;
}

}  // namespace

void apply_config(RunConfig& cfg, const json& obj) {
    if (!obj.is_object()) throw InvalidInput("config must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& [key, v] : obj.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw InvalidInput("unknown config key '" + key + "'");
        if (key == "model") cfg.model = as_string(v, key);
        else if (key == "out") cfg.out = as_string(v, key);
        else if (key == "alpha") cfg.alpha = as_double(v, key);
        else if (key == "seed") cfg.seed = as_unsigned(v, key);
        else if (key == "steps") cfg.steps = as_unsigned(v, key);
        else if (key == "paths") cfg.paths = as_unsigned(v, key);
        else if (key == "workers") cfg.workers = as_unsigned(v, key);
        else if (key == "method") cfg.method = as_string(v, key);
        else if (key == "antithetic") cfg.antithetic = as_bool(v, key);
        else if (key == "classes") cfg.classes = as_ints(v, key);
        else if (key == "cutoff") cfg.cutoff = as_double(v, key);
        else if (key == "w") cfg.w = as_double(v, key);
        else if (key == "deltas") cfg.deltas = as_doubles(v, key);
        else if (key == "ito_paths") cfg.ito_paths = as_unsigned(v, key);
        else if (key == "h") cfg.h = as_double(v, key);
        else if (key == "half_width") cfg.half_width = as_double(v, key);
        else if (key == "tol_g") cfg.tol_g = as_double(v, key);
        else if (key == "pde_dt") cfg.pde_dt = as_double(v, key);
        else if (key == "slice_times") cfg.slice_times = as_doubles(v, key);
        else if (key == "iterations") cfg.iterations = as_unsigned(v, key);
        else if (key == "learning_rate") cfg.learning_rate = as_double(v, key);
        else if (key == "optimizer") cfg.optimizer = as_string(v, key);
        else if (key == "clip_norm") cfg.clip_norm = as_double(v, key);
        else if (key == "init_w") cfg.init_w = as_double(v, key);
        else if (key == "lambda_clip") cfg.lambda_clip = as_double(v, key);
        else if (key == "drop_guidance_hessian") cfg.drop_guidance_hessian = as_bool(v, key);
        else if (key == "grad_w_quantile_clip") cfg.grad_w_quantile_clip = as_double(v, key);
    }
}

RunConfig resolve_config(const std::string& command, const std::string& config_file,
                         const json& overrides) {
    static const std::vector<std::string> commands{"verify", "hjb", "train", "simulate",
                                                   "export-figure1"};
    if (std::find(commands.begin(), commands.end(), command) == commands.end())
        throw InvalidInput("unknown command '" + command + "'");
    RunConfig cfg;
    cfg.command = command;
    cfg.workers = default_workers();
    if (!config_file.empty()) {
        json file;
        try {
            file = json::parse(read_file(config_file));
        } catch (const json::exception& e) {
            throw InvalidInput("config file is not valid JSON: " + std::string(e.what()));
        }
        apply_config(cfg, file);
    }
    if (!overrides.is_null()) apply_config(cfg, overrides);

    if (cfg.out.empty()) throw InvalidInput("an output directory is required");
    if (!(cfg.alpha > 0.0)) throw InvalidInput("alpha must be positive");
    if (cfg.steps < 2) throw InvalidInput("steps must be at least 2");
    if (cfg.paths && *cfg.paths == 0) throw InvalidInput("paths must be positive");
    if (cfg.workers == 0) throw InvalidInput("workers must be positive");
    (void)parse_method(cfg.method);
    (void)parse_optimizer(cfg.optimizer);
    if (!(cfg.cutoff > 0.0)) throw InvalidInput("cutoff must be positive");
    if (!(cfg.w >= 0.0)) throw InvalidInput("w must be non-negative");
    for (double d : cfg.deltas)
        if (!(d > 0.0 && d < 1.0)) throw InvalidInput("deltas must lie in (0, 1)");
    if (cfg.init_w && !(*cfg.init_w > 0.0)) throw InvalidInput("init_w must be positive");
    return cfg;
}

ordered_json resolved_config_json(const RunConfig& cfg) {
    ordered_json j;
    j["command"] = cfg.command;
    j["model"] = cfg.model.empty() ? "builtin:four_gaussian_triangle" : cfg.model;
    j["out"] = cfg.out;
    j["alpha"] = cfg.alpha;
    j["seed"] = cfg.seed;
    j["steps"] = cfg.steps;
    j["paths"] = cfg.paths.value_or(default_paths(cfg.command));
    j["workers"] = cfg.workers;
    j["method"] = cfg.method;
    j["antithetic"] = cfg.antithetic.value_or(cfg.command == "train");
    j["classes"] = cfg.classes;
    j["cutoff"] = cfg.cutoff;
    j["w"] = cfg.w;
    j["deltas"] = cfg.deltas;
    j["ito_paths"] = cfg.ito_paths;
    j["h"] = cfg.h;
    j["half_width"] = cfg.half_width;
    j["tol_g"] = cfg.tol_g;
    j["pde_dt"] = cfg.pde_dt;
    j["slice_times"] = cfg.slice_times;
    j["iterations"] = cfg.iterations;
    j["learning_rate"] = cfg.learning_rate;
    j["optimizer"] = cfg.optimizer;
    j["clip_norm"] = cfg.clip_norm;
    j["init_w"] = cfg.init_w.value_or(1.0 / cfg.alpha);
    j["lambda_clip"] = cfg.lambda_clip;
    j["drop_guidance_hessian"] = cfg.drop_guidance_hessian;
    j["grad_w_quantile_clip"] = cfg.grad_w_quantile_clip;
    return j;
}

namespace {

struct Context {
    const RunConfig& cfg;
    MixtureModel model;
    std::string model_hash;
    std::vector<std::string> warnings;
    std::vector<int> classes;
    std::size_t paths;
    bool antithetic;
    Method method;
};

Context load_context(const RunConfig& cfg) {
    LoadedModel lm = cfg.model.empty()
                         ? LoadedModel{MixtureModel::four_gaussian_triangle(), {}, {}}
                         : load_model(cfg.model);
    if (cfg.model.empty()) lm.hash = content_hash(model_to_json(lm.model));
    std::vector<int> classes = cfg.classes.empty() ? lm.model.classes() : cfg.classes;
    for (int c : classes)
        if (!lm.model.has_class(c)) throw InvalidInput("class " + std::to_string(c) + " is not in the model");
    if (!(cfg.cutoff < lm.model.horizon())) throw InvalidInput("cutoff must be below the horizon");
    return {cfg,
            std::move(lm.model),
            lm.hash,
            std::move(lm.warnings),
            std::move(classes),
            cfg.paths.value_or(default_paths(cfg.command)),
            cfg.antithetic.value_or(cfg.command == "train"),
            parse_method(cfg.method)};
}

std::string csv_line(std::initializer_list<std::string> cells) {
    std::string s;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) s += ',';
        s += c;
        first = false;
    }
    return s + '\n';
}

std::string fd(double v) { return format_double(v); }

ordered_json metadata(const Context& ctx, ordered_json results) {
    const auto config = resolved_config_json(ctx.cfg);
    ordered_json j;
    j["tool"] = "adaguide";
    j["version"] = tool_version();
    j["command"] = ctx.cfg.command;
    j["config"] = config;
    j["config_hash"] = content_hash(config.dump());
    j["model_hash"] = ctx.model_hash;
    j["seed"] = ctx.cfg.seed;
    j["kernel_isa"] = kernels::isa_name(kernels::active_isa());
    j["warnings"] = ctx.warnings;
    j["results"] = std::move(results);
    return j;
}

std::shared_ptr<const TimeGrid> make_grid(const Context& ctx) {
    return std::make_shared<const TimeGrid>(
        build_time_grid(ctx.model.horizon(), ctx.cfg.steps, ctx.cfg.cutoff));
}

RunOutputs run_verify(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto grid = make_grid(ctx);
    const auto schedule = GuidanceSchedule::make_raw_constant(cfg.w);
    std::vector<CheckResult> checks;
    std::string mart_csv = "class,k,t_k,mean_s,stderr\n";
    std::string ito_csv = "class,intervals,dt,mean_abs_residual,stderr\n";
    ordered_json notes = ordered_json::array();
    const auto tag = [](CheckResult r, int c) {
        r.name += "_class_" + std::to_string(c);
        return r;
    };
    for (std::size_t slot = 0; slot < ctx.classes.size(); ++slot) {
        const int c = ctx.classes[slot];
        BatchOptions bo;
        bo.n_paths = ctx.paths;
        bo.antithetic = ctx.antithetic;
        bo.base_seed = derive_seed(cfg.seed, slot, 0);
        bo.method = ctx.method;
        bo.workers = cfg.workers;
        const auto batch = simulate_batch(ctx.model, schedule, c, grid, bo);

        const auto diag = martingale_diagnostics(ctx.model, batch, cfg.workers);
        checks.push_back(tag(martingale_check(diag), c));
        for (std::size_t k = 0; k < diag.mean_s.size(); ++k)
            mart_csv += csv_line({std::to_string(c), std::to_string(k), fd(grid->nodes[k]),
                                  fd(diag.mean_s[k].mean), fd(diag.mean_s[k].std_error)});
        for (double d : cfg.deltas) checks.push_back(tag(doob_check(ctx.model, batch, d), c));
        checks.push_back(tag(decomposition_check(ctx.model, batch), c));
        // Tightest constants admitted by a constant w; any positive C_max serves at w = 0.
        const double c_max = cfg.w > 0.0 ? cfg.w : 0.5;
        checks.push_back(tag(kl_check(kl_trajectory_bound(ctx.model, batch, c_max, cfg.w + 0.5)), c));

        ItoStudyOptions io;
        io.paths = cfg.ito_paths;
        io.cutoff = cfg.cutoff;
        io.seed = derive_seed(cfg.seed, slot, 1);
        io.workers = cfg.workers;
        const auto study = ito_residual_study(ctx.model, schedule, c, io);
        for (const auto& l : study.levels)
            ito_csv += csv_line({std::to_string(c), std::to_string(l.intervals), fd(l.dt),
                                 fd(l.abs_total_residual.mean), fd(l.abs_total_residual.std_error)});
        CheckResult ito;
        ito.name = "ito_residual_halving";
        ito.bound = io.ratio_lo;
        ito.statistic = study.ratios.empty() || study.exact
                            ? 0.0
                            : *std::min_element(study.ratios.begin(), study.ratios.end());
        ito.pass = study.pass;
        checks.push_back(tag(ito, c));

        if (ctx.model.all_point_masses()) {
            const auto rep = support_check(ctx.model, batch, default_support_radius(cfg.cutoff));
            CheckResult s;
            s.name = "support_recovery";
            s.statistic = rep.pass_fraction;
            s.bound = 0.99;
            s.std_error = binomial_stderr(rep.pass_fraction, batch.size());
            s.pass = rep.pass_fraction >= 0.99;
            checks.push_back(tag(s, c));
        } else if (!ctx.model.has_point_masses()) {
            CheckResult s;
            s.name = "mass_coverage";
            s.statistic = mass_coverage(ctx.model, batch);
            s.bound = 0.9999;
            s.pass = s.statistic >= s.bound;
            s.asserted = false;
            checks.push_back(tag(s, c));
        }
    }
    RunOutputs out;
    out.files["report.json"] = checks_to_json(checks) + "\n";
    out.files["martingale.csv"] = mart_csv;
    out.files["ito_study.csv"] = ito_csv;
    bool ok = true;
    for (const auto& r : checks)
        if (r.asserted && !r.pass) ok = false;
    out.exit_code = ok ? kExitOk : kExitContract;
    out.files["metadata.json"] = metadata(ctx, {{"all_pass", ok}}).dump(2) + "\n";
    return out;
}

RunOutputs run_hjb(const Context& ctx, bool figure) {
    const auto& cfg = ctx.cfg;
    if (ctx.model.dim() != 2) throw InvalidInput("the HJB solver needs a two-dimensional model");
    HjbConfig hc;
    hc.alpha = cfg.alpha;
    hc.half_width = cfg.half_width;
    hc.h = cfg.h;
    hc.dt = cfg.pde_dt;
    hc.cutoff = cfg.cutoff;
    hc.tol_g = cfg.tol_g;
    hc.workers = cfg.workers;
    hc.snapshot_times = figure || cfg.slice_times.empty()
                            ? figure_panel_times(ctx.model.horizon(), cfg.cutoff)
                            : cfg.slice_times;
    RunOutputs out;
    std::string index = "class,slice,t_backward,t_forward,file\n";
    ordered_json grids = ordered_json::array();
    for (int c : ctx.classes) {
        const auto vg = solve_hjb(ctx.model, c, hc);
        const std::string stem = "class" + std::to_string(c);
        for (std::size_t i = 0; i < vg.slices.size(); ++i) {
            const auto& s = vg.slices[i];
            const std::string name = stem + "_slice" + std::to_string(i) + ".csv";
            std::ostringstream os;
            write_slice_csv(os, vg, s);
            out.files[name] = os.str();
            index += csv_line({std::to_string(c), std::to_string(i), fd(s.t_back), fd(s.t_forward), name});
        }
        auto meta = ordered_json::parse(value_grid_metadata_json(vg));
        meta["model_hash"] = ctx.model_hash;
        out.files[stem + "_grid.json"] = meta.dump(2) + "\n";
        grids.push_back({{"class", c}, {"steps", vg.steps}, {"dt_max", vg.dt_max}});
    }
    out.files["slices.csv"] = index;
    out.files["metadata.json"] =
        metadata(ctx, {{"figure1", figure}, {"grids", grids}}).dump(2) + "\n";
    return out;
}

MeanStderr class_average_reward(const Context& ctx, const GuidanceSchedule& s,
                                std::shared_ptr<const TimeGrid> grid, std::uint64_t seed) {
    double mean = 0.0, var = 0.0;
    for (std::size_t slot = 0; slot < ctx.classes.size(); ++slot) {
        BatchOptions bo;
        bo.n_paths = ctx.paths;
        bo.antithetic = ctx.antithetic && ctx.paths % 2 == 0;
        bo.base_seed = derive_seed(seed, slot, 7);
        bo.method = ctx.method;
        bo.workers = ctx.cfg.workers;
        const auto est = reward_estimate(simulate_batch(ctx.model, s, ctx.classes[slot], grid, bo),
                                         ctx.cfg.alpha, bo.antithetic);
        mean += est.stats.mean;
        var += est.stats.std_error * est.stats.std_error;
    }
    const double k = static_cast<double>(ctx.classes.size());
    return {mean / k, std::sqrt(var) / k, ctx.paths * ctx.classes.size()};
}

RunOutputs run_train(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto grid = make_grid(ctx);
    const double init_w = cfg.init_w.value_or(1.0 / cfg.alpha);
    const auto init = GuidanceSchedule::make_class_table(*grid, ctx.classes, init_w);
    TrainOptions to;
    to.iterations = cfg.iterations;
    to.paths_per_class = ctx.paths;
    to.learning_rate = cfg.learning_rate;
    to.optimizer = parse_optimizer(cfg.optimizer);
    to.clip_norm = cfg.clip_norm;
    to.seed = cfg.seed;
    to.antithetic = ctx.antithetic;
    to.method = ctx.method;
    to.workers = cfg.workers;
    to.adjoint.lambda_clip = cfg.lambda_clip;
    to.adjoint.drop_guidance_hessian = cfg.drop_guidance_hessian;
    to.grad_w_quantile_clip = cfg.grad_w_quantile_clip;
    const auto result = train(ctx.model, init, ctx.classes, cfg.alpha, grid, to);

    RunOutputs out;
    std::ostringstream log;
    write_training_log_csv(log, result.history);
    out.files["training_log.csv"] = log.str();
    std::string mean_w = "iteration,k,t_k,mean_w\n";
    for (const auto& r : result.history)
        for (std::size_t k = 0; k < r.mean_w.size(); ++k)
            mean_w += csv_line({std::to_string(r.iteration), std::to_string(k), fd(grid->nodes[k]),
                                fd(r.mean_w[k])});
    out.files["mean_w.csv"] = mean_w;
    out.files["schedule_init.json"] = init.to_json() + "\n";
    out.files["schedule_final.json"] = result.schedule.to_json() + "\n";
    std::ostringstream sc;
    result.schedule.write_csv(sc, ctx.classes);
    out.files["schedule_final.csv"] = sc.str();

    ordered_json res;
    res["iterations_completed"] = result.history.size();
    res["aborted"] = result.aborted;
    if (result.aborted) res["error"] = result.error;
    if (!result.aborted) {
        // One evaluation noise stream shared by every compared schedule.
        const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xe7a1, 0);
        const auto base = GuidanceSchedule::make_raw_constant(1.0 / cfg.alpha);
        const auto ri = class_average_reward(ctx, init, grid, eval_seed);
        const auto rf = class_average_reward(ctx, result.schedule, grid, eval_seed);
        const auto rb = class_average_reward(ctx, base, grid, eval_seed);
        res["initial_reward"] = {{"mean", ri.mean}, {"stderr", ri.std_error}};
        res["final_reward"] = {{"mean", rf.mean}, {"stderr", rf.std_error}};
        res["baseline_reward"] = {{"mean", rb.mean}, {"stderr", rb.std_error}};
    }
    out.exit_code = result.aborted ? kExitDivergence : kExitOk;
    out.files["metadata.json"] = metadata(ctx, res).dump(2) + "\n";
    return out;
}

RunOutputs run_simulate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto grid = make_grid(ctx);
    const auto schedule = GuidanceSchedule::make_raw_constant(cfg.w);
    RunOutputs out;
    std::string summary = "class,mean_reward,stderr,mean_terminal_log_posterior\n";
    for (std::size_t slot = 0; slot < ctx.classes.size(); ++slot) {
        const int c = ctx.classes[slot];
        BatchOptions bo;
        bo.n_paths = ctx.paths;
        bo.antithetic = ctx.antithetic;
        bo.base_seed = derive_seed(cfg.seed, slot, 0);
        bo.method = ctx.method;
        bo.workers = cfg.workers;
        const auto batch = simulate_batch(ctx.model, schedule, c, grid, bo);
        std::ostringstream os;
        write_trajectories_csv(os, batch);
        out.files["trajectories_class" + std::to_string(c) + ".csv"] = os.str();
        const auto est = reward_estimate(batch, cfg.alpha, ctx.antithetic);
        double lp = 0.0;
        const double s_end = ctx.model.forward_time_of(grid->nodes.back());
        for (const auto& tr : batch) lp += ctx.model.log_posterior(s_end, tr.terminal(), c);
        summary += csv_line({std::to_string(c), fd(est.stats.mean), fd(est.stats.std_error),
                             fd(lp / static_cast<double>(batch.size()))});
    }
    out.files["summary.csv"] = summary;
    out.files["metadata.json"] = metadata(ctx, ordered_json::object()).dump(2) + "\n";
    return out;
}

}  // namespace

RunOutputs execute(const RunConfig& cfg) {
    const Context ctx = load_context(cfg);
    if (cfg.command == "verify") return run_verify(ctx);
    if (cfg.command == "hjb") return run_hjb(ctx, false);
    if (cfg.command == "export-figure1") return run_hjb(ctx, true);
    if (cfg.command == "train") return run_train(ctx);
    if (cfg.command == "simulate") return run_simulate(ctx);
    throw InvalidInput("unknown command '" + cfg.command + "'");
}

int run_command(const RunConfig& cfg) {
    RunOutputs out;
    try {
        out = execute(cfg);
    } catch (const InvalidInput& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << '\n';
        return kExitDivergence;
    }
    fs::create_directories(cfg.out);
    for (const auto& [name, bytes] : out.files) write_file(fs::path(cfg.out) / name, bytes);
    if (out.exit_code == kExitContract) std::cerr << "one or more asserted checks failed\n";
    if (out.exit_code == kExitDivergence) std::cerr << "training diverged; partial log written\n";
    return out.exit_code;
}

}  // namespace adaguide
