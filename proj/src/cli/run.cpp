#include "nextdit/cli/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nextdit/contextdrop/context_drop.hpp"
#include "nextdit/dit/model.hpp"
#include "nextdit/flowlab/flowlab.hpp"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"
#include "nextdit/partitioner/partition.hpp"
#include "nextdit/rope/rope.hpp"
#include "nextdit/sampler/sampler.hpp"

namespace nextdit::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string out_dir = ".";
    std::string config;
    std::uint64_t seed = 0;
};

struct ScheduleOpts {
    std::string kind = "uniform";
    std::string form = "normalized";
    std::size_t steps = 16;
    double sigma = 1.0, mu = 0.6, alpha = 6.0, beta = 20.0;

    [[nodiscard]] sampler::ScheduleSpec spec() const {
        sampler::ScheduleSpec s;
        s.kind = sampler::parse_schedule_kind(kind);
        s.form = sampler::parse_schedule_form(form);
        s.steps = steps;
        s.sigma = sigma;
        s.mu = mu;
        s.alpha = alpha;
        s.beta = beta;
        return s;
    }
};

void add_schedule_options(CLI::App* app, ScheduleOpts& o) {
    app->add_option("--kind,--schedule", o.kind, "uniform, rational or sigmoid")->capture_default_str();
    app->add_option("--form", o.form, "literal or normalized")->capture_default_str();
    app->add_option("--steps", o.steps, "number of intervals N")->capture_default_str();
    app->add_option("--sigma", o.sigma, "rational shape")->capture_default_str();
    app->add_option("--mu", o.mu, "sigmoid center")->capture_default_str();
    app->add_option("--alpha", o.alpha, "sigmoid slope below mu")->capture_default_str();
    app->add_option("--beta", o.beta, "sigmoid slope above mu")->capture_default_str();
}

struct ModelOpts {
    std::size_t dim = 32, blocks = 2, heads = 4, kv_heads = 2;
    std::string norm = "sandwich";

    void apply(dit::ModelConfig& c) const {
        c.dim = dim;
        c.layers = blocks;
        c.q_heads = heads;
        c.kv_heads = kv_heads;
        if (norm == "sandwich") {
            c.norm = dit::NormStyle::sandwich;
        } else if (norm == "pre" || norm == "pre_only") {
            c.norm = dit::NormStyle::pre_only;
        } else {
            throw ConfigError("unknown norm '" + norm + "' (sandwich, pre)");
        }
    }
};

void add_model_options(CLI::App* app, ModelOpts& o) {
    app->add_option("--dim", o.dim, "hidden size")->capture_default_str();
    app->add_option("--blocks", o.blocks, "number of blocks")->capture_default_str();
    app->add_option("--heads", o.heads, "query heads")->capture_default_str();
    app->add_option("--kv-heads", o.kv_heads, "key/value heads")->capture_default_str();
    app->add_option("--norm", o.norm, "sandwich or pre")->capture_default_str();
}

std::ofstream open_artifact(const Common& c, const std::string& name, bool binary = false) {
    fs::create_directories(c.out_dir);
    const fs::path path = fs::path(c.out_dir) / name;
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return f;
}

std::string artifact_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    return (fs::path(c.out_dir) / name).string();
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

// Column means and the pooled per-column std of points [n, D].
std::pair<std::vector<double>, double> moments(const nk::Tensor& x) {
    const std::size_t n = x.rows(), D = x.cols();
    std::vector<double> mean(D, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < D; ++j) mean[j] += x(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < D; ++j) ss += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    }
    return {mean, std::sqrt(ss / static_cast<double>(n * D))};
}

// ---------------------------------------------------------------------------------------------

int cmd_schedule(const Common& c, const ScheduleOpts& o, std::ostream& out) {
    const sampler::Timesteps ts = sampler::make_schedule(o.spec());
    std::ofstream f = open_artifact(c, "schedule.csv");
    f << sampler::kScheduleCsvHeader << '\n';
    sampler::write_schedule_rows(f, ts);
    out << "schedule " << o.kind << " (" << o.form << "): " << ts.size() << " points, t_0=" << fmt(ts.front())
        << " t_N=" << fmt(ts.back()) << '\n';
    return kExitOk;
}

struct FlowOpts {
    std::vector<double> mean{2.0, 2.0};
    double std = 0.25;
    std::size_t n = 1024;
    std::string solver = "midpoint";
};

void add_flow_options(CLI::App* app, FlowOpts& o) {
    app->add_option("--mean", o.mean, "target mean of the analytic flow")->delimiter(',');
    app->add_option("--std", o.std, "target std of the analytic flow")->capture_default_str();
    app->add_option("--n", o.n, "number of samples")->capture_default_str();
}

int cmd_sample(const Common& c, const ScheduleOpts& so, const FlowOpts& fo, std::ostream& out) {
    const flowlab::GaussianFlowSpec spec{fo.mean, fo.std};
    spec.validate();
    const sampler::Timesteps ts = sampler::make_schedule(so.spec());
    nk::Rng rng(c.seed);
    const nk::Tensor x0 = rng.normal_tensor({fo.n, fo.mean.size()});
    const nk::Tensor x1 = sampler::solve(sampler::parse_solver(fo.solver), flowlab::gaussian_flow_field(spec), x0, ts);
    const nk::Tensor exact = flowlab::gaussian_flow_transport(spec, rng.normal_tensor({fo.n, fo.mean.size()}), 1.0);
    const double ed = flowlab::energy_distance(x1, exact);
    {
        std::ofstream f = open_artifact(c, "samples.csv");
        flowlab::write_points_csv(f, x1);
    }
    if (fo.mean.size() == 2) {
        std::ofstream f = open_artifact(c, "samples.pgm", true);
        flowlab::write_density_pgm(f, x1, 128, -1.0 + std::min(fo.mean[0], fo.mean[1]) - 3 * fo.std,
                                   1.0 + std::max(fo.mean[0], fo.mean[1]) + 3 * fo.std);
    }
    const auto [mean, sd] = moments(x1);
    out << "sample " << fo.solver << "+" << so.kind << " NFE="
        << (ts.size() - 1) * sampler::evaluations_per_step(sampler::parse_solver(fo.solver)) << ": mean0=" << fmt(mean[0])
        << " std=" << fmt(sd) << " energy_distance=" << fmt(ed) << '\n';
    return kExitOk;
}

struct DiagnoseOpts {
    std::size_t anchors = 50;
    std::size_t substeps = 100;
};

int cmd_diagnose(const Common& c, const DiagnoseOpts& d, const FlowOpts& fo, std::ostream& out) {
    const flowlab::GaussianFlowSpec spec{fo.mean, fo.std};
    spec.validate();
    nk::Rng rng(c.seed);
    const nk::Tensor x0 = rng.normal_tensor({fo.n, fo.mean.size()});
    const auto v = flowlab::gaussian_flow_field(spec);
    const auto tau = sampler::truncation_error_profile(v, x0, d.anchors, d.substeps);
    const auto kappa = sampler::curvature_profile(v, x0, d.anchors, d.substeps);
    std::ofstream f = open_artifact(c, "diagnose.csv");
    f << sampler::kDiagnosticCsvHeader << '\n';
    sampler::write_diagnostic_rows(f, tau, kappa);
    const auto peak = std::max_element(tau.begin(), tau.end()) - tau.begin();
    out << "diagnose N=" << d.anchors << ": max tau " << fmt(tau[static_cast<std::size_t>(peak)]) << " at step " << peak
        << '\n';
    return kExitOk;
}

struct RopeOpts {
    double base = 10000.0;
    std::size_t d_head = 24;
    std::size_t axes = 3;
    double extent = 16.0;
    double scale = 2.0;
    double t = 1.0;
    std::string strategy = "all";
    std::string convention = "consistent";
};

int cmd_rope_scan(const Common& c, const RopeOpts& o, std::ostream& out) {
    const rope::Convention conv = rope::parse_convention(o.convention);
    const rope::RopeFreqs base = rope::freq_matrix(o.base, o.d_head, o.axes, conv);
    std::vector<rope::Strategy> strategies;
    if (o.strategy == "all") {
        strategies.assign(rope::kAllStrategies.begin(), rope::kAllStrategies.end());
    } else {
        strategies.push_back(rope::parse_strategy(o.strategy));
    }
    std::ofstream f = open_artifact(c, "ropescan.csv");
    f << rope::kFreqCsvHeader << '\n';
    for (const rope::Strategy s : strategies) {
        rope::write_freq_rows(f, rope::to_string(s), rope::scaled_freqs(base, rope::ScaleSpec{s, o.scale, o.extent, o.t}));
    }
    out << "rope-scan base=" << fmt(o.base) << " d_head=" << o.d_head << " axes=" << o.axes << " s=" << fmt(o.scale)
        << ": " << strategies.size() << " strategies, d_target=" << fmt(rope::d_target(o.base, o.d_head, o.axes, o.extent, conv))
        << '\n';
    return kExitOk;
}

struct PartitionOpts {
    std::size_t height = 0, width = 0, max_patches = 0, patch = 16;
    double max_aspect = 0;
};

int cmd_partition(const Common& c, const PartitionOpts& o, std::ostream& out) {
    const auto candidates = partition::candidate_set(o.max_patches, o.max_aspect, o.patch);
    const partition::PartitionGrid best = partition::best_partition(o.height, o.width, candidates);
    const auto [th, tw] = partition::resize_target(best);
    std::ofstream f = open_artifact(c, "partition.csv");
    f << "h_patches,w_patches,tokens,ratio,chosen\n";
    f.precision(17);
    for (const auto& g : candidates) {
        f << g.h_patches << ',' << g.w_patches << ',' << g.area() << ','
          << partition::matching_ratio(o.height, o.width, g).value() << ',' << (g == best ? 1 : 0) << '\n';
    }
    out << "partition " << o.height << "x" << o.width << ": grid (" << best.h_patches << "," << best.w_patches
        << "), target " << th << "x" << tw << '\n';
    return kExitOk;
}

struct ProbeOpts {
    std::size_t samples = 500;
    std::vector<double> timesteps{0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t height = 8, width = 8, channels = 1, patch = 2;
    std::string checkpoint;
    bool stack = false;
    std::size_t stack_layers = 24;
};

int cmd_probe(const Common& c, const ProbeOpts& p, const ModelOpts& mo, std::ostream& out) {
    if (p.stack) {
        dit::StackProbeConfig sc;
        sc.layers = p.stack_layers;
        sc.seed = c.seed;
        const dit::StackProbeResult r = dit::random_stack_probe(sc);
        std::ofstream f = open_artifact(c, "stack_probe.csv");
        f << "layer,sandwich_rms_max,pre_only_rms_max\n";
        f.precision(17);
        for (std::size_t l = 0; l < r.sandwich_rms_max.size(); ++l) {
            f << l << ',' << r.sandwich_rms_max[l] << ',' << r.pre_only_rms_max[l] << '\n';
        }
        out << "probe stack: max rms sandwich=" << fmt(*std::max_element(r.sandwich_rms_max.begin(), r.sandwich_rms_max.end()))
            << " pre_only=" << fmt(*std::max_element(r.pre_only_rms_max.begin(), r.pre_only_rms_max.end())) << '\n';
        return kExitOk;
    }
    dit::ModelParams m;
    if (!p.checkpoint.empty()) {
        m = dit::load_model(p.checkpoint);
    } else {
        dit::ModelConfig cfg;
        mo.apply(cfg);
        cfg.patch = p.patch;
        cfg.channels = p.channels;
        m = dit::init_model(cfg, c.seed);
    }
    const auto rows =
        dit::activation_probe(m, p.samples, p.timesteps, {p.height, p.width, m.config.channels}, c.seed + 1);
    std::ofstream f = open_artifact(c, "probe.csv");
    f << dit::kProbeCsvHeader << '\n';
    f.precision(17);
    double peak = 0;
    for (const auto& r : rows) {
        f << r.layer << ',' << r.t << ',' << r.rms_mean << ',' << r.rms_max << '\n';
        peak = std::max(peak, r.rms_max);
    }
    out << "probe: " << rows.size() << " rows, max rms " << fmt(peak) << '\n';
    return kExitOk;
}

struct TrainOpts {
    std::string dataset = "eight_gaussians";
    std::size_t steps = 5000, batch = 256, data_n = 20000, eval_n = 2000;
    double lr = 1e-3;
    std::string optimizer = "adam";
};

void write_samples(const Common& c, const nk::Tensor& pts) {
    {
        std::ofstream f = open_artifact(c, "samples.csv");
        flowlab::write_points_csv(f, pts);
    }
    if (pts.cols() == 2) {
        std::ofstream f = open_artifact(c, "samples.pgm", true);
        flowlab::write_density_pgm(f, pts, 128, -6.0, 6.0);
    }
}

nk::Tensor generate(const dit::ModelParams& m, std::size_t n, sampler::Solver solver, const ScheduleOpts& so,
                    std::uint64_t seed) {
    sampler::ScheduleSpec spec = so.spec();
    const nk::Tensor imgs = flowlab::sample_model(m, n, solver, sampler::make_schedule(spec), seed,
                                                  {1, 1, m.config.channels});
    return flowlab::images_to_points(imgs);
}

int cmd_train(const Common& c, const TrainOpts& o, const ModelOpts& mo, std::ostream& out) {
    const nk::Tensor data = flowlab::toy_dataset(o.dataset, o.data_n, c.seed);
    dit::ModelConfig cfg;
    mo.apply(cfg);
    cfg.channels = 2;
    dit::ModelParams m = dit::init_model(cfg, c.seed);
    flowlab::TrainConfig tc;
    tc.steps = o.steps;
    tc.batch = o.batch;
    tc.lr = o.lr;
    tc.optimizer = flowlab::parse_optimizer(o.optimizer);
    tc.seed = c.seed;
    const flowlab::TrainResult r = flowlab::train(m, data, tc);
    {
        std::ofstream f = open_artifact(c, "loss.csv");
        f << flowlab::kLossCsvHeader << '\n';
        flowlab::write_loss_rows(f, r.loss);
    }
    dit::save_model(artifact_path(c, "model.nka"), m);

    ScheduleOpts sig;
    sig.kind = "sigmoid";
    sig.steps = 8;
    const nk::Tensor pts = generate(m, o.eval_n, sampler::Solver::midpoint, sig, c.seed + 1);
    write_samples(c, pts);
    const double ed = flowlab::energy_distance(pts, flowlab::toy_dataset(o.dataset, o.eval_n, c.seed + 2));
    out << "train " << o.dataset << " " << o.steps << " steps: final loss " << fmt(r.loss.back())
        << ", energy distance (midpoint+sigmoid, NFE 16) " << fmt(ed) << '\n';
    return kExitOk;
}

struct GenOpts {
    std::string checkpoint;
    std::size_t n = 2000;
    std::string solver = "midpoint";
    std::string reference;
};

int cmd_gen(const Common& c, const GenOpts& g, const ScheduleOpts& so, std::ostream& out) {
    const dit::ModelParams m = dit::load_model(g.checkpoint);
    const sampler::Solver solver = sampler::parse_solver(g.solver);
    const nk::Tensor pts = generate(m, g.n, solver, so, c.seed);
    write_samples(c, pts);
    out << "gen " << g.solver << "+" << so.kind << " NFE=" << so.steps * sampler::evaluations_per_step(solver) << ": "
        << g.n << " samples";
    if (!g.reference.empty()) {
        out << ", energy distance to " << g.reference << " "
            << fmt(flowlab::energy_distance(pts, flowlab::toy_dataset(g.reference, g.n, c.seed + 2)));
    }
    out << '\n';
    return kExitOk;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv, argv + argc);
    try {
        for (std::size_t i = 1; i + 1 < args.size(); ++i) {
            if (args[i] == "--config") {
                args = merge_config(args, read_file(args[i + 1]));
                break;
            }
            if (args[i].rfind("--config=", 0) == 0) {
                args = merge_config(args, read_file(args[i].substr(9)));
                break;
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    CLI::App app{"nextdit: diffusion transformer and flow sampling toolkit"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", common.out_dir, "artifact directory")->capture_default_str();
        sub->add_option("--config", common.config, "JSON config (flags take precedence)");
        sub->add_option("--seed", common.seed, "random seed")->capture_default_str();
    };

    ScheduleOpts sched;
    FlowOpts flow;
    DiagnoseOpts diag;
    RopeOpts ropt;
    PartitionOpts popt;
    ProbeOpts probe;
    ModelOpts model;
    TrainOpts train;
    GenOpts gen;

    CLI::App* s_schedule = app.add_subcommand("schedule", "write a time grid");
    add_common(s_schedule);
    add_schedule_options(s_schedule, sched);

    CLI::App* s_sample = app.add_subcommand("sample", "integrate the analytic Gaussian flow");
    add_common(s_sample);
    add_schedule_options(s_sample, sched);
    add_flow_options(s_sample, flow);
    s_sample->add_option("--solver", flow.solver, "euler, midpoint or rk4")->capture_default_str();

    CLI::App* s_diag = app.add_subcommand("diagnose", "truncation error and curvature profiles");
    add_common(s_diag);
    add_flow_options(s_diag, flow);
    s_diag->add_option("--steps", diag.anchors, "anchor steps")->capture_default_str();
    s_diag->add_option("--substeps", diag.substeps, "oracle Euler sub-steps per anchor step")->capture_default_str();

    CLI::App* s_rope = app.add_subcommand("rope-scan", "per-strategy RoPE frequency table");
    add_common(s_rope);
    s_rope->add_option("--base", ropt.base, "rotary base")->capture_default_str();
    s_rope->add_option("--dhead", ropt.d_head, "head dimension")->capture_default_str();
    s_rope->add_option("--axes", ropt.axes, "number of position axes")->capture_default_str();
    s_rope->add_option("--extent", ropt.extent, "training extent L in tokens")->capture_default_str();
    s_rope->add_option("--scale", ropt.scale, "extrapolation factor s")->capture_default_str();
    s_rope->add_option("--t", ropt.t, "diffusion time for time_aware")->capture_default_str();
    s_rope->add_option("--strategy", ropt.strategy, "strategy name or all")->capture_default_str();
    s_rope->add_option("--convention", ropt.convention, "consistent or literal")->capture_default_str();

    CLI::App* s_part = app.add_subcommand("partition", "choose a patch grid for an input size");
    add_common(s_part);
    s_part->add_option("--height", popt.height, "input height")->required();
    s_part->add_option("--width", popt.width, "input width")->required();
    s_part->add_option("--max-patches", popt.max_patches, "token budget")->required();
    s_part->add_option("--max-aspect", popt.max_aspect, "largest grid aspect ratio")->required();
    s_part->add_option("--patch", popt.patch, "patch size")->capture_default_str();

    CLI::App* s_probe = app.add_subcommand("probe", "hidden-state RMS per layer");
    add_common(s_probe);
    add_model_options(s_probe, model);
    s_probe->add_option("--samples", probe.samples, "random inputs per timestep")->capture_default_str();
    s_probe->add_option("--timesteps", probe.timesteps, "comma separated t values")->delimiter(',');
    s_probe->add_option("--height", probe.height, "input height")->capture_default_str();
    s_probe->add_option("--width", probe.width, "input width")->capture_default_str();
    s_probe->add_option("--channels", probe.channels, "input channels")->capture_default_str();
    s_probe->add_option("--patch", probe.patch, "patch size")->capture_default_str();
    s_probe->add_option("--checkpoint", probe.checkpoint, "model archive to probe");
    s_probe->add_flag("--stack", probe.stack, "compare norm styles on a wide random stack");
    s_probe->add_option("--stack-layers", probe.stack_layers, "layers of the random stack")->capture_default_str();

    CLI::App* s_train = app.add_subcommand("train", "flow-matching training on a 2D toy dataset");
    add_common(s_train);
    add_model_options(s_train, model);
    s_train->add_option("--dataset", train.dataset, "eight_gaussians, two_moons or checkerboard")->capture_default_str();
    s_train->add_option("--steps", train.steps, "optimizer steps")->capture_default_str();
    s_train->add_option("--batch", train.batch, "minibatch size")->capture_default_str();
    s_train->add_option("--lr", train.lr, "learning rate")->capture_default_str();
    s_train->add_option("--optimizer", train.optimizer, "adam or sgd")->capture_default_str();
    s_train->add_option("--data-n", train.data_n, "training set size")->capture_default_str();
    s_train->add_option("--eval-n", train.eval_n, "samples for the final evaluation")->capture_default_str();

    CLI::App* s_gen = app.add_subcommand("gen", "sample a trained checkpoint");
    add_common(s_gen);
    add_schedule_options(s_gen, sched);
    s_gen->add_option("--checkpoint", gen.checkpoint, "model archive")->required();
    s_gen->add_option("--n", gen.n, "number of samples")->capture_default_str();
    s_gen->add_option("--solver", gen.solver, "euler, midpoint or rk4")->capture_default_str();
    s_gen->add_option("--reference", gen.reference, "dataset to score against");

    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (*s_schedule) return cmd_schedule(common, sched, out);
        if (*s_sample) return cmd_sample(common, sched, flow, out);
        if (*s_diag) return cmd_diagnose(common, diag, flow, out);
        if (*s_rope) return cmd_rope_scan(common, ropt, out);
        if (*s_part) return cmd_partition(common, popt, out);
        if (*s_probe) return cmd_probe(common, probe, model, out);
        if (*s_train) return cmd_train(common, train, model, out);
        if (*s_gen) return cmd_gen(common, gen, sched, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const GridError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace nextdit::cli
