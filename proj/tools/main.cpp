#include "codec.hpp"
#include "service.hpp"

#include "gbrs/benchmark.hpp"
#include "gbrs/checkpoint.hpp"
#include "gbrs/errors.hpp"
#include "gbrs/experiment.hpp"
#include "gbrs/trainer.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace gbrs;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kTaskNames = {"interactive_seg", "semantic_seg", "matting", "depth"};
const std::vector<std::string> kKindNames = {"sb", "bmsb", "bmsb-m", "bmconv"};
const std::vector<std::string> kModeNames = {"gbrs", "rgb-brs", "distmap-brs"};

struct Global {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoints = "checkpoints";
};

struct RefineFlags {
    std::string task = "interactive_seg";
    std::string kind = "bmconv";
    std::size_t layers = 1;
    std::string mode = "gbrs";
    std::string consistency = "on";
    std::size_t clicks = 20;
    std::optional<double> lr;
    std::size_t dilation = 15;
    std::size_t count = 0;
};

void add_refine_flags(CLI::App* cmd, RefineFlags& f) {
    cmd->add_option("--task", f.task, "Task")->check(CLI::IsMember(kTaskNames))->capture_default_str();
    cmd->add_option("--kind", f.kind, "G-BRS layer kind")->check(CLI::IsMember(kKindNames))->capture_default_str();
    cmd->add_option("--layers", f.layers, "Number of G-BRS layers")->check(CLI::Range(1, 3))->capture_default_str();
    cmd->add_option("--mode", f.mode, "Refinement mode")->check(CLI::IsMember(kModeNames))->capture_default_str();
    cmd->add_option("--consistency", f.consistency, "Consistency loss")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    cmd->add_option("--clicks", f.clicks, "Simulated clicks per instance")->check(CLI::Range(1, 1000))->capture_default_str();
    cmd->add_option("--lr", f.lr, "Learning rate (default: tuned table)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--dilation", f.dilation, "Square dilation before the regression click radius")
        ->check(CLI::Range(1, 99))
        ->capture_default_str();
}

BenchmarkConfig bench_config(const RefineFlags& f) {
    if (f.dilation % 2 == 0) throw CLI::ValidationError("--dilation", "must be odd");
    BenchmarkConfig c;
    c.options.mode = parse_mode(f.mode);
    c.options.kind = parse_gbrs_kind(f.kind);
    c.options.layers = f.layers;
    c.options.config.use_consistency = f.consistency == "on";
    if (f.lr) c.options.config.lr = *f.lr;
    c.clicks = f.clicks;
    c.regression_dilation = f.dilation;
    return c;
}

std::shared_ptr<const Network> load_net(const Global& g, Task task) {
    const fs::path p = fs::path(g.checkpoints) / (std::string(to_string(task)) + ".ckpt");
    return std::make_shared<const Network>(load_checkpoint(p.string()));
}

std::string config_tag(const RefineFlags& f) {
    return f.task + "_" + f.mode + "_" + f.kind + "_L" + std::to_string(f.layers) + (f.consistency == "on" ? "" : "_nocons");
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InputError("cannot write " + p.string());
    out << text;
}

int run_gen_data(const Global& g, std::size_t count, std::size_t size, const std::string& style) {
    const auto samples = generate_dataset(count, size, g.seed.value_or(experiment::kTrainSeed),
                                          style == "shifted" ? DatasetStyle::shifted : DatasetStyle::standard);
    const fs::path dir = g.out.empty() ? "data" : g.out;
    export_dataset(samples, dir);
    std::cout << "wrote " << samples.size() << " samples to " << dir.string() << "\n";
    return 0;
}

int run_train(const Global& g, const std::vector<std::string>& tasks, std::size_t epochs, std::size_t samples) {
    const auto data = generate_dataset(samples, experiment::kImageSize, g.seed.value_or(experiment::kTrainSeed));
    const auto holdout = experiment::holdout_set();
    const fs::path dir = g.out.empty() ? fs::path(g.checkpoints) : fs::path(g.out);
    fs::create_directories(dir);
    for (const auto& name : tasks) {
        const Task task = parse_task(name);
        TrainConfig cfg = experiment::train_config();
        cfg.epochs = epochs;
        std::ofstream log(dir / (name + "_train_log.csv"));
        log << "epoch,mean_loss\n";
        const Network net = train(build_network(task, experiment::kNetworkSeed), data, cfg, [&](const EpochLog& e) {
            log << e.epoch << "," << e.mean_loss << "\n";
            std::cerr << name << " epoch " << e.epoch << " loss " << e.mean_loss << "\n";
        });
        save_checkpoint(net, (dir / (name + ".ckpt")).string());
        const char* metric = task == Task::interactive_seg ? "iou" : task == Task::semantic_seg ? "pixel_acc"
                             : task == Task::matting      ? "mse"
                                                          : "delta1";
        std::cout << name << " held-out " << metric << " " << holdout_score(net, holdout) << "\n";
    }
    return 0;
}

std::vector<Sample> eval_samples(const Global& g, std::size_t count, std::uint64_t default_seed) {
    return generate_dataset(count, experiment::kImageSize, g.seed.value_or(default_seed), DatasetStyle::shifted);
}

int run_bench(const Global& g, const RefineFlags& f) {
    const Task task = parse_task(f.task);
    auto net = load_net(g, task);
    const auto data = eval_samples(g, f.count ? f.count : experiment::kEvalSamples, experiment::kEvalSeed);
    const BenchmarkConfig cfg = bench_config(f);
    const BenchmarkResult r = run_benchmark(net, data, cfg, [](const EvalRecord& e) {
        std::cerr << "instance " << e.instance << (e.failed ? " failed: " + e.error : " auc " + std::to_string(e.auc))
                  << "\n";
    });
    const fs::path dir = g.out.empty() ? "bench_out" : g.out;
    write_text(dir / (config_tag(f) + "_per_click.csv"), r.per_click_csv());
    write_text(dir / (config_tag(f) + "_aggregate.csv"), r.aggregate_csv());
    std::cout << config_tag(f) << " " << primary_metric_name(task) << " initial " << r.all.initial << " final "
              << r.all.final << " auc " << r.all.auc << " bottom10 auc " << r.bottom.auc << "\n";
    return 0;
}

int run_sweep(const Global& g, const RefineFlags& f) {
    const Task task = parse_task(f.task);
    auto net = load_net(g, task);
    const auto data = eval_samples(g, f.count ? f.count : experiment::kSweepSamples, experiment::kSweepSeed);
    BenchmarkConfig cfg = bench_config(f);
    const SweepResult s = lr_sweep(net, data, cfg);
    std::ostringstream csv;
    csv << "# " << config_tag(f) << " instances=" << data.size() << " clicks=" << cfg.clicks << "\nlr,auc\n";
    for (std::size_t i = 0; i < s.grid.size(); ++i) csv << s.grid[i] << "," << s.scores[i] << "\n";
    const fs::path dir = g.out.empty() ? "sweep_out" : g.out;
    write_text(dir / (config_tag(f) + "_sweep.csv"), csv.str());
    std::cout << f.task << " " << f.mode << " " << f.kind << " " << f.layers << " " << std::setprecision(17)
              << s.best_lr << " " << s.best_score << "\n";
    return 0;
}

int run_refine(const Global& g, const RefineFlags& f, std::size_t index) {
    const Task task = parse_task(f.task);
    auto net = load_net(g, task);
    const Sample s = generate_sample(experiment::kImageSize, g.seed.value_or(experiment::kEvalSeed), index,
                                     DatasetStyle::shifted);
    const BenchmarkConfig cfg = bench_config(f);
    Session session = Session::create(net, task, s.image, &s.trimap, cfg.options);
    auto metric = [&] { return evaluate_prediction(task, session.prediction(), s)[0]; };
    nlohmann::json log = nlohmann::json::array();
    log.push_back({{"click", 0}, {primary_metric_name(task), metric()}});
    for (std::size_t k = 1; k <= cfg.clicks; ++k) {
        const GeneratedClick gc = next_click(task, session.prediction(), s, cfg.regression_tolerance, cfg.regression_dilation);
        if (gc.converged) break;
        const RefinementReport r = session.add_click(gc.click);
        log.push_back({{"click", k},
                       {"u", gc.click.u},
                       {"v", gc.click.v},
                       {"r", gc.click.radius},
                       {"label", gc.click.label},
                       {primary_metric_name(task), metric()},
                       {"report", service::encode_report(r)}});
    }
    std::cout << log.dump(1) << "\n";
    const fs::path dir = g.out.empty() ? "refine_out" : g.out;
    const auto pred = service::encode_prediction(task, session.prediction());
    write_text(dir / (f.task + "_" + std::to_string(index) + ".png"), service::base64_decode(pred["png"].get<std::string>()));
    write_text(dir / (f.task + "_" + std::to_string(index) + ".gbss"), session.snapshot());
    return 0;
}

httplib::Server* g_server = nullptr;

int run_serve(const Global& g, const std::string& host, int port, long ttl) {
    service::ServiceOptions opts;
    opts.checkpoints = g.checkpoints;
    opts.ttl = std::chrono::seconds(ttl);
    service::SessionService svc(opts);
    httplib::Server server;
    svc.mount(server);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    std::cout << "listening on http://" << host << ":" << port << "\n" << std::flush;
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backpropagating refinement of auxiliary layers for dense prediction"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "key=value configuration file");
    Global g;
    app.add_option("--seed", g.seed, "Seed for generated data");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--checkpoints", g.checkpoints, "Checkpoint directory")->capture_default_str();

    auto* gen = app.add_subcommand("gen-data", "Generate and export a synthetic dataset");
    std::size_t gen_count = 100, gen_size = 64;
    std::string gen_style = "standard";
    gen->add_option("--count", gen_count)->check(CLI::Range(1, 100000))->capture_default_str();
    gen->add_option("--size", gen_size)->check(CLI::IsMember({64, 96, 128}))->capture_default_str();
    gen->add_option("--style", gen_style)->check(CLI::IsMember({"standard", "shifted"}))->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train task networks into the checkpoint directory");
    std::vector<std::string> train_tasks = kTaskNames;
    std::size_t epochs = experiment::kEpochs, samples = experiment::kTrainSamples;
    tr->add_option("--task", train_tasks, "Tasks to train (default: all)")->check(CLI::IsMember(kTaskNames));
    tr->add_option("--epochs", epochs)->capture_default_str();
    tr->add_option("--samples", samples)->check(CLI::Range(1, 100000))->capture_default_str();

    RefineFlags bench_flags, sweep_flags, refine_flags;
    auto* bench = app.add_subcommand("bench", "Run the simulated-click benchmark and write CSV reports");
    add_refine_flags(bench, bench_flags);
    bench->add_option("--count", bench_flags.count, "Instances (default 100)");
    auto* sweep = app.add_subcommand("sweep", "Learning-rate sweep on a held-out subset");
    sweep_flags.clicks = experiment::kSweepClicks;
    add_refine_flags(sweep, sweep_flags);
    sweep->add_option("--count", sweep_flags.count, "Instances (default 8)");
    auto* refine = app.add_subcommand("refine", "Refine one instance with simulated clicks");
    add_refine_flags(refine, refine_flags);
    std::size_t index = 0;
    refine->add_option("--index", index, "Instance index")->capture_default_str();

    auto* serve = app.add_subcommand("serve", "Serve the HTTP+JSON session API");
    std::string host = "127.0.0.1";
    int port = 8080;
    long ttl = 1800;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->check(CLI::Range(1, 65535))->capture_default_str();
    serve->add_option("--ttl", ttl, "Idle session lifetime in seconds")->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) return run_gen_data(g, gen_count, gen_size, gen_style);
        if (*tr) return run_train(g, train_tasks, epochs, samples);
        if (*bench) return run_bench(g, bench_flags);
        if (*sweep) return run_sweep(g, sweep_flags);
        if (*refine) return run_refine(g, refine_flags, index);
        if (*serve) return run_serve(g, host, port, ttl);
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
