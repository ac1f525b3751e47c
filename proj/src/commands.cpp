#include "gsmforge/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <json.hpp>

#include "gsmforge/attack.hpp"
#include "gsmforge/benchmark.hpp"
#include "gsmforge/codec.hpp"
#include "gsmforge/defense.hpp"
#include "gsmforge/diagnostics.hpp"
#include "gsmforge/metrics.hpp"
#include "gsmforge/plot.hpp"
#include "gsmforge/ppm_io.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsmforge {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

int worker_count(std::size_t tasks) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    long cap = hw;
    if (const char* env = std::getenv("GSM_FORGE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) cap = v;
    }
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cap),
                                                  std::max<std::size_t>(tasks, 1)));
}

namespace {

struct PhaseClock {
    std::vector<std::pair<std::string, double>> phases;
    std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();
    void lap(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        phases.emplace_back(name, std::chrono::duration<double>(now - mark).count());
        mark = now;
    }
};

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    int workers = worker_count(n);
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
#ifdef _OPENMP
            omp_set_num_threads(1);  // pair-level parallelism owns the cores
#endif
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

std::string path_join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path))
        throw std::runtime_error(what + " does not exist: " + path);
}

struct OutputRegistry {
    std::vector<std::string> files;
    void note(const std::string& path) { files.push_back(path); }
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header) : path_(path) {
        f_ = std::fopen(path.c_str(), "wb");
        if (!f_) throw std::runtime_error("cannot open " + path + " for writing");
        std::fputs(header.c_str(), f_);
        std::fputc('\n', f_);
    }
    ~CsvWriter() {
        if (f_) std::fclose(f_);
    }
    void raw_row(const std::string& row) {
        std::fputs(row.c_str(), f_);
        std::fputc('\n', f_);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::FILE* f_ = nullptr;
};

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

// ----- shared experiment context -----

struct PairSpec {
    int id = 0;
    bool prebuilt = false;
    std::string src_path, tgt_path;  // used when !prebuilt
};

struct ExperimentContext {
    Config cfg;
    std::string out_dir;
    CodecModel model;
    BenchmarkSet bench;
    std::vector<PairSpec> specs;
    std::vector<std::uint64_t> seeds;
    double success_threshold_psnr = 22.0;
    ordered_json crops_json = ordered_json::array();
};

AttackConfig attack_config_from(const Config& cfg, std::uint64_t seed) {
    AttackConfig a;
    a.epsilon = cfg.get_double("attack.epsilon", 0.08);
    a.steps = static_cast<int>(cfg.get_int("attack.steps", 500));
    a.alpha0 = cfg.get_double("attack.alpha0", 0.01);
    a.decay_factor = cfg.get_double("attack.decay_factor", 0.5);
    a.period = static_cast<int>(cfg.get_int("attack.period", std::max(1, a.steps / 5)));
    a.seed = seed;
    std::string sched = cfg.get_string("attack.schedule", "periodic_geometric");
    if (sched == "periodic_geometric")
        a.schedule = Schedule::PeriodicGeometric;
    else if (sched == "fixed")
        a.schedule = Schedule::Fixed;
    else
        throw std::runtime_error("attack.schedule must be periodic_geometric or fixed, got " +
                                 sched);
    a.validate();
    return a;
}

ExperimentContext load_context(const Config& cfg, const std::string& weights_path) {
    ExperimentContext ctx;
    ctx.cfg = cfg;
    ctx.out_dir = cfg.get_string("output.directory", "out");
    fs::create_directories(ctx.out_dir);
    require_file(weights_path, "weights file");
    ctx.model = load_weights(weights_path);

    ctx.success_threshold_psnr = cfg.get_double("attack.success_threshold_psnr", 22.0);
    if (cfg.has("attack.seeds"))
        for (long long s : cfg.get_int_list("attack.seeds"))
            ctx.seeds.push_back(static_cast<std::uint64_t>(s));
    else
        ctx.seeds.push_back(0);

    if (cfg.has("attack.pairs")) {
        int id = 0;
        for (const std::string& entry : cfg.get_string_list("attack.pairs")) {
            std::size_t colon = entry.find(':');
            if (colon == std::string::npos)
                throw std::runtime_error("attack.pairs entries must be source:target, got '" +
                                         entry + "'");
            PairSpec sp;
            sp.id = id++;
            sp.src_path = entry.substr(0, colon);
            sp.tgt_path = entry.substr(colon + 1);
            require_file(sp.src_path, "pair source");
            require_file(sp.tgt_path, "pair target");
            ctx.specs.push_back(sp);
        }
    } else {
        std::string dir = cfg.get_string("benchmark.source_dir");
        int crop = static_cast<int>(cfg.get_int("benchmark.crop", 64));
        int pairs = static_cast<int>(cfg.get_int("benchmark.pairs", 8));
        std::uint64_t bseed = static_cast<std::uint64_t>(cfg.get_int("benchmark.seed", 0));
        ctx.bench = make_benchmark(dir, crop, pairs, bseed);
        for (int i = 0; i < static_cast<int>(ctx.bench.pairs.size()); ++i) {
            PairSpec sp;
            sp.id = i;
            sp.prebuilt = true;
            ctx.specs.push_back(sp);
            const CropRecord& s = ctx.bench.source_crops[i];
            const CropRecord& t = ctx.bench.target_crops[i];
            ctx.crops_json.push_back({{"pair", i},
                                      {"source", {{"file", s.source_file}, {"y", s.y}, {"x", s.x}, {"size", s.size}}},
                                      {"target", {{"file", t.source_file}, {"y", t.y}, {"x", t.x}, {"size", t.size}}}});
        }
    }
    if (ctx.specs.empty()) throw std::runtime_error("no attack pairs configured");
    return ctx;
}

GsmPair resolve_pair(const ExperimentContext& ctx, const PairSpec& sp) {
    if (sp.prebuilt) return ctx.bench.pairs[sp.id];
    GsmPair p;
    p.source = load_image(sp.src_path);
    p.target = load_image(sp.tgt_path);
    p.validate();
    return p;
}

int adaptive_msssim_scales(int h, int w) {
    int m = std::min(h, w);
    int scales = 0;
    while (scales < 3 && 11 * (1 << scales) <= m) ++scales;
    return std::max(1, scales);
}

struct RunRow {
    bool ok = false;
    std::string error;
    MetricReport metrics;
    double max_delta_linf = 0.0;
    bool aborted = false;
    Lemma1Report lemma;
};

double adversarial_bpp(const CodecModel& model, const Image& codec_input) {
    Tensor yq = quantize(encode(model, codec_input), QuantMode::Hard);
    return bpp_from_bits(bits_estimate(model, yq), codec_input.height(), codec_input.width());
}

// Evaluates an adversarial image against the deployed codec, optionally
// behind a hard-JPEG transformation defense.
MetricReport evaluate_output(const CodecModel& model, const GsmPair& pair,
                             const Image& adversarial, const JpegConfig* eval_jpeg) {
    Image codec_input = adversarial;
    if (eval_jpeg) {
        JpegConfig hard = *eval_jpeg;
        hard.rounding = JpegRounding::Hard;
        codec_input = jpeg_roundtrip(adversarial, hard);
    }
    Image recon = forward_image(model, codec_input, QuantMode::Hard);
    MetricReport rep;
    rep.psnr_db = psnr(recon, pair.target);
    rep.ms_ssim = ms_ssim(recon.t, pair.target.t,
                          adaptive_msssim_scales(recon.height(), recon.width()));
    rep.bpp = adversarial_bpp(model, codec_input);
    rep.delta_linf = linf(adversarial, pair.source);
    return rep;
}

double max_traj_linf(const AttackResult& res) {
    double m = 0.0;
    for (const auto& r : res.trajectory) m = std::max(m, r.delta_linf);
    for (double v : res.final_delta.data) m = std::max(m, std::fabs(v));
    return m;
}

void write_manifest(const std::string& out_dir, const Config& cfg, const std::string& command,
                    const PhaseClock& clock, const OutputRegistry& outputs,
                    const ordered_json& extra) {
    ordered_json m;
    m["tool_version"] = kToolVersion;
    m["command"] = command;
    m["config_hash"] = cfg.hash();
    ordered_json ph = ordered_json::object();
    for (const auto& [name, secs] : clock.phases) ph[name] = secs;
    m["wall_clock_seconds"] = ph;
    if (!extra.is_null()) m["details"] = extra;
    ordered_json files = ordered_json::array();
    for (const std::string& f : outputs.files)
        files.push_back({{"path", fs::path(f).filename().string()}, {"fnv1a64", file_hash_hex(f)}});
    m["outputs"] = files;

    std::string path = path_join(out_dir, "manifest.json");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::string text = m.dump(2);
    std::fwrite(text.data(), 1, text.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
}

constexpr const char* kResultHeader = "pair_id,seed,psnr_db,ms_ssim,bpp,delta_linf";

std::string result_row_prefix(int pair_id, std::uint64_t seed, const MetricReport& m) {
    return std::to_string(pair_id) + "," + std::to_string(seed) + "," + num17(m.psnr_db) + "," +
           num17(m.ms_ssim) + "," + num17(m.bpp) + "," + num17(m.delta_linf);
}

struct Aggregate {
    double mean = 0.0, stddev = 0.0;
    std::size_t n = 0;
};

Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    a.n = xs.size();
    if (xs.empty()) return a;
    for (double v : xs) a.mean += v;
    a.mean /= xs.size();
    for (double v : xs) a.stddev += (v - a.mean) * (v - a.mean);
    a.stddev = xs.size() > 1 ? std::sqrt(a.stddev / (xs.size() - 1)) : 0.0;
    return a;
}

}  // namespace

// ----- train -----

int cmd_train(const Config& cfg) {
    PhaseClock clock;
    std::string out_dir = cfg.get_string("output.directory", "out");
    fs::create_directories(out_dir);

    std::string train_dir = cfg.get_string("train.dir");
    if (!fs::is_directory(train_dir))
        throw std::runtime_error("train.dir does not exist: " + train_dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(train_dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("train.dir has no .ppm images: " + train_dir);
    std::vector<Image> dataset;
    for (const std::string& f : files) dataset.push_back(load_image(f));
    clock.lap("load_dataset");

    CodecConfig cc;
    cc.latent_channels = static_cast<int>(cfg.get_int("codec.latent_channels", 8));
    cc.hidden_channels = static_cast<int>(cfg.get_int("codec.hidden_channels", 64));
    cc.lambda = cfg.get_double("codec.lambda", 2000.0);
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 7));
    int epochs = static_cast<int>(cfg.get_int("train.epochs", 600));
    double lr = cfg.get_double("train.lr", 2e-4);
    int patience = static_cast<int>(cfg.get_int("train.lr_halve_patience", 0));

    CodecModel model = CodecModel::init(cc, seed);
    TrainResult tr = train(model, dataset, epochs, lr, seed, patience);
    clock.lap("train");

    OutputRegistry outputs;
    std::string wpath = path_join(out_dir, "weights.gsmf");
    save_weights(tr.model, wpath);
    outputs.note(wpath);

    {
        CsvWriter loss(path_join(out_dir, "loss.csv"), "epoch,loss");
        for (std::size_t i = 0; i < tr.loss_history.size(); ++i)
            loss.raw_row(std::to_string(i) + "," + num17(tr.loss_history[i]));
        outputs.note(loss.path());
    }
    clock.lap("write_outputs");

    ordered_json extra;
    extra["epochs_completed"] = tr.completed_epochs;
    extra["diverged"] = tr.diverged;
    extra["final_loss"] = tr.loss_history.empty() ? 0.0 : tr.loss_history.back();
    extra["dataset_images"] = dataset.size();
    write_manifest(out_dir, cfg, "train", clock, outputs, extra);
    if (tr.diverged)
        std::fprintf(stderr, "warning: training diverged after %d epochs; saved last good checkpoint\n",
                     tr.completed_epochs);
    return 0;
}

// ----- attack -----

int cmd_attack(const Config& cfg, const std::string& weights_path) {
    PhaseClock clock;
    ExperimentContext ctx = load_context(cfg, weights_path);
    AttackConfig base = attack_config_from(cfg, 0);
    clock.lap("setup");

    // Clean-image reference metrics, and the data-driven eta0.
    std::vector<double> clean_etas;
    {
        CsvWriter clean(path_join(ctx.out_dir, "clean.csv"),
                        "pair_id,clean_recon_psnr,clean_target_psnr,clean_bpp,residual_norm");
        for (const PairSpec& sp : ctx.specs) {
            GsmPair pair = resolve_pair(ctx, sp);
            Image recon = forward_image(ctx.model, pair.source, QuantMode::Hard);
            double eta = residual_norm(ctx.model, pair.source.t);
            clean_etas.push_back(eta);
            clean.raw_row(std::to_string(sp.id) + "," + num17(psnr(recon, pair.source)) + "," +
                          num17(psnr(recon, pair.target)) + "," +
                          num17(adversarial_bpp(ctx.model, pair.source)) + "," + num17(eta));
        }
    }
    std::vector<double> sorted_etas = clean_etas;
    std::sort(sorted_etas.begin(), sorted_etas.end());
    double median_eta = sorted_etas[sorted_etas.size() / 2];
    if (sorted_etas.size() % 2 == 0 && sorted_etas.size() >= 2)
        median_eta = 0.5 * (sorted_etas[sorted_etas.size() / 2 - 1] +
                            sorted_etas[sorted_etas.size() / 2]);
    const double eta0 = 3.0 * median_eta;
    clock.lap("clean_reference");

    const std::size_t n_tasks = ctx.specs.size() * ctx.seeds.size();
    std::vector<RunRow> rows(n_tasks);
    std::vector<std::string> traj_files(n_tasks), adv_files(n_tasks), recon_files(n_tasks);

    parallel_for(n_tasks, [&](std::size_t task) {
        const PairSpec& sp = ctx.specs[task / ctx.seeds.size()];
        std::uint64_t seed = ctx.seeds[task % ctx.seeds.size()];
        RunRow& row = rows[task];
        try {
            GsmPair pair = resolve_pair(ctx, sp);
            AttackConfig acfg = base;
            acfg.seed = seed;
            AttackResult res = run_attack(ctx.model, pair, acfg,
                                          static_cast<std::uint64_t>(sp.id));
            std::string tag = "p" + std::to_string(sp.id) + "_s" + std::to_string(seed);
            traj_files[task] = path_join(ctx.out_dir, "traj_" + tag + ".csv");
            write_trajectory_csv(traj_files[task], res.trajectory);
            adv_files[task] = path_join(ctx.out_dir, "adv_" + tag + ".ppm");
            save_image(res.adversarial, adv_files[task]);
            Image recon = forward_image(ctx.model, res.adversarial, QuantMode::Hard);
            recon_files[task] = path_join(ctx.out_dir, "recon_" + tag + ".ppm");
            save_image(recon, recon_files[task]);

            row.metrics = evaluate_output(ctx.model, pair, res.adversarial, nullptr);
            row.max_delta_linf = max_traj_linf(res);
            row.aborted = res.aborted;
            row.lemma = check_lemma1(ctx.model, pair, res.adversarial,
                                     ctx.success_threshold_psnr, eta0);
            row.ok = !res.aborted;
            if (res.aborted) row.error = "non-finite objective; best-so-far returned";
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    clock.lap("attacks");

    OutputRegistry outputs;
    bool any_failed = false;
    {
        CsvWriter results(path_join(ctx.out_dir, "results.csv"),
                          std::string(kResultHeader) + ",max_delta_linf,status");
        CsvWriter lemma(path_join(ctx.out_dir, "lemma1.csv"),
                        "pair_id,seed,target_psnr,eta,eta0,label,applicable,violated");
        for (std::size_t task = 0; task < n_tasks; ++task) {
            const PairSpec& sp = ctx.specs[task / ctx.seeds.size()];
            std::uint64_t seed = ctx.seeds[task % ctx.seeds.size()];
            const RunRow& row = rows[task];
            if (row.ok || row.aborted) {
                results.raw_row(result_row_prefix(sp.id, seed, row.metrics) + "," +
                                num17(row.max_delta_linf) + "," +
                                (row.ok ? "ok" : sanitize(row.error)));
                lemma.raw_row(std::to_string(sp.id) + "," + std::to_string(seed) + "," +
                              num17(row.lemma.target_psnr) + "," + num17(row.lemma.eta) + "," +
                              num17(row.lemma.eta0) + "," +
                              (row.lemma.label == RegionLabel::Amplification ? "amplification"
                                                                             : "identity") +
                              "," + (row.lemma.applicable ? "1" : "0") + "," +
                              (row.lemma.violated ? "1" : "0"));
            } else {
                results.raw_row(std::to_string(sp.id) + "," + std::to_string(seed) +
                                ",nan,nan,nan,nan,nan,error: " + sanitize(row.error));
            }
            if (!row.ok) any_failed = true;
        }
        outputs.note(results.path());
        outputs.note(lemma.path());
    }
    outputs.note(path_join(ctx.out_dir, "clean.csv"));
    for (const auto& f : traj_files)
        if (!f.empty()) outputs.note(f);
    for (const auto& f : adv_files)
        if (!f.empty()) outputs.note(f);
    for (const auto& f : recon_files)
        if (!f.empty()) outputs.note(f);

    if (cfg.get_bool("output.emit_plots", false) && !traj_files.empty() && !traj_files[0].empty()) {
        std::string svg = path_join(ctx.out_dir, "plot_lcs.svg");
        emit_plot(traj_files[0], "lcs_trajectory", svg);
        outputs.note(svg);
    }
    clock.lap("write_outputs");

    ordered_json extra;
    extra["eta0"] = eta0;
    extra["pairs"] = ctx.specs.size();
    extra["seeds"] = ctx.seeds.size();
    if (!ctx.crops_json.empty()) extra["benchmark_crops"] = ctx.crops_json;
    write_manifest(ctx.out_dir, cfg, "attack", clock, outputs, extra);
    return any_failed ? 2 : 0;
}

// ----- sweep -----

int cmd_sweep(const Config& cfg, const std::string& weights_path) {
    PhaseClock clock;
    ExperimentContext ctx = load_context(cfg, weights_path);
    AttackConfig base = attack_config_from(cfg, 0);
    std::vector<double> epsilons = cfg.has("sweep.epsilons")
                                       ? cfg.get_double_list("sweep.epsilons")
                                       : std::vector<double>{0.06, 0.08, 0.10};
    std::vector<long long> steps_grid = cfg.has("sweep.steps")
                                            ? cfg.get_int_list("sweep.steps")
                                            : std::vector<long long>{500, 2000, 5000};
    clock.lap("setup");

    struct Cell {
        double epsilon;
        long long steps;
    };
    std::vector<Cell> cells;
    for (double e : epsilons)
        for (long long s : steps_grid) cells.push_back({e, s});

    const std::size_t runs_per_cell = ctx.specs.size() * ctx.seeds.size();
    const std::size_t n_tasks = cells.size() * runs_per_cell;
    std::vector<RunRow> rows(n_tasks);

    parallel_for(n_tasks, [&](std::size_t task) {
        const Cell& cell = cells[task / runs_per_cell];
        std::size_t within = task % runs_per_cell;
        const PairSpec& sp = ctx.specs[within / ctx.seeds.size()];
        std::uint64_t seed = ctx.seeds[within % ctx.seeds.size()];
        RunRow& row = rows[task];
        try {
            GsmPair pair = resolve_pair(ctx, sp);
            AttackConfig acfg = base;
            acfg.epsilon = cell.epsilon;
            acfg.steps = static_cast<int>(cell.steps);
            if (!cfg.has("attack.period")) acfg.period = std::max(1, acfg.steps / 5);
            acfg.seed = seed;
            AttackResult res = run_attack(ctx.model, pair, acfg,
                                          static_cast<std::uint64_t>(sp.id));
            row.metrics = evaluate_output(ctx.model, pair, res.adversarial, nullptr);
            row.max_delta_linf = max_traj_linf(res);
            row.aborted = res.aborted;
            row.ok = !res.aborted;
            if (res.aborted) row.error = "non-finite objective; best-so-far returned";
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    clock.lap("attacks");

    OutputRegistry outputs;
    bool any_failed = false;
    {
        CsvWriter results(path_join(ctx.out_dir, "sweep_results.csv"),
                          std::string(kResultHeader) + ",epsilon,steps,max_delta_linf,status");
        CsvWriter summary(path_join(ctx.out_dir, "sweep_summary.csv"),
                          "epsilon,steps,mean_psnr,std_psnr,mean_msssim,std_msssim,mean_bpp,std_bpp,n");
        for (std::size_t ci = 0; ci < cells.size(); ++ci) {
            std::vector<double> psnrs, msssims, bpps;
            for (std::size_t within = 0; within < runs_per_cell; ++within) {
                std::size_t task = ci * runs_per_cell + within;
                const PairSpec& sp = ctx.specs[within / ctx.seeds.size()];
                std::uint64_t seed = ctx.seeds[within % ctx.seeds.size()];
                const RunRow& row = rows[task];
                if (row.ok || row.aborted) {
                    results.raw_row(result_row_prefix(sp.id, seed, row.metrics) + "," +
                                    num17(cells[ci].epsilon) + "," +
                                    std::to_string(cells[ci].steps) + "," +
                                    num17(row.max_delta_linf) + "," +
                                    (row.ok ? "ok" : sanitize(row.error)));
                    psnrs.push_back(row.metrics.psnr_db);
                    msssims.push_back(row.metrics.ms_ssim);
                    bpps.push_back(row.metrics.bpp);
                } else {
                    any_failed = true;
                    results.raw_row(std::to_string(sp.id) + "," + std::to_string(seed) +
                                    ",nan,nan,nan,nan," + num17(cells[ci].epsilon) + "," +
                                    std::to_string(cells[ci].steps) + ",nan,error: " +
                                    sanitize(row.error));
                }
            }
            Aggregate ap = aggregate(psnrs), am = aggregate(msssims), ab = aggregate(bpps);
            summary.raw_row(num17(cells[ci].epsilon) + "," + std::to_string(cells[ci].steps) +
                            "," + num17(ap.mean) + "," + num17(ap.stddev) + "," + num17(am.mean) +
                            "," + num17(am.stddev) + "," + num17(ab.mean) + "," +
                            num17(ab.stddev) + "," + std::to_string(ap.n));
        }
        outputs.note(results.path());
        outputs.note(summary.path());
    }
    if (cfg.get_bool("output.emit_plots", false)) {
        std::string svg = path_join(ctx.out_dir, "plot_sweep.svg");
        emit_plot(path_join(ctx.out_dir, "sweep_summary.csv"), "sweep_heatmap", svg);
        outputs.note(svg);
    }
    clock.lap("write_outputs");

    ordered_json extra;
    extra["cells"] = cells.size();
    extra["runs_per_cell"] = runs_per_cell;
    write_manifest(ctx.out_dir, cfg, "sweep", clock, outputs, extra);
    return any_failed ? 2 : 0;
}

// ----- ablate-k -----

int cmd_ablate_k(const Config& cfg, const std::string& weights_path, std::vector<double> grid) {
    PhaseClock clock;
    ExperimentContext ctx = load_context(cfg, weights_path);
    AttackConfig base = attack_config_from(cfg, 0);
    if (grid.empty()) {
        grid = cfg.has("ablate.grid") ? cfg.get_double_list("ablate.grid")
                                      : std::vector<double>{0.33, 0.4, 0.5, 0.67, 1.0};
    }
    base.epsilon = cfg.get_double("ablate.epsilon", 0.10);
    base.steps = static_cast<int>(cfg.get_int("ablate.steps", 1000));
    base.period = std::max(1, base.steps / 5);
    base.schedule = Schedule::PeriodicGeometric;
    clock.lap("setup");

    const std::size_t runs_per_k = ctx.specs.size() * ctx.seeds.size();
    const std::size_t n_tasks = grid.size() * runs_per_k;
    std::vector<RunRow> rows(n_tasks);

    parallel_for(n_tasks, [&](std::size_t task) {
        double k = grid[task / runs_per_k];
        std::size_t within = task % runs_per_k;
        const PairSpec& sp = ctx.specs[within / ctx.seeds.size()];
        std::uint64_t seed = ctx.seeds[within % ctx.seeds.size()];
        RunRow& row = rows[task];
        try {
            GsmPair pair = resolve_pair(ctx, sp);
            AttackConfig acfg = base;
            acfg.decay_factor = k;
            acfg.seed = seed;
            AttackResult res = run_attack(ctx.model, pair, acfg,
                                          static_cast<std::uint64_t>(sp.id));
            row.metrics = evaluate_output(ctx.model, pair, res.adversarial, nullptr);
            row.max_delta_linf = max_traj_linf(res);
            row.ok = !res.aborted;
            if (res.aborted) row.error = "non-finite objective; best-so-far returned";
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    clock.lap("attacks");

    OutputRegistry outputs;
    bool any_failed = false;
    {
        CsvWriter results(path_join(ctx.out_dir, "ablate_results.csv"),
                          std::string(kResultHeader) + ",k,max_delta_linf,status");
        CsvWriter summary(path_join(ctx.out_dir, "ablate_summary.csv"),
                          "k,mean_psnr,std_psnr,mean_msssim,std_msssim,n");
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            std::vector<double> psnrs, msssims;
            for (std::size_t within = 0; within < runs_per_k; ++within) {
                std::size_t task = gi * runs_per_k + within;
                const PairSpec& sp = ctx.specs[within / ctx.seeds.size()];
                std::uint64_t seed = ctx.seeds[within % ctx.seeds.size()];
                const RunRow& row = rows[task];
                if (row.ok) {
                    results.raw_row(result_row_prefix(sp.id, seed, row.metrics) + "," +
                                    num17(grid[gi]) + "," + num17(row.max_delta_linf) + ",ok");
                    psnrs.push_back(row.metrics.psnr_db);
                    msssims.push_back(row.metrics.ms_ssim);
                } else {
                    any_failed = true;
                    results.raw_row(std::to_string(sp.id) + "," + std::to_string(seed) +
                                    ",nan,nan,nan,nan," + num17(grid[gi]) + ",nan,error: " +
                                    sanitize(row.error));
                }
            }
            Aggregate ap = aggregate(psnrs), am = aggregate(msssims);
            summary.raw_row(num17(grid[gi]) + "," + num17(ap.mean) + "," + num17(ap.stddev) +
                            "," + num17(am.mean) + "," + num17(am.stddev) + "," +
                            std::to_string(ap.n));
        }
        outputs.note(results.path());
        outputs.note(summary.path());
    }
    if (cfg.get_bool("output.emit_plots", false)) {
        std::string svg = path_join(ctx.out_dir, "plot_ablation.svg");
        emit_plot(path_join(ctx.out_dir, "ablate_summary.csv"), "ablation_curve", svg);
        outputs.note(svg);
    }
    clock.lap("write_outputs");

    ordered_json extra;
    extra["grid"] = grid;
    write_manifest(ctx.out_dir, cfg, "ablate-k", clock, outputs, extra);
    return any_failed ? 2 : 0;
}

// ----- defense -----

int cmd_defense(const Config& cfg, const std::string& weights_path) {
    PhaseClock clock;
    ExperimentContext ctx = load_context(cfg, weights_path);
    AttackConfig base = attack_config_from(cfg, 0);
    if (cfg.has("defense.steps")) base.steps = static_cast<int>(cfg.get_int("defense.steps"));
    if (!cfg.has("attack.period")) base.period = std::max(1, base.steps / 5);

    JpegConfig jpeg;
    jpeg.quality = static_cast<int>(cfg.get_int("defense.quality", 90));
    jpeg.soft_sharpness = cfg.get_double("defense.soft_sharpness", 1.0);
    std::string rounding = cfg.get_string("defense.rounding", "soft");
    if (rounding == "soft")
        jpeg.rounding = JpegRounding::Soft;
    else if (rounding == "hard")
        jpeg.rounding = JpegRounding::Hard;
    else
        throw std::runtime_error("defense.rounding must be soft or hard, got " + rounding);
    jpeg.validate();
    clock.lap("setup");

    struct DefenseRow {
        RunRow plain;      // attack w/o defense, eval w/o defense
        RunRow jpeg_eval;  // attack w/o defense, eval with hard JPEG
        RunRow bypass;     // attack through soft JPEG, eval with hard JPEG
    };
    const std::size_t n_tasks = ctx.specs.size() * ctx.seeds.size();
    std::vector<DefenseRow> rows(n_tasks);

    parallel_for(n_tasks, [&](std::size_t task) {
        const PairSpec& sp = ctx.specs[task / ctx.seeds.size()];
        std::uint64_t seed = ctx.seeds[task % ctx.seeds.size()];
        DefenseRow& row = rows[task];
        try {
            GsmPair pair = resolve_pair(ctx, sp);
            AttackConfig acfg = base;
            acfg.seed = seed;
            AttackResult plain = run_attack(ctx.model, pair, acfg,
                                            static_cast<std::uint64_t>(sp.id));
            row.plain.metrics = evaluate_output(ctx.model, pair, plain.adversarial, nullptr);
            row.plain.max_delta_linf = max_traj_linf(plain);
            row.plain.ok = !plain.aborted;
            row.jpeg_eval.metrics = evaluate_output(ctx.model, pair, plain.adversarial, &jpeg);
            row.jpeg_eval.max_delta_linf = row.plain.max_delta_linf;
            row.jpeg_eval.ok = row.plain.ok;

            AttackResult bypass = attack_through_defense(ctx.model, pair, acfg, jpeg,
                                                         static_cast<std::uint64_t>(sp.id));
            row.bypass.metrics = evaluate_output(ctx.model, pair, bypass.adversarial, &jpeg);
            row.bypass.max_delta_linf = max_traj_linf(bypass);
            row.bypass.ok = !bypass.aborted;
        } catch (const std::exception& e) {
            row.plain.ok = row.jpeg_eval.ok = row.bypass.ok = false;
            row.plain.error = row.jpeg_eval.error = row.bypass.error = e.what();
        }
    });
    clock.lap("attacks");

    OutputRegistry outputs;
    bool any_failed = false;
    {
        CsvWriter results(path_join(ctx.out_dir, "defense_results.csv"),
                          std::string(kResultHeader) + ",condition,max_delta_linf,status");
        CsvWriter summary(path_join(ctx.out_dir, "defense_summary.csv"),
                          "condition,mean_psnr,std_psnr,mean_msssim,std_msssim,n");
        const char* cond_names[3] = {"wo_wo", "wo_with", "with_with"};
        std::vector<double> psnrs[3], msssims[3];
        for (std::size_t task = 0; task < n_tasks; ++task) {
            const PairSpec& sp = ctx.specs[task / ctx.seeds.size()];
            std::uint64_t seed = ctx.seeds[task % ctx.seeds.size()];
            const RunRow* conds[3] = {&rows[task].plain, &rows[task].jpeg_eval,
                                      &rows[task].bypass};
            for (int c = 0; c < 3; ++c) {
                const RunRow& row = *conds[c];
                if (row.ok) {
                    results.raw_row(result_row_prefix(sp.id, seed, row.metrics) + "," +
                                    cond_names[c] + "," + num17(row.max_delta_linf) + ",ok");
                    psnrs[c].push_back(row.metrics.psnr_db);
                    msssims[c].push_back(row.metrics.ms_ssim);
                } else {
                    any_failed = true;
                    results.raw_row(std::to_string(sp.id) + "," + std::to_string(seed) +
                                    ",nan,nan,nan,nan," + cond_names[c] + ",nan,error: " +
                                    sanitize(row.error));
                }
            }
        }
        for (int c = 0; c < 3; ++c) {
            Aggregate ap = aggregate(psnrs[c]), am = aggregate(msssims[c]);
            summary.raw_row(std::string(cond_names[c]) + "," + num17(ap.mean) + "," +
                            num17(ap.stddev) + "," + num17(am.mean) + "," + num17(am.stddev) +
                            "," + std::to_string(ap.n));
        }
        outputs.note(results.path());
        outputs.note(summary.path());
    }
    clock.lap("write_outputs");

    ordered_json extra;
    extra["jpeg_quality"] = jpeg.quality;
    write_manifest(ctx.out_dir, cfg, "defense", clock, outputs, extra);
    return any_failed ? 2 : 0;
}

}  // namespace gsmforge
