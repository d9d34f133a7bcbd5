// hbnode command-line front end: runs one experiment per subcommand and
// writes its metrics as CSV.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hbnode/hbnode.hpp"

namespace {

using namespace hbnode;

/// Configuration, validation and I/O problems; exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config file: `key = value` lines, `#` comments. Each entry becomes
// `--key value` ahead of the real arguments, so explicit flags win.

std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
            value = value.substr(1, value.size() - 2);
        std::replace(key.begin(), key.end(), '_', '-');
        const bool ok = !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
            return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '-';
        });
        if (!ok) throw UsageError(path + ":" + std::to_string(lineno) + ": invalid key '" + key + "'");
        if (key == "config") throw UsageError(path + ":" + std::to_string(lineno) + ": nested config is not supported");
        tokens.push_back("--" + key);
        tokens.push_back(value);
    }
    return tokens;
}

/// Returns argv[1..] with config entries spliced in after the subcommand.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path || args.empty() || args[0].rfind("-", 0) == 0) return args;
    const auto extra = config_tokens(*path);
    args.insert(args.begin() + 1, extra.begin(), extra.end());
    return args;
}

// ---------------------------------------------------------------------------
// Options shared by every subcommand.

struct Common {
    std::string models;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::string out = "-";
    std::string config;
    unsigned jobs = 1;

    std::vector<Family> families() const {
        std::vector<Family> f;
        for (const auto& m : split_list(models)) {
            try {
                f.push_back(parse_family(m));
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }
        if (f.empty()) throw UsageError("--model: no model family given");
        return f;
    }

    /// `--seeds A..B` (inclusive) or `--seed N`; 0 by default.
    std::vector<std::uint64_t> seed_list() const {
        if (!seeds.empty()) {
            const auto dots = seeds.find("..");
            try {
                if (dots == std::string::npos) throw std::invalid_argument("");
                std::size_t p1 = 0, p2 = 0;
                const std::string a = seeds.substr(0, dots), b = seeds.substr(dots + 2);
                const auto lo = std::stoull(a, &p1), hi = std::stoull(b, &p2);
                if (p1 != a.size() || p2 != b.size() || hi < lo) throw std::invalid_argument("");
                std::vector<std::uint64_t> s;
                for (auto v = lo; v <= hi; ++v) s.push_back(v);
                return s;
            } catch (const std::exception&) {
                throw UsageError("--seeds expects A..B with A <= B, got '" + seeds + "'");
            }
        }
        return {seed.value_or(0)};
    }
};

void add_common(CLI::App* app, Common& c, const std::string& default_models) {
    c.models = default_models;
    app->add_option("--model", c.models, "Model families, comma separated (node, anode, sonode, hbnode, ghbnode)")
        ->capture_default_str();
    app->add_option("--seed", c.seed, "Seed for a single run");
    app->add_option("--seeds", c.seeds, "Inclusive seed range A..B");
    app->add_option("--out", c.out, "Output CSV path, '-' for stdout")->capture_default_str();
    app->add_option("--config", c.config, "File of 'key = value' defaults");
    app->add_option("--jobs", c.jobs, "Parallel runs")->capture_default_str()->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------
// Ordered parallel execution: task bodies are computed concurrently and
// written in task order behind one lock.

void run_tasks(std::size_t count, unsigned jobs, const std::function<std::string(std::size_t)>& task,
               std::ostream& os) {
    std::vector<std::optional<std::string>> done(count);
    std::size_t flushed = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || stop) return;
            std::string body;
            try {
                body = task(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                stop = true;
                return;
            }
            std::lock_guard lock(mu);
            done[i] = std::move(body);
            while (flushed < count && done[flushed]) {
                os << *done[flushed];
                done[flushed].reset();
                ++flushed;
            }
            os.flush();
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Opens the output, writes the header and runs one task per (seed, family).
void emit(const Common& c, const std::vector<std::string>& header, const std::vector<std::uint64_t>& seeds,
          const std::vector<Family>& families,
          const std::function<void(std::uint64_t, Family, CsvTable&)>& body) {
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (c.out != "-") {
        file.open(c.out);
        if (!file) throw UsageError("cannot open output file '" + c.out + "'");
        os = &file;
    }
    const CsvTable proto(header);
    *os << proto.header_line();
    const std::size_t nf = families.size();
    run_tasks(seeds.size() * nf, c.jobs,
              [&](std::size_t i) {
                  CsvTable t(header);
                  body(seeds[i / nf], families[i % nf], t);
                  return t.body();
              },
              *os);
    os->flush();
    if (!*os) throw UsageError("failed writing output '" + c.out + "'");
}

SolverConfig tolerance(double tol) {
    if (!(tol > 0.0)) throw UsageError("--tol must be positive");
    return SolverConfig::dopri(tol);
}

void failure_row(CsvTable& t, std::uint64_t seed, Family f, std::size_t blanks, const std::string& why) {
    CsvRow r;
    r << seed << to_string(f);
    for (std::size_t k = 0; k < blanks; ++k) r.blank();
    r << true << why;
    t.add(r);
}

// ---------------------------------------------------------------------------
// Subcommands.

struct OptimizeOde {
    Common c;
    std::string objective = "both";
    std::optional<double> gamma, dt, horizon;
    double x0 = 0.0, y0 = 0.0, tol = 1e-9;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("optimize-ode", "Gradient flow vs heavy ball on a test objective");
        add_common(s, c, "node");
        s->add_option("--objective", objective, "rosenbrock, beale or both")->capture_default_str();
        s->add_option("--gamma", gamma, "Heavy-ball damping (default per objective)");
        s->add_option("--dt", dt, "Output spacing and first solver step (default per objective)");
        s->add_option("--horizon", horizon, "End time (default per objective)");
        s->add_option("--x0", x0)->capture_default_str();
        s->add_option("--y0", y0)->capture_default_str();
        s->add_option("--tol", tol, "Solver tolerance")->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        std::vector<Objective> objs;
        if (objective == "both") objs = {Objective::rosenbrock, Objective::beale};
        else {
            try {
                objs = {parse_objective(objective)};
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }
        std::vector<RaceSettings> settings;
        for (Objective o : objs) {
            RaceSettings s = RaceSettings::defaults(o);
            if (gamma) s.gamma = *gamma;
            if (dt) s.dt = *dt;
            if (horizon) s.horizon = *horizon;
            s.x0 = x0;
            s.y0 = y0;
            s.tol = tol;
            try {
                s.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            settings.push_back(s);
        }
        Common cc = c;
        cc.seeds.clear();
        cc.seed = 0;
        emit(cc, {"objective", "variant", "gamma", "t", "x", "y", "F"}, {0}, {Family::node},
             [&](std::uint64_t, Family, CsvTable& t) {
                 for (const auto& s : settings) {
                     for (const auto& tr : run_race(s)) {
                         const bool hb = tr.variant.kind == RaceVariant::Kind::heavy_ball;
                         for (const auto& p : tr.samples) {
                             CsvRow r;
                             r << to_string(s.objective) << (hb ? "heavy_ball" : "gradient_flow")
                               << (hb ? s.gamma : 0.0) << p.t << p.x << p.y << p.value;
                             t.add(r);
                         }
                     }
                 }
             });
    }
};

struct PointCloud {
    Common c;
    double tol = 1e-7, lr = 0.01, clip = 100.0;
    std::size_t epochs = 67, batch = 50, max_iters = 200;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("point-cloud", "Train a classifier on the two-ring point cloud");
        add_common(s, c, "hbnode");
        s->add_option("--tol", tol, "Solver tolerance")->capture_default_str();
        s->add_option("--epochs", epochs)->capture_default_str();
        s->add_option("--max-iters", max_iters, "Optimizer step cap (0: none)")->capture_default_str();
        s->add_option("--lr", lr)->capture_default_str();
        s->add_option("--batch", batch)->capture_default_str();
        s->add_option("--clip", clip, "Adjoint norm clip (0: off)")->capture_default_str();
        s->callback([this] { run(); });
    }

    TrainConfig config() const {
        TrainConfig t = point_cloud_train_config();
        t.solver = tolerance(tol);
        t.epochs = epochs;
        t.learning_rate = lr;
        t.batch_size = batch;
        t.max_iterations = max_iters ? std::optional<std::size_t>(max_iters) : std::nullopt;
        t.clip_threshold = clip > 0.0 ? std::optional<double>(clip) : std::nullopt;
        try {
            t.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return t;
    }

    void run() {
        const TrainConfig tc = config();
        emit(c,
             {"seed", "model", "iteration", "epoch", "loss", "accuracy", "forward_nfe", "backward_nfe", "seconds",
              "train_loss", "train_accuracy", "failed", "failure"},
             c.seed_list(), c.families(), [&](std::uint64_t seed, Family f, CsvTable& t) {
                 const PointCloudRun run = run_point_cloud(f, seed, tc);
                 std::size_t e = 0;
                 for (const auto& it : run.log.iterations) {
                     CsvRow r;
                     r << seed << to_string(f) << it.iteration << it.epoch << it.loss << it.accuracy
                       << it.forward_nfe << it.backward_nfe << it.seconds;
                     while (e < run.log.epochs.size() && run.log.epochs[e].iterations < it.iteration) ++e;
                     if (e < run.log.epochs.size() && run.log.epochs[e].iterations == it.iteration)
                         r << run.log.epochs[e].train_loss << run.log.epochs[e].train_accuracy;
                     else
                         r.blank().blank();
                     r << false << "";
                     t.add(r);
                 }
                 if (run.log.failed) failure_row(t, seed, f, 9, run.log.failure);
             });
    }
};

struct NfeStudy {
    Common c;
    std::string tols = "1e-3,1e-5,1e-7";
    double tol = 1e-7, lr = 0.01;
    std::size_t train_iters = 200, batch = 50;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("nfe-study", "Forward/backward NFE of a fixed point-cloud model per tolerance");
        add_common(s, c, "node,hbnode");
        s->add_option("--tols", tols, "Measurement tolerances, comma separated")->capture_default_str();
        s->add_option("--tol", tol, "Training tolerance")->capture_default_str();
        s->add_option("--train-iters", train_iters, "Optimizer steps before freezing (0: initial weights)")
            ->capture_default_str();
        s->add_option("--lr", lr)->capture_default_str();
        s->add_option("--batch", batch)->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        Vec tv;
        for (const auto& s : split_list(tols)) {
            try {
                std::size_t pos = 0;
                tv.push_back(std::stod(s, &pos));
                if (pos != s.size() || !(tv.back() > 0.0)) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw UsageError("--tols: bad tolerance '" + s + "'");
            }
        }
        if (tv.empty()) throw UsageError("--tols: no tolerance given");
        TrainConfig tc = point_cloud_train_config();
        tc.solver = tolerance(tol);
        tc.learning_rate = lr;
        tc.batch_size = batch;
        tc.epochs = train_iters;
        tc.max_iterations = train_iters;
        try {
            tc.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        emit(c, {"seed", "model", "tolerance", "forward_nfe", "backward_nfe", "train_iterations", "failed", "failure"},
             c.seed_list(), c.families(), [&](std::uint64_t seed, Family f, CsvTable& t) {
                 const PointCloudRun run = run_point_cloud(f, seed, tc);
                 if (run.log.failed) {
                     failure_row(t, seed, f, 4, run.log.failure);
                     return;
                 }
                 for (const auto& m : measure_nfe(run.model, run.data, tv)) {
                     CsvRow r;
                     r << seed << to_string(f) << m.tolerance << m.forward_nfe << m.backward_nfe
                       << run.log.iterations.size() << false << "";
                     t.add(r);
                 }
             });
    }
};

struct BlowupStudy {
    Common c;
    BlowupConfig cfg;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("blowup-study", "||h(t)|| of each family under a random forcing");
        add_common(s, c, "node,anode,sonode,hbnode,ghbnode");
        s->add_option("--horizon", cfg.horizon)->capture_default_str();
        s->add_option("--sample-dt", cfg.sample_dt)->capture_default_str();
        s->add_option("--tol", cfg.tol, "Solver tolerance")->capture_default_str();
        s->add_option("--forcing-amplitude", cfg.forcing.amplitude)->capture_default_str();
        s->add_option("--forcing-omega", cfg.forcing.omega)->capture_default_str();
        s->add_option("--noise-std", cfg.forcing.noise_std)->capture_default_str();
        s->add_option("--bound", cfg.bound, "hardtanh range of the ghbnode gate")->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        emit(c, {"seed", "model", "t", "h_norm", "blew_up"}, c.seed_list(), c.families(),
             [&](std::uint64_t seed, Family f, CsvTable& t) {
                 const std::array<Family, 1> one{f};
                 for (const auto& tr : run_blowup(seed, one, cfg))
                     for (const auto& [time, norm] : tr.samples) {
                         CsvRow r;
                         r << seed << to_string(f) << time << norm << tr.blew_up;
                         t.add(r);
                     }
             });
    }
};

struct Timeseries {
    Common c;
    TimeseriesConfig cfg;
    double tol = 1e-7;
    std::string csv, columns;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("timeseries", "Train ODE-RNN forecasters on an irregular series");
        add_common(s, c, "node,hbnode,ghbnode");
        s->add_option("--tol", tol, "Solver tolerance")->capture_default_str();
        s->add_option("--epochs", cfg.train.epochs)->capture_default_str();
        s->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
        s->add_option("--batch", cfg.train.batch_size)->capture_default_str();
        s->add_option("--csv", csv, "CSV series instead of the synthetic oscillator");
        s->add_option("--time-column", cfg.time_column)->capture_default_str();
        s->add_option("--columns", columns, "Value columns, comma separated (default: all others)");
        s->add_option("--length", cfg.length, "Synthetic series length")->capture_default_str();
        s->add_option("--drop", cfg.drop_fraction, "Fraction of samples removed")->capture_default_str();
        s->add_option("--window", cfg.window)->capture_default_str();
        s->add_option("--forecast", cfg.forecast)->capture_default_str();
        s->add_option("--stride", cfg.stride)->capture_default_str();
        s->add_option("--latent", cfg.latent)->capture_default_str();
        s->add_option("--reg", cfg.reg_weight, "Weight of the next-step loss")->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        cfg.train.solver = tolerance(tol);
        if (!csv.empty()) cfg.csv_path = csv;
        cfg.value_columns = split_list(columns);
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        emit(c,
             {"seed", "model", "epoch", "train_loss", "train_mse", "forward_nfe", "backward_nfe", "seconds",
              "validation_mse", "test_mse", "failed", "failure"},
             c.seed_list(), c.families(), [&](std::uint64_t seed, Family f, CsvTable& t) {
                 TimeseriesRun run;
                 try {
                     run = run_timeseries(f, seed, cfg);
                 } catch (const SchemaError& e) {
                     throw UsageError(e.what());
                 } catch (const ParseError& e) {
                     throw UsageError(e.what());
                 } catch (const ValidationError& e) {
                     throw UsageError(e.what());
                 } catch (const RangeError& e) {
                     throw UsageError(e.what());
                 }
                 for (std::size_t k = 0; k < run.log.epochs.size(); ++k) {
                     const auto& e = run.log.epochs[k];
                     CsvRow r;
                     r << seed << to_string(f) << e.epoch << e.train_loss << e.train_mse << e.forward_nfe
                       << e.backward_nfe << e.seconds;
                     if (k + 1 == run.log.epochs.size() && !run.log.failed)
                         r << run.validation_mse << run.test_mse;
                     else
                         r.blank().blank();
                     r << false << "";
                     t.add(r);
                 }
                 if (run.log.failed) failure_row(t, seed, f, 8, run.log.failure);
             });
    }
};

struct AdjointTrace {
    Common c;
    AdjointTraceConfig cfg;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("adjoint-trace", "Adjoint norm against T - t for f(h) = coef * h");
        add_common(s, c, "node,hbnode");
        s->add_option("--coef", cfg.coef)->capture_default_str();
        s->add_option("--gamma", cfg.gamma)->capture_default_str();
        s->add_option("--horizon", cfg.horizon)->capture_default_str();
        s->add_option("--sample-dt", cfg.sample_dt)->capture_default_str();
        s->add_option("--tol", cfg.rtol, "Relative tolerance")->capture_default_str();
        s->add_option("--atol", cfg.atol, "Absolute tolerance")->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        try {
            cfg.validate();
            for (Family f : c.families()) make_linear_model(f, cfg.coef, cfg.gamma);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        Common cc = c;
        cc.seeds.clear();
        cc.seed = 0;
        emit(cc, {"model", "gap", "adjoint_norm"}, {0}, c.families(), [&](std::uint64_t, Family f, CsvTable& t) {
            for (const auto& [gap, norm] : run_adjoint_trace(f, cfg)) {
                CsvRow r;
                r << to_string(f) << gap << norm;
                t.add(r);
            }
        });
    }
};

struct GradCheck {
    Common c;
    GradCheckConfig cfg;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("grad-check", "Adjoint gradients against central differences");
        add_common(s, c, "node,anode,sonode,hbnode,ghbnode");
        s->add_option("--tol", cfg.tol, "Solver tolerance")->capture_default_str();
        s->add_option("--fd-step", cfg.fd_step)->capture_default_str();
        s->add_option("--horizon", cfg.T)->capture_default_str();
        s->add_option("--hidden", cfg.hidden)->capture_default_str();
        s->add_option("--dim", cfg.position_dim, "Position extent n")->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        if (!(cfg.tol > 0.0 && cfg.fd_step > 0.0 && cfg.T > 0.0) || cfg.hidden == 0 || cfg.position_dim == 0)
            throw UsageError("grad-check: tol, fd-step, horizon, hidden and dim must be positive");
        emit(c, {"seed", "model", "checked_entries", "state_dim", "max_rel_error", "max_abs_error", "passed"},
             c.seed_list(), c.families(), [&](std::uint64_t seed, Family f, CsvTable& t) {
                 const GradCheckResult g = run_grad_check(f, seed, cfg);
                 CsvRow r;
                 r << seed << to_string(f) << g.params << g.state_dim << g.max_rel_error << g.max_abs_error
                   << g.passed;
                 t.add(r);
             });
    }
};

struct Spectrum {
    Common c;
    SpectrumConfig cfg;
    std::size_t instances = 100;

    void add(CLI::App& root) {
        auto* s = root.add_subcommand("spectrum", "Eigenvalue pairing of random block matrices");
        add_common(s, c, "hbnode");
        s->add_option("--instances", instances)->capture_default_str();
        s->add_option("--max-n", cfg.max_n)->capture_default_str();
        s->add_option("--max-gamma", cfg.max_gamma)->capture_default_str();
        s->add_option("--min-span", cfg.min_span)->capture_default_str();
        s->add_option("--max-span", cfg.max_span)->capture_default_str();
        s->callback([this] { run(); });
    }

    void run() {
        if (cfg.max_n == 0 || cfg.max_n > 32 || !(cfg.max_gamma >= 0.0) || !(cfg.min_span > 0.0) ||
            !(cfg.max_span >= cfg.min_span))
            throw UsageError("spectrum: need 1 <= max-n <= 32, max-gamma >= 0, 0 < min-span <= max-span");
        Common cc = c;
        cc.models = "hbnode";
        emit(cc,
             {"seed", "instance", "n", "gamma", "span", "index", "eig_re", "eig_im", "partner", "pair_residual",
              "count_above", "max_residual"},
             c.seed_list(), {Family::hbnode}, [&](std::uint64_t seed, Family, CsvTable& t) {
                 Rng rng(seed);
                 for (std::size_t k = 0; k < instances; ++k) {
                     const BlockMatrixM M = random_block_matrix(rng, cfg);
                     const PairingReport rep = verify_pairing(M);
                     std::vector<std::size_t> partner(rep.eigenvalues.size());
                     std::vector<double> residual(rep.eigenvalues.size());
                     for (const auto& [i, j] : rep.pairs) {
                         partner[i] = j;
                         partner[j] = i;
                         residual[i] = residual[j] =
                             std::abs(rep.eigenvalues[i] + rep.eigenvalues[j] - rep.target_sum);
                     }
                     for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
                         CsvRow r;
                         r << seed << k << M.n << M.gamma << (M.T - M.t) << i << rep.eigenvalues[i].real()
                           << rep.eigenvalues[i].imag() << partner[i] << residual[i] << rep.count_above
                           << rep.max_residual;
                         t.add(r);
                     }
                 }
             });
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heavy-ball neural ODE experiments; every command writes CSV"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    OptimizeOde optimize;
    PointCloud point_cloud;
    NfeStudy nfe;
    BlowupStudy blowup;
    Timeseries timeseries;
    AdjointTrace trace;
    GradCheck grad;
    Spectrum spectrum;
    optimize.add(app);
    point_cloud.add(app);
    nfe.add(app);
    blowup.add(app);
    timeseries.add(app);
    trace.add(app);
    grad.add(app);
    spectrum.add(app);

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
