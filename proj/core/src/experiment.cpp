#include "selectmix/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selectmix/rng.hpp"

namespace selectmix {

namespace {

// Fixed geometry of the built-in synthetic worlds. The image world is the
// MNIST-shaped stand-in: ten smooth 28x28 class templates plus pixel noise,
// easy enough for fold models to recover labels yet big enough for label
// memorisation to hurt late training.
constexpr int kBlobClasses = 2;
constexpr int kBlobDim = 20;
constexpr double kBlobStddev = 1.0;
constexpr double kBlobSeparation = 6.0;
constexpr int kImageClasses = 10;
constexpr int kImageSide = 28;
constexpr double kImageStddev = 0.3;

// Rethrows with the pipeline stage name prefixed, preserving the error type.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
#define SELECTMIX_STAGE_RETHROW(ErrType)                              \
    catch (const ErrType& e) {                                        \
        throw ErrType(std::string(name) + " stage: " + e.what());     \
    }
    try {
        return fn();
    }
    SELECTMIX_STAGE_RETHROW(ShapeError)
    SELECTMIX_STAGE_RETHROW(InputError)
    SELECTMIX_STAGE_RETHROW(FormatError)
    SELECTMIX_STAGE_RETHROW(SpecError)
    SELECTMIX_STAGE_RETHROW(TrainingError)
    SELECTMIX_STAGE_RETHROW(PlanError)
    SELECTMIX_STAGE_RETHROW(EstimationError)
    SELECTMIX_STAGE_RETHROW(EvaluationError)
    SELECTMIX_STAGE_RETHROW(Error)
#undef SELECTMIX_STAGE_RETHROW
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, sep)) {
        parts.push_back(part);
    }
    return parts;
}

std::vector<int> default_milestones(int epochs) {
    // The schedule keeps the reference protocol's shape: learning-rate drops
    // at 50% and 75% of the run.  For very short runs both drops can land on
    // the same epoch; collapse the duplicate so the schedule stays valid.
    std::vector<int> out = {static_cast<int>(std::llround(0.5 * epochs)),
                            static_cast<int>(std::llround(0.75 * epochs))};
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> parse_milestones(const std::string& text, int epochs) {
    if (text.empty()) {
        return default_milestones(epochs);
    }
    std::vector<int> out;
    for (const std::string& tok : split(text, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw SpecError("lr_milestones: bad entry '" + tok + "'");
        }
    }
    if (!std::is_sorted(out.begin(), out.end())) {
        throw SpecError("lr_milestones must be ascending: '" + text + "'");
    }
    return out;
}

int synthetic_per_class(int requested, int num_classes, const char* which) {
    if (requested < num_classes) {
        throw SpecError(std::string("synthetic data needs at least one sample per class; ") +
                        which + " size " + std::to_string(requested) + " < " +
                        std::to_string(num_classes) + " classes");
    }
    return requested / num_classes;
}

std::string env_or_throw(const char* var) {
    const char* value = std::getenv(var);
    if (value == nullptr || *value == '\0') {
        throw InputError(std::string("environment variable ") + var + " is not set");
    }
    return value;
}

std::pair<Dataset, Dataset> resolve_data(const ExperimentConfig& cfg) {
    const std::uint64_t template_seed = derive_seed(cfg.seed, {stream::kSynthetic, 9});
    const std::uint64_t train_seed = derive_seed(cfg.seed, {stream::kSynthetic, 0});
    const std::uint64_t test_seed = derive_seed(cfg.seed, {stream::kSynthetic, 1});

    if (cfg.dataset == "synthetic_blob" || cfg.dataset == "synthetic_image") {
        if (cfg.train_subset <= 0 || cfg.test_split <= 0) {
            throw SpecError("synthetic datasets need positive train_subset and test_split");
        }
        SyntheticSpec spec =
            cfg.dataset == "synthetic_blob"
                ? make_blob_spec(kBlobClasses, kBlobDim, 1, kBlobStddev, kBlobSeparation,
                                 template_seed)
                : make_image_spec(kImageClasses, kImageSide, 1, kImageStddev, template_seed);
        SyntheticSpec train_spec = spec;
        train_spec.per_class_count =
            synthetic_per_class(cfg.train_subset, spec.num_classes, "train_subset");
        SyntheticSpec test_spec = spec;
        test_spec.per_class_count =
            synthetic_per_class(cfg.test_split, spec.num_classes, "test_split");
        Dataset train = gen_gaussian(train_spec, train_seed);
        Dataset test = gen_gaussian(test_spec, test_seed);
        if (cfg.dataset == "synthetic_image") {
            train.idx_rows = test.idx_rows = kImageSide;
            train.idx_cols = test.idx_cols = kImageSide;
        }
        return {std::move(train), std::move(test)};
    }

    Dataset train;
    Dataset test;
    if (cfg.dataset == "mnist") {
        const std::string dir = env_or_throw("SELECTMIX_MNIST_DIR");
        train = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
        test = load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    } else if (cfg.dataset.rfind("idx:", 0) == 0) {
        const std::vector<std::string> parts = split(cfg.dataset, ':');
        if (parts.size() != 5) {
            throw SpecError("dataset '" + cfg.dataset +
                            "': expected idx:<train_images>:<train_labels>:<test_images>:"
                            "<test_labels>");
        }
        train = load_idx(parts[1], parts[2]);
        test = load_idx(parts[3], parts[4]);
    } else if (cfg.dataset.rfind("csv:", 0) == 0) {
        const std::vector<std::string> parts = split(cfg.dataset, ':');
        if (parts.size() != 3) {
            throw SpecError("dataset '" + cfg.dataset + "': expected csv:<train_csv>:<test_csv>");
        }
        train = read_dataset_csv(parts[1]);
        test = read_dataset_csv(parts[2]);
    } else {
        throw SpecError("unknown dataset '" + cfg.dataset + "'");
    }
    const int classes = std::max(train.num_classes, test.num_classes);
    train.num_classes = classes;
    test.num_classes = classes;
    if (cfg.train_subset > 0 && cfg.train_subset < train.size()) {
        train = take_subset(train, cfg.train_subset);
        train.num_classes = classes;
    }
    if (cfg.test_split > 0 && cfg.test_split < test.size()) {
        test = take_subset(test, cfg.test_split);
        test.num_classes = classes;
    }
    return {std::move(train), std::move(test)};
}

RunArtifacts run_impl(const ExperimentConfig& cfg, bool force_folds) {
    cfg.validate();
    const auto start_time = std::chrono::steady_clock::now();

    RunArtifacts art;
    auto data = stage("dataset", [&] { return resolve_data(cfg); });
    Dataset& test = data.second;
    const int num_classes = std::max(data.first.num_classes, 2);

    art.train = stage("noise", [&] {
        return inject_noise(data.first, cfg.noise_spec(num_classes), cfg.seed);
    });
    art.test = std::move(test);

    art.net_spec.layer_widths = {art.train.dim(), cfg.hidden_width, num_classes};
    art.net_spec.activation = Activation::kRelu;
    art.net_spec.weight_decay = cfg.weight_decay;

    const MixStrategy strat = cfg.mix_strategy();
    const bool needs_folds = strat.kind == StrategyKind::kMixupStar ||
                             strat.kind == StrategyKind::kSelectMix || force_folds;
    std::vector<std::uint8_t> flags;
    if (needs_folds) {
        art.oof = stage("fold", [&] {
            return oof_predict(art.train, art.net_spec, cfg.fold_budget(), cfg.kfold, cfg.seed);
        });
        art.mismatch = mismatch_set(art.train, *art.oof);
        art.cls_idx = class_index(art.oof->pred_labels, num_classes);
        flags = mismatch_flags(art.mismatch, art.train.size());
    }

    TrainContext ctx;
    if (art.oof) {
        ctx.oof = &*art.oof;
        ctx.is_mismatch = &flags;
        ctx.cls_idx = &art.cls_idx;
    }
    art.model = stage("train", [&] {
        return train_loop(art.net_spec, art.train, art.test, cfg.main_hyper(), cfg.epochs,
                          cfg.batch_size, strat, ctx, cfg.seed,
                          &art.report.per_epoch_test_acc);
    });

    const auto [best, last10] = summarize(art.report.per_epoch_test_acc);
    art.report.best_acc = best;
    art.report.last10_avg = last10;
    art.report.rho = art.oof
                         ? static_cast<double>(art.mismatch.size()) / art.train.size()
                         : 0.0;
    art.report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    art.report.config = cfg;
    art.report.config_hash = config_hash(cfg);
    return art;
}

void append_double(std::string& out, const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    out += buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (epochs < 1) {
        throw SpecError("config: epochs must be >= 1, got " + std::to_string(epochs));
    }
    if (batch_size < 1) {
        throw SpecError("config: batch_size must be >= 1, got " + std::to_string(batch_size));
    }
    if (kfold < 2) {
        throw SpecError("config: kfold must be >= 2, got " + std::to_string(kfold));
    }
    if (hidden_width < 1) {
        throw SpecError("config: hidden_width must be >= 1, got " +
                        std::to_string(hidden_width));
    }
    if (fold_epochs < 0) {
        throw SpecError("config: fold_epochs must be >= 0, got " + std::to_string(fold_epochs));
    }
    if (train_subset < 0 || test_split < 0) {
        throw SpecError("config: train_subset and test_split must be >= 0");
    }
    if (noise_rate < 0.0 || noise_rate > 1.0) {
        throw SpecError("config: noise_rate must lie in [0,1], got " +
                        std::to_string(noise_rate));
    }
    parse_noise_kind(noise_kind);
    mix_strategy().validate();
    main_hyper().validate();
    fold_budget().validate();
}

MixStrategy ExperimentConfig::mix_strategy() const {
    MixStrategy strat;
    strat.kind = parse_strategy(strategy);
    strat.alpha = alpha;
    strat.pool = parse_partner_pool(partner_pool);
    return strat;
}

NoiseSpec ExperimentConfig::noise_spec(int num_classes) const {
    NoiseSpec spec;
    spec.kind = parse_noise_kind(noise_kind);
    spec.rate = noise_rate;
    if (spec.kind == NoiseKind::kAsymmetric) {
        spec.pair_map = cyclic_pair_map(num_classes);
    }
    return spec;
}

SgdHyper ExperimentConfig::main_hyper() const {
    SgdHyper hyper;
    hyper.base_lr = base_lr;
    hyper.momentum = momentum;
    hyper.weight_decay = weight_decay;
    hyper.milestones = parse_milestones(lr_milestones, epochs);
    return hyper;
}

int ExperimentConfig::resolved_fold_epochs() const {
    return fold_epochs > 0 ? fold_epochs : std::max(1, epochs / 2);
}

TrainingBudget ExperimentConfig::fold_budget() const {
    TrainingBudget budget;
    budget.hyper.base_lr = base_lr;
    budget.hyper.momentum = momentum;
    budget.hyper.weight_decay = weight_decay;
    budget.epochs = resolved_fold_epochs();
    // Fold models exist only to produce held-out label predictions, so the
    // schedule is front-loaded: a short high-rate phase that learns the bulk
    // signal, then two early decays that freeze the model near its held-out
    // peak. Letting the rate stay high (or decaying on the main run's late
    // schedule) leaves whole epochs in which SGD keeps fitting the label
    // noise, which is exactly what the out-of-fold screen must not do.
    const int fe = budget.epochs;
    budget.hyper.milestones = {std::max(2, static_cast<int>(std::llround(0.15 * fe))),
                               std::max(4, static_cast<int>(std::llround(0.30 * fe)))};
    budget.batch_size = batch_size;
    return budget;
}

std::string config_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["dataset"] = cfg.dataset;
    j["noise_kind"] = cfg.noise_kind;
    j["noise_rate"] = cfg.noise_rate;
    j["strategy"] = cfg.strategy;
    j["alpha"] = cfg.alpha;
    j["partner_pool"] = cfg.partner_pool;
    j["kfold"] = cfg.kfold;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["fold_epochs"] = cfg.fold_epochs;
    j["train_subset"] = cfg.train_subset;
    j["test_split"] = cfg.test_split;
    j["hidden_width"] = cfg.hidden_width;
    j["base_lr"] = cfg.base_lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["lr_milestones"] = cfg.lr_milestones;
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) {
        throw FormatError("config: top level must be a JSON object");
    }
    ExperimentConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "dataset") cfg.dataset = value.get<std::string>();
            else if (key == "noise_kind") cfg.noise_kind = value.get<std::string>();
            else if (key == "noise_rate") cfg.noise_rate = value.get<double>();
            else if (key == "strategy") cfg.strategy = value.get<std::string>();
            else if (key == "alpha") cfg.alpha = value.get<double>();
            else if (key == "partner_pool") cfg.partner_pool = value.get<std::string>();
            else if (key == "kfold") cfg.kfold = value.get<int>();
            else if (key == "epochs") cfg.epochs = value.get<int>();
            else if (key == "batch_size") cfg.batch_size = value.get<int>();
            else if (key == "fold_epochs") cfg.fold_epochs = value.get<int>();
            else if (key == "train_subset") cfg.train_subset = value.get<int>();
            else if (key == "test_split") cfg.test_split = value.get<int>();
            else if (key == "hidden_width") cfg.hidden_width = value.get<int>();
            else if (key == "base_lr") cfg.base_lr = value.get<double>();
            else if (key == "momentum") cfg.momentum = value.get<double>();
            else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
            else if (key == "lr_milestones") cfg.lr_milestones = value.get<std::string>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else throw SpecError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = config_json(cfg);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

NetworkState train_loop(const NetworkSpec& net_spec, const Dataset& train, const Dataset& test,
                        const SgdHyper& hyper, int epochs, int batch_size,
                        const MixStrategy& strat, const TrainContext& ctx, std::uint64_t seed,
                        std::vector<double>* acc_series, const EpochObserver& observer) {
    net_spec.validate();
    hyper.validate();
    strat.validate();
    if (epochs < 1) {
        throw SpecError("train_loop: epochs must be >= 1, got " + std::to_string(epochs));
    }
    if (batch_size < 1 || batch_size > train.size()) {
        throw SpecError("train_loop: batch_size " + std::to_string(batch_size) +
                        " must lie in [1, " + std::to_string(train.size()) + "]");
    }
    if (net_spec.input_dim() != train.dim()) {
        throw ShapeError("train_loop: network expects input dim " +
                         std::to_string(net_spec.input_dim()) + ", training data has " +
                         std::to_string(train.dim()));
    }

    const int C = net_spec.num_classes();
    Rng init_rng(seed, {stream::kNetInit});
    NetworkState state = init_network(net_spec, init_rng);

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> batch;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng(seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)});
        shuffle_rng.shuffle(order);
        const double lr = lr_at(hyper, epoch);
        const int n = static_cast<int>(order.size());
        int step = 0;
        for (int start = 0; start < n; start += batch_size, ++step) {
            const int b = std::min(batch_size, n - start);
            batch.assign(order.begin() + start, order.begin() + start + b);
            Rng mix_rng(seed, {stream::kMix, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(step)});
            const MixedBatch mb = build_mixed_batch(batch, train, ctx.oof, ctx.is_mismatch,
                                                    ctx.cls_idx, strat, mix_rng);
            const Matrix targets = soft_targets(mb, C);
            const Gradients grads = gradients(net_spec, state, mb.inputs, targets);
            sgd_step(state, grads, hyper, lr);
        }
        const double acc = evaluate(net_spec, state, test);
        if (acc_series != nullptr) {
            acc_series->push_back(acc);
        }
        if (observer) {
            observer(epoch, state, acc);
        }
    }
    return state;
}

double evaluate(const NetworkSpec& net_spec, const NetworkState& model, const Dataset& test) {
    if (test.size() == 0) {
        throw EvaluationError("evaluate: empty test set");
    }
    if (!test.clean_labels) {
        throw EvaluationError("evaluate: test set has no clean labels");
    }
    const std::vector<int>& labels = *test.clean_labels;
    const Matrix probs = forward(net_spec, model, test.features);
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) {
        if (argmax_row(probs.row(i)) == labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / test.size();
}

std::pair<double, double> summarize(const std::vector<double>& series) {
    if (series.empty()) {
        throw EvaluationError("summarize: empty accuracy series");
    }
    const double best = *std::max_element(series.begin(), series.end());
    const std::size_t window = std::min<std::size_t>(10, series.size());
    double sum = 0.0;
    for (std::size_t i = series.size() - window; i < series.size(); ++i) {
        sum += series[i];
    }
    return {best, sum / static_cast<double>(window)};
}

Dataset prepare_noisy_train(const ExperimentConfig& cfg) {
    cfg.validate();
    auto data = stage("dataset", [&] { return resolve_data(cfg); });
    const int num_classes = std::max(data.first.num_classes, 2);
    return stage("noise", [&] {
        return inject_noise(data.first, cfg.noise_spec(num_classes), cfg.seed);
    });
}

RunArtifacts run_experiment_full(const ExperimentConfig& cfg) { return run_impl(cfg, false); }

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    return run_impl(cfg, false).report;
}

RiskReport theory_check(const ExperimentConfig& cfg, int num_draws) {
    RunArtifacts art = run_impl(cfg, true);
    return stage("risk", [&] {
        return estimate_risks(art.net_spec, art.model, art.train, *art.oof, art.mismatch,
                              art.cls_idx, cfg.alpha, num_draws, cfg.seed);
    });
}

const char kResultsCsvHeader[] =
    "strategy,noise_kind,noise_rate,alpha,seed,best_acc,last10_avg,rho,wall_time_s";

ResultRow result_row(const ExperimentReport& report) {
    ResultRow row;
    row.strategy = report.config.strategy;
    row.noise_kind = report.config.noise_kind;
    row.noise_rate = report.config.noise_rate;
    row.alpha = report.config.alpha;
    row.seed = std::to_string(report.config.seed);
    row.best_acc = report.best_acc;
    row.last10_avg = report.last10_avg;
    row.rho = report.rho;
    row.wall_time_s = report.wall_time_s;
    return row;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open " + path + " for writing");
    }
    out << kResultsCsvHeader << '\n';
    for (const ResultRow& row : rows) {
        std::string line = row.strategy + ',' + row.noise_kind + ',';
        append_double(line, "%g", row.noise_rate);
        line += ',';
        append_double(line, "%g", row.alpha);
        line += ',' + row.seed + ',';
        append_double(line, "%.6f", row.best_acc);
        line += ',';
        append_double(line, "%.6f", row.last10_avg);
        line += ',';
        append_double(line, "%.6f", row.rho);
        line += ',';
        append_double(line, "%.3f", row.wall_time_s);
        out << line << '\n';
    }
    if (!out) {
        throw InputError("write failed for " + path);
    }
}

SweepOutcome sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                         const std::vector<std::uint64_t>& seeds) {
    if (alphas.empty() || seeds.empty()) {
        throw SpecError("sweep_alpha: alphas and seeds must be nonempty");
    }
    SweepOutcome outcome;
    for (double a : alphas) {
        std::vector<ResultRow> cell_rows;
        for (std::uint64_t s : seeds) {
            ExperimentConfig cfg = base;
            cfg.alpha = a;
            cfg.seed = s;
            try {
                const ExperimentReport report = run_experiment(cfg);
                cell_rows.push_back(result_row(report));
                outcome.rows.push_back(cell_rows.back());
            } catch (const std::exception& e) {
                outcome.failures.push_back("alpha=" + std::to_string(a) + " seed=" +
                                           std::to_string(s) + ": " + e.what());
                if (!outcome.first_error) {
                    outcome.first_error = std::current_exception();
                }
            }
        }
        if (!cell_rows.empty()) {
            ResultRow mean = cell_rows.front();
            mean.seed = "mean";
            mean.best_acc = mean.last10_avg = mean.rho = mean.wall_time_s = 0.0;
            for (const ResultRow& row : cell_rows) {
                mean.best_acc += row.best_acc;
                mean.last10_avg += row.last10_avg;
                mean.rho += row.rho;
                mean.wall_time_s += row.wall_time_s;
            }
            const double count = static_cast<double>(cell_rows.size());
            mean.best_acc /= count;
            mean.last10_avg /= count;
            mean.rho /= count;
            mean.wall_time_s /= count;
            outcome.rows.push_back(mean);
        }
    }
    return outcome;
}

}  // namespace selectmix
