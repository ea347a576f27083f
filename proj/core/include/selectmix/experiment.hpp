#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selectmix/crossval.hpp"
#include "selectmix/dataset.hpp"
#include "selectmix/mixing.hpp"
#include "selectmix/net.hpp"
#include "selectmix/theory.hpp"

namespace selectmix {

// Flat experiment description; the JSON config file uses exactly these field
// names as its keys.
//
// dataset accepts:
//   synthetic_blob               two separable Gaussian classes
//   synthetic_image              ten-class 28x28 template images
//   mnist                        IDX files under $SELECTMIX_MNIST_DIR
//   idx:<train_images>:<train_labels>:<test_images>:<test_labels>
//   csv:<train_csv>:<test_csv>
struct ExperimentConfig {
    std::string dataset = "synthetic_image";
    std::string noise_kind = "symmetric";
    double noise_rate = 0.0;
    std::string strategy = "erm";
    double alpha = 1.0;
    std::string partner_pool = "reliable_pred_class";
    int kfold = 5;
    int epochs = 30;
    int batch_size = 128;
    int fold_epochs = 0;    // 0: half of epochs, at least 1
    int train_subset = 10000;  // 0: everything available
    int test_split = 2000;     // 0: everything available
    int hidden_width = 128;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::string lr_milestones = "";  // comma list; empty: 50% and 75% of epochs
    std::uint64_t seed = 1;

    void validate() const;
    MixStrategy mix_strategy() const;
    NoiseSpec noise_spec(int num_classes) const;
    SgdHyper main_hyper() const;
    TrainingBudget fold_budget() const;
    int resolved_fold_epochs() const;
};

std::string config_json(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
// FNV-1a over the canonical JSON rendering, as a 16-digit hex string.
std::string config_hash(const ExperimentConfig& cfg);

struct ExperimentReport {
    std::vector<double> per_epoch_test_acc;
    double best_acc = 0.0;
    double last10_avg = 0.0;
    double rho = 0.0;
    double wall_time_s = 0.0;
    ExperimentConfig config;
    std::string config_hash;
};

// Everything a run produces beyond the report, for callers that keep
// probing the trained model (theory checks, tests).
struct RunArtifacts {
    ExperimentReport report;
    NetworkSpec net_spec;
    NetworkState model;
    Dataset train;  // with injected noise
    Dataset test;
    std::optional<OofPredictions> oof;
    std::vector<int> mismatch;
    std::vector<std::vector<int>> cls_idx;
};

// Pointers into the selection-stage outputs consumed by build_mixed_batch;
// strategies that do not use a member may leave it null.
struct TrainContext {
    const OofPredictions* oof = nullptr;
    const std::vector<std::uint8_t>* is_mismatch = nullptr;
    const std::vector<std::vector<int>>* cls_idx = nullptr;
};

// Called after every epoch with the epoch index, current parameters, and
// the clean-test accuracy of that epoch.
using EpochObserver = std::function<void(int, const NetworkState&, double)>;

// The main optimisation loop shared by all strategies: per-epoch shuffle,
// strategy-specific batch construction, soft-target SGD steps, per-epoch
// clean-test evaluation. Randomness is drawn from streams keyed by
// (seed, purpose, epoch, step) so the selection stage and the observer
// cannot perturb the trajectory.
NetworkState train_loop(const NetworkSpec& net_spec, const Dataset& train, const Dataset& test,
                        const SgdHyper& hyper, int epochs, int batch_size,
                        const MixStrategy& strat, const TrainContext& ctx, std::uint64_t seed,
                        std::vector<double>* acc_series,
                        const EpochObserver& observer = EpochObserver());

// Fraction of argmax predictions matching the clean test labels.
double evaluate(const NetworkSpec& net_spec, const NetworkState& model, const Dataset& test);

// (best, mean of the final min(10, length) entries)
std::pair<double, double> summarize(const std::vector<double>& series);

// Just the data stages: resolve the configured source and corrupt the
// training labels. What the inject-noise subcommand writes out.
Dataset prepare_noisy_train(const ExperimentConfig& cfg);

// Full pipeline: data -> noise -> (fold stage when the strategy needs it)
// -> training -> per-epoch evaluation. Pure function of the config.
RunArtifacts run_experiment_full(const ExperimentConfig& cfg);
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// run_experiment_full with the fold stage forced on, followed by the
// Monte-Carlo risk comparison on the trained model.
RiskReport theory_check(const ExperimentConfig& cfg, int num_draws);

// One results row; seed is a string so summary rows can carry "mean".
struct ResultRow {
    std::string strategy;
    std::string noise_kind;
    double noise_rate = 0.0;
    double alpha = 1.0;
    std::string seed;
    double best_acc = 0.0;
    double last10_avg = 0.0;
    double rho = 0.0;
    double wall_time_s = 0.0;
};

extern const char kResultsCsvHeader[];  // strategy,...,wall_time_s

ResultRow result_row(const ExperimentReport& report);
void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);

struct SweepOutcome {
    std::vector<ResultRow> rows;  // per (alpha, seed), plus a mean row per alpha
    std::vector<std::string> failures;
    std::exception_ptr first_error;
};

// Cross product of alphas x seeds under the base config. Failed cells are
// recorded and skipped; completed cells (and per-alpha means over them) are
// still returned.
SweepOutcome sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                         const std::vector<std::uint64_t>& seeds);

}  // namespace selectmix
