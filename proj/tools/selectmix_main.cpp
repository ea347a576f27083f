// Command-line front end: inject-noise, oof-predict, train, theory-check,
// and sweep subcommands over the library pipeline. Every subcommand accepts
// --config <json> plus flag overrides for the common config fields.

#include <cstdint>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selectmix/experiment.hpp"

namespace {

using selectmix::ExperimentConfig;

struct CommonFlags {
    std::string config_path;
    ExperimentConfig flags;  // raw CLI values; merged only where the flag was used

    CLI::Option* dataset = nullptr;
    CLI::Option* noise_kind = nullptr;
    CLI::Option* noise_rate = nullptr;
    CLI::Option* strategy = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* partner_pool = nullptr;
    CLI::Option* kfold = nullptr;
    CLI::Option* epochs = nullptr;
    CLI::Option* batch_size = nullptr;
    CLI::Option* train_subset = nullptr;
    CLI::Option* test_split = nullptr;
    CLI::Option* seed = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (flat key/value)");
        dataset = cmd->add_option("--dataset", flags.dataset,
                                  "synthetic_blob | synthetic_image | mnist | "
                                  "idx:<ti>:<tl>:<vi>:<vl> | csv:<train>:<test>");
        noise_kind = cmd->add_option("--noise-kind", flags.noise_kind,
                                     "symmetric | asymmetric | instance_dependent");
        noise_rate = cmd->add_option("--noise-rate", flags.noise_rate, "label flip rate in [0,1]");
        strategy = cmd->add_option("--strategy", flags.strategy,
                                   "erm | mixup | mixup_star | selectmix");
        alpha = cmd->add_option("--alpha", flags.alpha, "Beta(alpha, alpha) parameter");
        partner_pool = cmd->add_option("--partner-pool", flags.partner_pool,
                                       "reliable_pred_class | any_pred_class | noisy_class");
        kfold = cmd->add_option("--kfold", flags.kfold, "number of folds");
        epochs = cmd->add_option("--epochs", flags.epochs, "training epochs");
        batch_size = cmd->add_option("--batch-size", flags.batch_size, "minibatch size");
        train_subset = cmd->add_option("--train-subset", flags.train_subset,
                                       "training size cap (0 = all)");
        test_split = cmd->add_option("--test-split", flags.test_split,
                                     "test size cap (0 = all)");
        seed = cmd->add_option("--seed", flags.seed, "master seed");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) {
            cfg = selectmix::load_config(config_path);
        }
        if (*dataset) cfg.dataset = flags.dataset;
        if (*noise_kind) cfg.noise_kind = flags.noise_kind;
        if (*noise_rate) cfg.noise_rate = flags.noise_rate;
        if (*strategy) cfg.strategy = flags.strategy;
        if (*alpha) cfg.alpha = flags.alpha;
        if (*partner_pool) cfg.partner_pool = flags.partner_pool;
        if (*kfold) cfg.kfold = flags.kfold;
        if (*epochs) cfg.epochs = flags.epochs;
        if (*batch_size) cfg.batch_size = flags.batch_size;
        if (*train_subset) cfg.train_subset = flags.train_subset;
        if (*test_split) cfg.test_split = flags.test_split;
        if (*seed) cfg.seed = flags.seed;
        return cfg;
    }
};

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::string tok;
    std::stringstream ss(text);
    while (std::getline(ss, tok, ',')) {
        out.push_back(std::stod(tok));
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::string tok;
    std::stringstream ss(text);
    while (std::getline(ss, tok, ',')) {
        out.push_back(std::stoull(tok));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SelectMix: learning with noisy labels via guided mixing"};
    app.require_subcommand(1);

    CommonFlags inject_flags;
    CommonFlags oof_flags;
    CommonFlags train_flags;
    CommonFlags theory_flags;
    CommonFlags sweep_flags;

    std::string inject_out;
    auto* inject = app.add_subcommand(
        "inject-noise", "Corrupt training labels and write the audited dataset CSV");
    inject_flags.attach(inject);
    inject->add_option("--out", inject_out, "output dataset CSV")->required();

    std::string oof_out;
    std::string mismatch_out;
    auto* oof = app.add_subcommand(
        "oof-predict", "K-fold out-of-fold predictions over the noisy training set");
    oof_flags.attach(oof);
    oof->add_option("--out", oof_out, "output predictions CSV")->required();
    oof->add_option("--mismatch-out", mismatch_out,
                    "also write the mismatched sample indices (one per line)");

    std::string train_out;
    auto* train = app.add_subcommand("train", "Run one experiment and write a results CSV row");
    train_flags.attach(train);
    train->add_option("--out", train_out, "output results CSV");

    std::string theory_out;
    int theory_draws = 100000;
    auto* theory = app.add_subcommand(
        "theory-check", "Train, then Monte-Carlo check of the risk-gap inequality");
    theory_flags.attach(theory);
    theory->add_option("--out", theory_out, "output risk report JSON");
    theory->add_option("--draws", theory_draws, "Monte-Carlo draws per risk");

    std::string sweep_out;
    std::string sweep_alphas = "0.1,0.5,1.0,2.0,4.0";
    std::string sweep_seeds = "1,2,3";
    auto* sweep = app.add_subcommand("sweep", "Alpha x seed grid of experiments");
    sweep_flags.attach(sweep);
    sweep->add_option("--alphas", sweep_alphas, "comma list of alpha values");
    sweep->add_option("--seeds", sweep_seeds, "comma list of seeds");
    sweep->add_option("--out", sweep_out, "output results CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (inject->parsed()) {
            const ExperimentConfig cfg = inject_flags.resolve();
            const selectmix::Dataset noisy = selectmix::prepare_noisy_train(cfg);
            selectmix::write_dataset_csv(noisy, inject_out);
            std::cout << "wrote " << noisy.size() << " rows to " << inject_out << "\n";
        } else if (oof->parsed()) {
            const ExperimentConfig cfg = oof_flags.resolve();
            const selectmix::Dataset noisy = selectmix::prepare_noisy_train(cfg);
            selectmix::NetworkSpec net;
            net.layer_widths = {noisy.dim(), cfg.hidden_width, noisy.num_classes};
            net.weight_decay = cfg.weight_decay;
            const selectmix::OofPredictions preds =
                selectmix::oof_predict(noisy, net, cfg.fold_budget(), cfg.kfold, cfg.seed);
            selectmix::write_oof_csv(preds, oof_out);
            const std::vector<int> mismatches = selectmix::mismatch_set(noisy, preds);
            if (!mismatch_out.empty()) {
                selectmix::write_index_file(mismatches, mismatch_out);
            }
            std::cout << "wrote " << preds.size() << " predictions to " << oof_out << " ("
                      << mismatches.size() << " mismatches)\n";
        } else if (train->parsed()) {
            const ExperimentConfig cfg = train_flags.resolve();
            const selectmix::ExperimentReport report = selectmix::run_experiment(cfg);
            if (!train_out.empty()) {
                selectmix::write_results_csv({selectmix::result_row(report)}, train_out);
            }
            std::cout << "strategy=" << cfg.strategy << " seed=" << cfg.seed
                      << " best_acc=" << report.best_acc << " last10_avg=" << report.last10_avg
                      << " rho=" << report.rho << " wall_time_s=" << report.wall_time_s
                      << " config_hash=" << report.config_hash << "\n";
        } else if (theory->parsed()) {
            const ExperimentConfig cfg = theory_flags.resolve();
            const selectmix::RiskReport report = selectmix::theory_check(cfg, theory_draws);
            if (!theory_out.empty()) {
                selectmix::write_risk_report(report, theory_out);
            }
            std::cout << selectmix::risk_report_json(report);
        } else if (sweep->parsed()) {
            const ExperimentConfig base = sweep_flags.resolve();
            const selectmix::SweepOutcome outcome = selectmix::sweep_alpha(
                base, parse_double_list(sweep_alphas), parse_seed_list(sweep_seeds));
            selectmix::write_results_csv(outcome.rows, sweep_out);
            std::cout << "wrote " << outcome.rows.size() << " rows to " << sweep_out << "\n";
            for (const std::string& failure : outcome.failures) {
                std::cerr << "failed cell: " << failure << "\n";
            }
            if (outcome.first_error) {
                std::rethrow_exception(outcome.first_error);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
