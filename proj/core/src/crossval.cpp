#include "selectmix/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "selectmix/rng.hpp"

namespace selectmix {

namespace {

std::atomic<std::uint64_t> g_fold_training_count{0};

int thread_budget() {
    const char* raw = std::getenv("SELECTMIX_THREADS");
    if (raw == nullptr) {
        return 1;
    }
    const int parsed = std::atoi(raw);
    return parsed >= 1 ? parsed : 1;
}

// Plain minibatch SGD against the observed labels; the fold stage never
// mixes. Batches walk a per-epoch shuffled index order, including the final
// partial batch.
NetworkState train_fold_model(const Dataset& ds, const std::vector<int>& train_idx,
                              const NetworkSpec& net_spec, const TrainingBudget& budget,
                              std::uint64_t seed, int fold) {
    Rng init_rng(seed, {stream::kFoldTrain, static_cast<std::uint64_t>(fold), 0});
    NetworkState state = init_network(net_spec, init_rng);
    const int C = net_spec.num_classes();
    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < budget.epochs; ++epoch) {
        Rng shuffle_rng(
            seed, {stream::kFoldTrain, static_cast<std::uint64_t>(fold), 1,
                   static_cast<std::uint64_t>(epoch)});
        shuffle_rng.shuffle(order);
        const double lr = lr_at(budget.hyper, epoch);
        const int n = static_cast<int>(order.size());
        for (int start = 0; start < n; start += budget.batch_size) {
            const int b = std::min(budget.batch_size, n - start);
            Matrix inputs(b, ds.dim());
            Matrix targets = Matrix::Zero(b, C);
            for (int t = 0; t < b; ++t) {
                const int i = order[start + t];
                inputs.row(t) = ds.features.row(i);
                targets(t, ds.noisy_labels[i]) = 1.0;
            }
            Gradients grads = gradients(net_spec, state, inputs, targets);
            sgd_step(state, grads, budget.hyper, lr);
        }
    }
    g_fold_training_count.fetch_add(1, std::memory_order_relaxed);
    return state;
}

}  // namespace

std::vector<int> FoldPlan::heldout_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (fold_of[i] == fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<int> FoldPlan::train_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (fold_of[i] != fold) {
            out.push_back(i);
        }
    }
    return out;
}

FoldPlan make_folds(int n, int num_folds, std::uint64_t seed) {
    if (num_folds < 2) {
        throw PlanError("make_folds: need at least 2 folds, got " + std::to_string(num_folds));
    }
    if (num_folds > n) {
        throw PlanError("make_folds: " + std::to_string(num_folds) + " folds exceed " +
                        std::to_string(n) + " samples");
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed, {stream::kFoldPlan});
    rng.shuffle(perm);

    FoldPlan plan;
    plan.num_folds = num_folds;
    plan.fold_of.assign(n, -1);
    const int base = n / num_folds;
    const int remainder = n % num_folds;
    int cursor = 0;
    for (int k = 0; k < num_folds; ++k) {
        const int fold_size = base + (k < remainder ? 1 : 0);
        for (int t = 0; t < fold_size; ++t) {
            plan.fold_of[perm[cursor++]] = k;
        }
    }
    return plan;
}

void TrainingBudget::validate() const {
    hyper.validate();
    if (epochs < 1) {
        throw SpecError("TrainingBudget: epochs must be >= 1, got " + std::to_string(epochs));
    }
    if (batch_size < 1) {
        throw SpecError("TrainingBudget: batch_size must be >= 1, got " +
                        std::to_string(batch_size));
    }
}

OofPredictions oof_predict(const Dataset& ds, const NetworkSpec& net_spec,
                           const TrainingBudget& budget, int num_folds, std::uint64_t seed) {
    net_spec.validate();
    budget.validate();
    if (ds.size() == 0) {
        throw InputError("oof_predict: empty dataset");
    }
    if (static_cast<int>(ds.noisy_labels.size()) != ds.size()) {
        throw ShapeError("oof_predict: label count " + std::to_string(ds.noisy_labels.size()) +
                         " != rows " + std::to_string(ds.size()));
    }
    if (net_spec.input_dim() != ds.dim()) {
        throw ShapeError("oof_predict: network expects input dim " +
                         std::to_string(net_spec.input_dim()) + ", dataset has " +
                         std::to_string(ds.dim()));
    }
    if (net_spec.num_classes() < ds.num_classes) {
        throw ShapeError("oof_predict: network emits " + std::to_string(net_spec.num_classes()) +
                         " classes, dataset has " + std::to_string(ds.num_classes));
    }

    const FoldPlan plan = make_folds(ds.size(), num_folds, seed);
    OofPredictions oof;
    oof.probs.resize(ds.size(), net_spec.num_classes());
    oof.pred_labels.assign(ds.size(), -1);
    oof.confidence.assign(ds.size(), 0.0);

    std::vector<std::exception_ptr> fold_error(num_folds, nullptr);
    std::atomic<int> next_fold{0};
    auto worker = [&]() {
        while (true) {
            const int k = next_fold.fetch_add(1, std::memory_order_relaxed);
            if (k >= num_folds) {
                return;
            }
            try {
                const NetworkState model =
                    train_fold_model(ds, plan.train_indices(k), net_spec, budget, seed, k);
                const std::vector<int> heldout = plan.heldout_indices(k);
                Matrix inputs(heldout.size(), ds.dim());
                for (std::size_t t = 0; t < heldout.size(); ++t) {
                    inputs.row(static_cast<int>(t)) = ds.features.row(heldout[t]);
                }
                const Matrix probs = forward(net_spec, model, inputs);
                for (std::size_t t = 0; t < heldout.size(); ++t) {
                    const int i = heldout[t];
                    oof.probs.row(i) = probs.row(static_cast<int>(t));
                    oof.pred_labels[i] = argmax_row(probs.row(static_cast<int>(t)));
                    oof.confidence[i] = probs.row(static_cast<int>(t)).maxCoeff();
                }
            } catch (...) {
                fold_error[k] = std::current_exception();
            }
        }
    };

    const int threads = std::min(thread_budget(), num_folds);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (int k = 0; k < num_folds; ++k) {
        if (fold_error[k]) {
            try {
                std::rethrow_exception(fold_error[k]);
            } catch (const std::exception& e) {
                throw TrainingError("fold " + std::to_string(k) + ": " + e.what());
            }
        }
    }
    return oof;
}

std::vector<int> mismatch_set(const Dataset& ds, const OofPredictions& oof) {
    if (oof.size() != ds.size()) {
        throw ShapeError("mismatch_set: " + std::to_string(oof.size()) + " predictions for " +
                         std::to_string(ds.size()) + " rows");
    }
    std::vector<int> out;
    for (int i = 0; i < ds.size(); ++i) {
        if (ds.noisy_labels[i] != oof.pred_labels[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::vector<int>> class_index(const std::vector<int>& pred_labels, int num_classes) {
    std::vector<std::vector<int>> index(num_classes);
    for (std::size_t i = 0; i < pred_labels.size(); ++i) {
        const int c = pred_labels[i];
        if (c < 0 || c >= num_classes) {
            throw InputError("class_index: label " + std::to_string(c) + " at position " +
                             std::to_string(i) + " out of range for " +
                             std::to_string(num_classes) + " classes");
        }
        index[c].push_back(static_cast<int>(i));
    }
    return index;
}

std::vector<std::uint8_t> mismatch_flags(const std::vector<int>& mismatch, int n) {
    std::vector<std::uint8_t> flags(n, 0);
    for (int i : mismatch) {
        if (i < 0 || i >= n) {
            throw InputError("mismatch_flags: index " + std::to_string(i) +
                             " out of range for " + std::to_string(n) + " samples");
        }
        flags[i] = 1;
    }
    return flags;
}

std::vector<std::vector<int>> reliable_class_index(const std::vector<std::vector<int>>& cls_idx,
                                                   const std::vector<std::uint8_t>& is_mismatch) {
    std::vector<std::vector<int>> reliable(cls_idx.size());
    const int n = static_cast<int>(is_mismatch.size());
    for (std::size_t c = 0; c < cls_idx.size(); ++c) {
        for (int i : cls_idx[c]) {
            if (i < 0 || i >= n) {
                throw InputError("reliable_class_index: index " + std::to_string(i) +
                                 " out of range for " + std::to_string(n) + " samples");
            }
            if (!is_mismatch[i]) {
                reliable[c].push_back(i);
            }
        }
    }
    return reliable;
}

void write_oof_csv(const OofPredictions& oof, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open " + path + " for writing");
    }
    out << "index,pred_label,confidence";
    for (int c = 0; c < oof.num_classes(); ++c) {
        out << ",prob_" << c;
    }
    out << '\n';
    char buf[64];
    for (int i = 0; i < oof.size(); ++i) {
        out << i << ',' << oof.pred_labels[i] << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", oof.confidence[i]);
        out << buf;
        for (int c = 0; c < oof.num_classes(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", oof.probs(i, c));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) {
        throw InputError("write failed for " + path);
    }
}

OofPredictions read_oof_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw FormatError(path + ": empty file");
    }
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cols.push_back(cell);
        }
    }
    if (cols.size() < 4 || cols[0] != "index" || cols[1] != "pred_label" ||
        cols[2] != "confidence") {
        throw FormatError(path + ": header must start with index,pred_label,confidence");
    }
    const int C = static_cast<int>(cols.size()) - 3;
    for (int c = 0; c < C; ++c) {
        if (cols[3 + c] != "prob_" + std::to_string(c)) {
            throw FormatError(path + ": expected column prob_" + std::to_string(c) + ", found " +
                              cols[3 + c]);
        }
    }

    struct Row {
        int index;
        int pred;
        double conf;
        std::vector<double> probs;
    };
    std::vector<Row> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (static_cast<int>(cells.size()) != 3 + C) {
            throw FormatError(path + ": row with " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(3 + C));
        }
        Row r;
        r.index = std::stoi(cells[0]);
        r.pred = std::stoi(cells[1]);
        r.conf = std::stod(cells[2]);
        r.probs.resize(C);
        for (int c = 0; c < C; ++c) {
            r.probs[c] = std::stod(cells[3 + c]);
        }
        rows.push_back(std::move(r));
    }

    const int n = static_cast<int>(rows.size());
    OofPredictions oof;
    oof.probs.resize(n, C);
    oof.pred_labels.assign(n, -1);
    oof.confidence.assign(n, 0.0);
    std::vector<char> seen(n, 0);
    for (const Row& r : rows) {
        if (r.index < 0 || r.index >= n || seen[r.index]) {
            throw FormatError(path + ": sample index " + std::to_string(r.index) +
                              " missing, duplicated, or out of range");
        }
        seen[r.index] = 1;
        for (int c = 0; c < C; ++c) {
            oof.probs(r.index, c) = r.probs[c];
        }
        oof.pred_labels[r.index] = r.pred;
        oof.confidence[r.index] = r.conf;
    }
    return oof;
}

void write_index_file(const std::vector<int>& indices, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open " + path + " for writing");
    }
    for (int i : indices) {
        out << i << '\n';
    }
    if (!out) {
        throw InputError("write failed for " + path);
    }
}

std::vector<int> read_index_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    std::vector<int> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(std::stoi(line));
        } catch (const std::exception&) {
            throw FormatError(path + ": bad index line '" + line + "'");
        }
    }
    return out;
}

std::uint64_t fold_training_count() {
    return g_fold_training_count.load(std::memory_order_relaxed);
}

void reset_fold_training_count() { g_fold_training_count.store(0, std::memory_order_relaxed); }

}  // namespace selectmix
