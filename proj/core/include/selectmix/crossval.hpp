#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selectmix/dataset.hpp"
#include "selectmix/net.hpp"
#include "selectmix/types.hpp"

namespace selectmix {

// Disjoint K-way split of [0, n). Fold sizes differ by at most one, with the
// larger folds first; membership is a deterministic function of the seed.
struct FoldPlan {
    int num_folds = 0;
    std::vector<int> fold_of;  // fold_of[i] in [0, num_folds)

    int size() const { return static_cast<int>(fold_of.size()); }
    std::vector<int> heldout_indices(int fold) const;
    std::vector<int> train_indices(int fold) const;
};

FoldPlan make_folds(int n, int num_folds, std::uint64_t seed);

// Epoch/batch budget for the fold-stage models.
struct TrainingBudget {
    SgdHyper hyper;
    int epochs = 1;
    int batch_size = 128;

    void validate() const;
};

// Out-of-fold class posteriors: row i comes from the one fold model that
// never saw sample i during training.
struct OofPredictions {
    Matrix probs;  // N x C
    std::vector<int> pred_labels;
    std::vector<double> confidence;  // max-probability per row

    int size() const { return static_cast<int>(probs.rows()); }
    int num_classes() const { return static_cast<int>(probs.cols()); }
};

// Trains one fresh network per fold on that fold's complement (plain
// minibatch SGD against the observed labels) and evaluates each network on
// its held-out fold. Fold workers run on up to SELECTMIX_THREADS threads;
// results are identical for any thread count.
OofPredictions oof_predict(const Dataset& ds, const NetworkSpec& net_spec,
                           const TrainingBudget& budget, int num_folds, std::uint64_t seed);

// Ascending indices where the observed label disagrees with the out-of-fold
// prediction.
std::vector<int> mismatch_set(const Dataset& ds, const OofPredictions& oof);

// index_of[c] = ascending indices predicted as class c.
std::vector<std::vector<int>> class_index(const std::vector<int>& pred_labels, int num_classes);

// Dense membership flags for a sorted mismatch index set.
std::vector<std::uint8_t> mismatch_flags(const std::vector<int>& mismatch, int n);

// The reliable view: class_index with every mismatched sample removed.
std::vector<std::vector<int>> reliable_class_index(const std::vector<std::vector<int>>& cls_idx,
                                                   const std::vector<std::uint8_t>& is_mismatch);

// CSV with header index,pred_label,confidence,prob_0..prob_{C-1};
// probabilities round-trip exactly.
void write_oof_csv(const OofPredictions& oof, const std::string& path);
OofPredictions read_oof_csv(const std::string& path);

// Newline-separated sample indices (one per line, possibly empty).
void write_index_file(const std::vector<int>& indices, const std::string& path);
std::vector<int> read_index_file(const std::string& path);

// Number of fold-stage networks trained since process start (or the last
// reset). Lets callers verify that strategies without a selection stage
// never pay for one.
std::uint64_t fold_training_count();
void reset_fold_training_count();

}  // namespace selectmix
