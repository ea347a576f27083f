#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selectmix/crossval.hpp"
#include "selectmix/dataset.hpp"
#include "selectmix/rng.hpp"
#include "selectmix/types.hpp"

namespace selectmix {

enum class StrategyKind { kErm, kMixup, kMixupStar, kSelectMix };

// Where a mismatched sample's partner comes from:
//   reliable_pred_class — reliable members of the sample's predicted class
//                         (fallback: any member of that class);
//   any_pred_class      — any member of the predicted class;
//   noisy_class         — reliable-first members of the class named by the
//                         sample's observed label.
enum class PartnerPool { kReliablePredClass, kAnyPredClass, kNoisyClass };

struct MixStrategy {
    StrategyKind kind = StrategyKind::kErm;
    double alpha = 1.0;
    PartnerPool pool = PartnerPool::kReliablePredClass;  // selectmix only

    void validate() const;
};

const char* to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);
const char* to_string(PartnerPool pool);
PartnerPool parse_partner_pool(const std::string& name);

// One interpolated minibatch. label_a carries weight lambda in the loss,
// label_b carries 1-lambda. Rows with mixed_flag=false are exact copies of
// their source row with lambda exactly 1 and label_a == label_b.
struct MixedBatch {
    Matrix inputs;  // B x d
    std::vector<double> lambda;
    std::vector<int> label_a;
    std::vector<int> label_b;
    std::vector<std::uint8_t> mixed_flag;

    int size() const { return static_cast<int>(inputs.rows()); }
};

// One Beta(alpha, alpha) draw.
double sample_lambda(double alpha, Rng& rng);

// Uniform draw from the pool described above, never returning i itself;
// -1 when every candidate pool is empty (caller keeps the sample unmixed).
int select_partner(int i, const std::vector<std::vector<int>>& cls_idx,
                   const std::vector<std::uint8_t>& is_mismatch,
                   const std::vector<int>& noisy_labels, const OofPredictions& oof,
                   PartnerPool pool, Rng& rng);

// Batch construction for all four strategies. oof/is_mismatch/cls_idx may be
// null for strategies that do not consume them (erm needs none, mixup needs
// none, mixup_star needs oof). Draw order per batch:
//   mixup / mixup_star: one in-batch partner permutation, then one lambda per
//   position in ascending order;
//   selectmix: for each mismatched position in ascending order, the partner
//   draw then the lambda draw — so a batch without mismatches consumes no
//   randomness at all and its rows are exact copies.
MixedBatch build_mixed_batch(const std::vector<int>& batch, const Dataset& ds,
                             const OofPredictions* oof,
                             const std::vector<std::uint8_t>* is_mismatch,
                             const std::vector<std::vector<int>>* cls_idx,
                             const MixStrategy& strat, Rng& rng);

// Mean over the batch of lambda*ce(p_i, label_a) + (1-lambda)*ce(p_i, label_b),
// the training objective for every strategy (for unmixed rows it is plain
// cross-entropy against the observed label).
double composite_loss(const Matrix& probs, const MixedBatch& mb);

// The equivalent soft targets: row i is lambda*e_{label_a} + (1-lambda)*e_{label_b},
// with unmixed rows written as exact one-hot vectors.
Matrix soft_targets(const MixedBatch& mb, int num_classes);

}  // namespace selectmix
