#include "selectmix/mixing.hpp"

#include <algorithm>
#include <cmath>

#include "selectmix/net.hpp"

namespace selectmix {

namespace {

// Uniform member of `pool` other than i; -1 when none exists. Pools are
// ascending, so i is located by binary search and skipped by remapping the
// draw, which keeps the single below() call independent of whether i is a
// member.
int draw_from_pool(const std::vector<int>& pool, int i, Rng& rng) {
    const auto it = std::lower_bound(pool.begin(), pool.end(), i);
    const bool contains_i = it != pool.end() && *it == i;
    const int usable = static_cast<int>(pool.size()) - (contains_i ? 1 : 0);
    if (usable <= 0) {
        return -1;
    }
    int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(usable)));
    if (contains_i && r >= static_cast<int>(it - pool.begin())) {
        ++r;
    }
    return pool[r];
}

int draw_reliable_first(const std::vector<int>& members,
                        const std::vector<std::uint8_t>& is_mismatch, int i, Rng& rng) {
    std::vector<int> reliable;
    reliable.reserve(members.size());
    for (int j : members) {
        if (!is_mismatch[j]) {
            reliable.push_back(j);
        }
    }
    const int partner = draw_from_pool(reliable, i, rng);
    if (partner >= 0) {
        return partner;
    }
    return draw_from_pool(members, i, rng);
}

void unmixed_row(MixedBatch& mb, int t, const Dataset& ds, int i) {
    mb.inputs.row(t) = ds.features.row(i);
    mb.lambda[t] = 1.0;
    mb.label_a[t] = ds.noisy_labels[i];
    mb.label_b[t] = ds.noisy_labels[i];
    mb.mixed_flag[t] = 0;
}

void require(const void* ptr, const char* what, const char* strategy) {
    if (ptr == nullptr) {
        throw InputError(std::string("build_mixed_batch: strategy ") + strategy +
                         " requires " + what);
    }
}

}  // namespace

void MixStrategy::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw SpecError("MixStrategy: alpha must be positive and finite, got " +
                        std::to_string(alpha));
    }
}

const char* to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::kErm: return "erm";
        case StrategyKind::kMixup: return "mixup";
        case StrategyKind::kMixupStar: return "mixup_star";
        case StrategyKind::kSelectMix: return "selectmix";
    }
    throw SpecError("unknown strategy kind");
}

StrategyKind parse_strategy(const std::string& name) {
    if (name == "erm") return StrategyKind::kErm;
    if (name == "mixup") return StrategyKind::kMixup;
    if (name == "mixup_star") return StrategyKind::kMixupStar;
    if (name == "selectmix") return StrategyKind::kSelectMix;
    throw SpecError("unknown strategy '" + name +
                    "' (expected erm, mixup, mixup_star, or selectmix)");
}

const char* to_string(PartnerPool pool) {
    switch (pool) {
        case PartnerPool::kReliablePredClass: return "reliable_pred_class";
        case PartnerPool::kAnyPredClass: return "any_pred_class";
        case PartnerPool::kNoisyClass: return "noisy_class";
    }
    throw SpecError("unknown partner pool");
}

PartnerPool parse_partner_pool(const std::string& name) {
    if (name == "reliable_pred_class") return PartnerPool::kReliablePredClass;
    if (name == "any_pred_class") return PartnerPool::kAnyPredClass;
    if (name == "noisy_class") return PartnerPool::kNoisyClass;
    throw SpecError("unknown partner pool '" + name +
                    "' (expected reliable_pred_class, any_pred_class, or noisy_class)");
}

double sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw SpecError("sample_lambda: alpha must be positive and finite, got " +
                        std::to_string(alpha));
    }
    return rng.beta_symmetric(alpha);
}

int select_partner(int i, const std::vector<std::vector<int>>& cls_idx,
                   const std::vector<std::uint8_t>& is_mismatch,
                   const std::vector<int>& noisy_labels, const OofPredictions& oof,
                   PartnerPool pool, Rng& rng) {
    int target_class = 0;
    switch (pool) {
        case PartnerPool::kReliablePredClass:
        case PartnerPool::kAnyPredClass:
            target_class = oof.pred_labels[i];
            break;
        case PartnerPool::kNoisyClass:
            target_class = noisy_labels[i];
            break;
    }
    if (target_class < 0 || target_class >= static_cast<int>(cls_idx.size())) {
        return -1;
    }
    const std::vector<int>& members = cls_idx[target_class];
    if (pool == PartnerPool::kAnyPredClass) {
        return draw_from_pool(members, i, rng);
    }
    return draw_reliable_first(members, is_mismatch, i, rng);
}

MixedBatch build_mixed_batch(const std::vector<int>& batch, const Dataset& ds,
                             const OofPredictions* oof,
                             const std::vector<std::uint8_t>* is_mismatch,
                             const std::vector<std::vector<int>>* cls_idx,
                             const MixStrategy& strat, Rng& rng) {
    strat.validate();
    const int b = static_cast<int>(batch.size());
    for (int i : batch) {
        if (i < 0 || i >= ds.size()) {
            throw InputError("build_mixed_batch: sample index " + std::to_string(i) +
                             " out of range for " + std::to_string(ds.size()) + " rows");
        }
    }
    MixedBatch mb;
    mb.inputs.resize(b, ds.dim());
    mb.lambda.assign(b, 1.0);
    mb.label_a.assign(b, 0);
    mb.label_b.assign(b, 0);
    mb.mixed_flag.assign(b, 0);

    switch (strat.kind) {
        case StrategyKind::kErm: {
            for (int t = 0; t < b; ++t) {
                unmixed_row(mb, t, ds, batch[t]);
            }
            break;
        }
        case StrategyKind::kMixup:
        case StrategyKind::kMixupStar: {
            if (strat.kind == StrategyKind::kMixupStar) {
                require(oof, "out-of-fold predictions", "mixup_star");
            }
            std::vector<int> perm(b);
            for (int t = 0; t < b; ++t) {
                perm[t] = t;
            }
            rng.shuffle(perm);
            auto label_of = [&](int i) {
                return strat.kind == StrategyKind::kMixupStar ? oof->pred_labels[i]
                                                              : ds.noisy_labels[i];
            };
            for (int t = 0; t < b; ++t) {
                const int i = batch[t];
                const int j = batch[perm[t]];
                const double lam = sample_lambda(strat.alpha, rng);
                mb.inputs.row(t) = lam * ds.features.row(i) + (1.0 - lam) * ds.features.row(j);
                mb.lambda[t] = lam;
                mb.label_a[t] = label_of(i);
                mb.label_b[t] = label_of(j);
                mb.mixed_flag[t] = 1;
            }
            break;
        }
        case StrategyKind::kSelectMix: {
            require(oof, "out-of-fold predictions", "selectmix");
            require(is_mismatch, "mismatch flags", "selectmix");
            require(cls_idx, "a class index", "selectmix");
            for (int t = 0; t < b; ++t) {
                const int i = batch[t];
                if (!(*is_mismatch)[i]) {
                    unmixed_row(mb, t, ds, i);
                    continue;
                }
                const int j = select_partner(i, *cls_idx, *is_mismatch, ds.noisy_labels, *oof,
                                             strat.pool, rng);
                if (j < 0) {
                    unmixed_row(mb, t, ds, i);
                    continue;
                }
                const double lam = sample_lambda(strat.alpha, rng);
                mb.inputs.row(t) = lam * ds.features.row(i) + (1.0 - lam) * ds.features.row(j);
                mb.lambda[t] = lam;
                mb.label_a[t] = ds.noisy_labels[i];
                mb.label_b[t] = oof->pred_labels[i];
                mb.mixed_flag[t] = 1;
            }
            break;
        }
    }
    return mb;
}

double composite_loss(const Matrix& probs, const MixedBatch& mb) {
    if (probs.rows() != mb.size()) {
        throw ShapeError("composite_loss: " + std::to_string(probs.rows()) +
                         " probability rows for batch of " + std::to_string(mb.size()));
    }
    const int C = static_cast<int>(probs.cols());
    double total = 0.0;
    for (int t = 0; t < mb.size(); ++t) {
        if (mb.label_a[t] < 0 || mb.label_a[t] >= C || mb.label_b[t] < 0 || mb.label_b[t] >= C) {
            throw ShapeError("composite_loss: label out of range at row " + std::to_string(t));
        }
        const double la = -std::log(std::max(probs(t, mb.label_a[t]), kProbFloor));
        const double lb = -std::log(std::max(probs(t, mb.label_b[t]), kProbFloor));
        total += mb.lambda[t] * la + (1.0 - mb.lambda[t]) * lb;
    }
    return total / std::max(mb.size(), 1);
}

Matrix soft_targets(const MixedBatch& mb, int num_classes) {
    Matrix targets = Matrix::Zero(mb.size(), num_classes);
    for (int t = 0; t < mb.size(); ++t) {
        if (mb.label_a[t] < 0 || mb.label_a[t] >= num_classes || mb.label_b[t] < 0 ||
            mb.label_b[t] >= num_classes) {
            throw ShapeError("soft_targets: label out of range at row " + std::to_string(t));
        }
        if (!mb.mixed_flag[t]) {
            targets(t, mb.label_a[t]) = 1.0;
            continue;
        }
        targets(t, mb.label_a[t]) += mb.lambda[t];
        targets(t, mb.label_b[t]) += 1.0 - mb.lambda[t];
    }
    return targets;
}

}  // namespace selectmix
