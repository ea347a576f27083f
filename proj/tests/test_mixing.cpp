#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <doctest.h>

#include "selectmix/crossval.hpp"
#include "selectmix/dataset.hpp"
#include "selectmix/mixing.hpp"
#include "selectmix/net.hpp"
#include "test_support.hpp"

using namespace selectmix;

namespace {

// Features whose first coordinate is the sample index, so mixture partners
// can be reconstructed from a mixed row and its recorded weight.
Dataset identifier_dataset(std::vector<int> noisy, int num_classes) {
    Dataset ds;
    const int n = static_cast<int>(noisy.size());
    ds.features.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        ds.features(i, 0) = static_cast<double>(i);
        ds.features(i, 1) = 10.0 * i;
    }
    ds.noisy_labels = std::move(noisy);
    ds.num_classes = num_classes;
    return ds;
}

OofPredictions predictions_of(std::vector<int> preds, int num_classes) {
    OofPredictions oof;
    const int n = static_cast<int>(preds.size());
    oof.probs = Matrix::Zero(n, num_classes);
    for (int i = 0; i < n; ++i) {
        oof.probs(i, preds[i]) = 1.0;
    }
    oof.pred_labels = std::move(preds);
    oof.confidence.assign(n, 1.0);
    return oof;
}

MixStrategy strategy(StrategyKind kind, double alpha = 1.0,
                     PartnerPool pool = PartnerPool::kReliablePredClass) {
    MixStrategy strat;
    strat.kind = kind;
    strat.alpha = alpha;
    strat.pool = pool;
    return strat;
}

// Source index recovered from a mixed identifier row: the partner the row was
// interpolated toward.
int reconstruct_partner(const MixedBatch& mb, int t, int i) {
    const double lam = mb.lambda[t];
    REQUIRE(lam > 1e-12);
    REQUIRE(lam < 1.0 - 1e-12);
    const double raw = (mb.inputs(t, 0) - lam * i) / (1.0 - lam);
    const int j = static_cast<int>(std::lround(raw));
    REQUIRE(std::abs(raw - j) < 1e-6);
    // The second coordinate must agree with the same reconstruction.
    REQUIRE(std::abs(mb.inputs(t, 1) - (lam * 10.0 * i + (1.0 - lam) * 10.0 * j)) < 1e-6);
    return j;
}

std::vector<int> iota_batch(int n) {
    std::vector<int> batch(n);
    for (int i = 0; i < n; ++i) {
        batch[i] = i;
    }
    return batch;
}

}  // namespace

// ---------------------------------------------------------------------------
// Interpolation weights
// ---------------------------------------------------------------------------

TEST_CASE("alpha one draws uniform interpolation weights") {
    Rng rng(101);
    const int draws = 1000000;
    double sum = 0.0;
    double sum_var_term = 0.0;
    for (int k = 0; k < draws; ++k) {
        const double lam = sample_lambda(1.0, rng);
        CHECK(lam >= 0.0);
        CHECK(lam <= 1.0);
        sum += lam;
        sum_var_term += lam * (1.0 - lam);
    }
    CHECK(sum / draws == doctest::Approx(0.5).epsilon(0.004));
    // E[lambda * (1 - lambda)] = 1/6 for the uniform distribution.
    CHECK(sum_var_term / draws == doctest::Approx(1.0 / 6.0).epsilon(0.012));
}

TEST_CASE("interpolation weights are symmetric around one half") {
    for (double alpha : {0.5, 4.0}) {
        Rng rng(202);
        const int draws = 200000;
        int below_half = 0;
        for (int k = 0; k < draws; ++k) {
            below_half += sample_lambda(alpha, rng) < 0.5 ? 1 : 0;
        }
        const double frac = static_cast<double>(below_half) / draws;
        CHECK(frac == doctest::Approx(0.5).epsilon(0.012));
    }
}

TEST_CASE("small alpha concentrates weights at the extremes, large at the middle") {
    Rng rng(303);
    int extreme_small = 0, extreme_large = 0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
        extreme_small += sample_lambda(0.1, rng) < 0.1 ? 1 : 0;
    }
    for (int k = 0; k < draws; ++k) {
        extreme_large += sample_lambda(4.0, rng) < 0.1 ? 1 : 0;
    }
    CHECK(extreme_small > 3 * extreme_large);
}

TEST_CASE("non-positive or non-finite alpha is rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_lambda(0.0, rng), SpecError);
    CHECK_THROWS_AS(sample_lambda(-1.0, rng), SpecError);
    CHECK_THROWS_AS(sample_lambda(std::numeric_limits<double>::infinity(), rng), SpecError);
    CHECK_THROWS_AS(sample_lambda(std::nan(""), rng), SpecError);
}

// ---------------------------------------------------------------------------
// Partner selection
// ---------------------------------------------------------------------------

TEST_CASE("a singleton pool is chosen deterministically") {
    const std::vector<std::vector<int>> cls_idx = {{5}};
    const std::vector<std::uint8_t> flags(6, 0);
    const std::vector<int> noisy(6, 0);
    const OofPredictions oof = predictions_of({0, 0, 0, 0, 0, 0}, 1);
    Rng rng(11);
    CHECK(select_partner(3, cls_idx, flags, noisy, oof, PartnerPool::kReliablePredClass, rng) ==
          5);
}

TEST_CASE("reliable members are preferred and the full class is the fallback") {
    // Class 0 members {1,2,3}; 2 and 3 are mismatched.
    const std::vector<std::vector<int>> cls_idx = {{1, 2, 3}};
    const std::vector<int> noisy(4, 0);
    const OofPredictions oof = predictions_of({0, 0, 0, 0}, 1);

    std::vector<std::uint8_t> flags = {1, 0, 1, 1};
    Rng rng(12);
    for (int k = 0; k < 50; ++k) {
        CHECK(select_partner(0, cls_idx, flags, noisy, oof, PartnerPool::kReliablePredClass,
                             rng) == 1);
    }

    // With every member mismatched the fallback draws from the full class.
    flags = {1, 1, 1, 1};
    std::set<int> seen;
    for (int k = 0; k < 100; ++k) {
        const int p = select_partner(0, cls_idx, flags, noisy, oof,
                                     PartnerPool::kReliablePredClass, rng);
        CHECK(p >= 1);
        CHECK(p <= 3);
        seen.insert(p);
    }
    CHECK(seen.size() >= 2);
}

TEST_CASE("empty pools and self-only pools yield no partner") {
    const std::vector<int> noisy(3, 0);
    const OofPredictions oof = predictions_of({0, 0, 0}, 1);
    Rng rng(13);

    const std::vector<std::vector<int>> empty_cls = {{}};
    const std::vector<std::uint8_t> flags = {1, 0, 0};
    CHECK(select_partner(0, empty_cls, flags, noisy, oof, PartnerPool::kReliablePredClass,
                         rng) == -1);

    // The sample itself is the only member of its predicted class.
    const std::vector<std::vector<int>> self_cls = {{0}};
    CHECK(select_partner(0, self_cls, flags, noisy, oof, PartnerPool::kReliablePredClass,
                         rng) == -1);
    CHECK(select_partner(0, self_cls, flags, noisy, oof, PartnerPool::kAnyPredClass, rng) == -1);

    // A predicted class beyond the index bounds also yields no partner.
    const OofPredictions wild = predictions_of({2, 0, 0}, 3);
    const std::vector<std::vector<int>> two_cls = {{1}, {2}};
    CHECK(select_partner(0, two_cls, flags, noisy, wild, PartnerPool::kReliablePredClass,
                         rng) == -1);
}

TEST_CASE("the any-pool ignores reliability and the noisy pool follows the observed label") {
    const std::vector<int> noisy = {1, 0, 0, 1};
    const OofPredictions oof = predictions_of({0, 0, 0, 1}, 2);
    const std::vector<std::vector<int>> cls_idx = {{0, 1, 2}, {3}};
    const std::vector<std::uint8_t> flags = {1, 1, 1, 0};
    Rng rng(14);

    // any_pred_class draws from predicted class 0 even though all are mismatched
    for (int k = 0; k < 20; ++k) {
        const int p = select_partner(0, cls_idx, flags, noisy, oof, PartnerPool::kAnyPredClass,
                                     rng);
        CHECK(p >= 1);
        CHECK(p <= 2);
    }
    // noisy_class follows noisy label 1, whose only member is sample 3
    for (int k = 0; k < 20; ++k) {
        CHECK(select_partner(0, cls_idx, flags, noisy, oof, PartnerPool::kNoisyClass, rng) == 3);
    }
}

TEST_CASE("partner draws are uniform over the candidate pool") {
    const std::vector<std::vector<int>> cls_idx = {{1, 2, 3, 4}};
    const std::vector<std::uint8_t> flags = {1, 0, 0, 0, 0};
    const std::vector<int> noisy(5, 0);
    const OofPredictions oof = predictions_of({0, 0, 0, 0, 0}, 1);
    Rng rng(15);
    std::vector<int> counts(5, 0);
    const int draws = 40000;
    for (int k = 0; k < draws; ++k) {
        ++counts[select_partner(0, cls_idx, flags, noisy, oof,
                                PartnerPool::kReliablePredClass, rng)];
    }
    CHECK(counts[0] == 0);
    for (int p = 1; p <= 4; ++p) {
        // Multinomial cell with mean 10000 and sigma ~87; allow ~4.6 sigma.
        CHECK(counts[p] > 9600);
        CHECK(counts[p] < 10400);
    }
}

TEST_CASE("selected partners always sit in the demanded class and are never the sample") {
    Rng scenario_rng(16);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 30;
        const int C = 3;
        std::vector<int> noisy(n), preds(n);
        std::vector<std::uint8_t> flags(n);
        for (int i = 0; i < n; ++i) {
            noisy[i] = static_cast<int>(scenario_rng.below(C));
            preds[i] = static_cast<int>(scenario_rng.below(C));
            flags[i] = noisy[i] != preds[i] ? 1 : 0;
        }
        const OofPredictions oof = predictions_of(preds, C);
        const auto cls_idx = class_index(preds, C);
        const auto reliable = reliable_class_index(cls_idx, flags);

        for (PartnerPool pool : {PartnerPool::kReliablePredClass, PartnerPool::kAnyPredClass,
                                 PartnerPool::kNoisyClass}) {
            for (int i = 0; i < n; ++i) {
                if (!flags[i]) {
                    continue;
                }
                const int p =
                    select_partner(i, cls_idx, flags, noisy, oof, pool, scenario_rng);
                if (p < 0) {
                    continue;
                }
                CHECK(p != i);
                const int want =
                    pool == PartnerPool::kNoisyClass ? noisy[i] : preds[i];
                CHECK(preds[p] == want);
                if (pool == PartnerPool::kReliablePredClass || pool == PartnerPool::kNoisyClass) {
                    // Reliable-first: a mismatched partner implies that no
                    // reliable candidate other than i existed.
                    if (flags[p]) {
                        bool reliable_candidate = false;
                        for (int r : reliable[want]) {
                            reliable_candidate |= r != i;
                        }
                        CHECK_FALSE(reliable_candidate);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch construction
// ---------------------------------------------------------------------------

TEST_CASE("erm batches are exact copies and consume no randomness") {
    const Dataset ds = identifier_dataset({0, 1, 0, 1, 1, 0}, 2);
    Rng rng(21);
    Rng untouched(21);
    const MixedBatch mb =
        build_mixed_batch(iota_batch(6), ds, nullptr, nullptr, nullptr,
                          strategy(StrategyKind::kErm), rng);
    for (int t = 0; t < 6; ++t) {
        CHECK(mb.inputs.row(t) == ds.features.row(t));
        CHECK(mb.lambda[t] == 1.0);
        CHECK(mb.label_a[t] == ds.noisy_labels[t]);
        CHECK(mb.label_b[t] == ds.noisy_labels[t]);
        CHECK(mb.mixed_flag[t] == 0);
    }
    CHECK(rng.engine()() == untouched.engine()());
}

TEST_CASE("erm ignores selection inputs even when they are provided") {
    const Dataset ds = identifier_dataset({0, 1, 0}, 2);
    // Deliberately inconsistent selection context: wrong sizes everywhere.
    const OofPredictions poisoned = predictions_of({1}, 2);
    const std::vector<std::uint8_t> bad_flags = {1};
    const std::vector<std::vector<int>> bad_idx = {{99}};
    Rng rng(22);
    const MixedBatch mb = build_mixed_batch(iota_batch(3), ds, &poisoned, &bad_flags, &bad_idx,
                                            strategy(StrategyKind::kErm), rng);
    for (int t = 0; t < 3; ++t) {
        CHECK(mb.inputs.row(t) == ds.features.row(t));
        CHECK(mb.mixed_flag[t] == 0);
    }
}

TEST_CASE("mixup rows interpolate toward an in-batch permutation") {
    const Dataset ds = identifier_dataset({0, 1, 0, 1, 1, 0, 0, 1}, 2);
    Rng rng(23);
    const MixedBatch mb = build_mixed_batch(iota_batch(8), ds, nullptr, nullptr, nullptr,
                                            strategy(StrategyKind::kMixup), rng);
    std::vector<int> partner_of(8);
    for (int t = 0; t < 8; ++t) {
        CHECK(mb.mixed_flag[t] == 1);
        CHECK(mb.label_a[t] == ds.noisy_labels[t]);
        const int j = reconstruct_partner(mb, t, t);
        partner_of[t] = j;
        CHECK(mb.label_b[t] == ds.noisy_labels[j]);
        for (int col = 0; col < 2; ++col) {
            const double lo = std::min(ds.features(t, col), ds.features(j, col));
            const double hi = std::max(ds.features(t, col), ds.features(j, col));
            CHECK(mb.inputs(t, col) >= lo - 1e-12);
            CHECK(mb.inputs(t, col) <= hi + 1e-12);
        }
    }
    // The partner positions form a permutation of the batch.
    std::set<int> unique(partner_of.begin(), partner_of.end());
    CHECK(unique.size() == 8);
}

TEST_CASE("mixup star keeps the mixup geometry but swaps in predicted labels") {
    const Dataset ds = identifier_dataset({0, 1, 0, 1, 1, 0, 0, 1}, 2);
    const OofPredictions oof = predictions_of({1, 1, 1, 0, 1, 1, 0, 0}, 2);
    Rng star_rng(24);
    const MixedBatch star = build_mixed_batch(iota_batch(8), ds, &oof, nullptr, nullptr,
                                              strategy(StrategyKind::kMixupStar), star_rng);
    Rng plain_rng(24);
    const MixedBatch plain = build_mixed_batch(iota_batch(8), ds, nullptr, nullptr, nullptr,
                                               strategy(StrategyKind::kMixup), plain_rng);

    CHECK(star.inputs == plain.inputs);  // same draws, same geometry
    CHECK(star.lambda == plain.lambda);
    for (int t = 0; t < 8; ++t) {
        CHECK(star.label_a[t] == oof.pred_labels[t]);
        const int j = reconstruct_partner(star, t, t);
        CHECK(star.label_b[t] == oof.pred_labels[j]);
    }
}

TEST_CASE("selectmix keeps reliable rows verbatim and mixes mismatches into their pool") {
    // preds: class 0 = {0,2,3}, class 1 = {1,4,5}; mismatches at 1 and 3.
    const std::vector<int> noisy = {0, 0, 0, 1, 1, 1};
    const std::vector<int> preds = {0, 1, 0, 0, 1, 1};
    const Dataset ds = identifier_dataset(noisy, 2);
    const OofPredictions oof = predictions_of(preds, 2);
    const std::vector<int> mismatch = mismatch_set(ds, oof);
    CHECK(mismatch == std::vector<int>{1, 3});
    const auto flags = mismatch_flags(mismatch, 6);
    const auto cls_idx = class_index(preds, 2);

    Rng rng(25);
    const MixedBatch mb = build_mixed_batch(iota_batch(6), ds, &oof, &flags, &cls_idx,
                                            strategy(StrategyKind::kSelectMix), rng);

    for (int t : {0, 2, 4, 5}) {
        CHECK(mb.mixed_flag[t] == 0);
        CHECK(mb.inputs.row(t) == ds.features.row(t));
        CHECK(mb.lambda[t] == 1.0);
        CHECK(mb.label_a[t] == noisy[t]);
        CHECK(mb.label_b[t] == noisy[t]);
    }
    for (int t : {1, 3}) {
        CHECK(mb.mixed_flag[t] == 1);
        CHECK(mb.label_a[t] == noisy[t]);
        CHECK(mb.label_b[t] == preds[t]);
        const int partner = reconstruct_partner(mb, t, t);
        CHECK(partner != t);
        CHECK(preds[partner] == preds[t]);
        CHECK(flags[partner] == 0);  // reliable members exist in both classes
    }
}

TEST_CASE("a mismatch-free selectmix batch equals the erm batch and draws nothing") {
    const Dataset ds = identifier_dataset({0, 1, 0, 1}, 2);
    const OofPredictions oof = predictions_of({0, 1, 0, 1}, 2);
    const std::vector<int> mismatch = mismatch_set(ds, oof);
    CHECK(mismatch.empty());
    const auto flags = mismatch_flags(mismatch, 4);
    const auto cls_idx = class_index(oof.pred_labels, 2);

    Rng sel_rng(26);
    Rng untouched(26);
    const MixedBatch sel = build_mixed_batch(iota_batch(4), ds, &oof, &flags, &cls_idx,
                                             strategy(StrategyKind::kSelectMix), sel_rng);
    Rng erm_rng(26);
    const MixedBatch erm = build_mixed_batch(iota_batch(4), ds, nullptr, nullptr, nullptr,
                                             strategy(StrategyKind::kErm), erm_rng);

    CHECK(sel.inputs == erm.inputs);
    CHECK(sel.lambda == erm.lambda);
    CHECK(sel.label_a == erm.label_a);
    CHECK(sel.label_b == erm.label_b);
    CHECK(sel.mixed_flag == erm.mixed_flag);
    CHECK(sel_rng.engine()() == untouched.engine()());
}

TEST_CASE("a mismatched sample with no possible partner stays unmixed without draws") {
    // Sample 1 is mismatched and is the only member of its predicted class.
    const std::vector<int> noisy = {0, 0, 0};
    const std::vector<int> preds = {0, 1, 0};
    const Dataset ds = identifier_dataset(noisy, 2);
    const OofPredictions oof = predictions_of(preds, 2);
    const auto flags = mismatch_flags({1}, 3);
    const auto cls_idx = class_index(preds, 2);

    Rng rng(27);
    Rng untouched(27);
    const MixedBatch mb = build_mixed_batch(iota_batch(3), ds, &oof, &flags, &cls_idx,
                                            strategy(StrategyKind::kSelectMix), rng);
    CHECK(mb.mixed_flag[1] == 0);
    CHECK(mb.inputs.row(1) == ds.features.row(1));
    CHECK(mb.lambda[1] == 1.0);
    CHECK(rng.engine()() == untouched.engine()());
}

TEST_CASE("strategies demand the inputs they consume") {
    const Dataset ds = identifier_dataset({0, 1}, 2);
    const OofPredictions oof = predictions_of({0, 1}, 2);
    const auto flags = mismatch_flags({}, 2);
    const auto cls_idx = class_index(oof.pred_labels, 2);
    Rng rng(28);

    CHECK_THROWS_AS(build_mixed_batch(iota_batch(2), ds, nullptr, nullptr, nullptr,
                                      strategy(StrategyKind::kMixupStar), rng),
                    InputError);
    CHECK_THROWS_AS(build_mixed_batch(iota_batch(2), ds, nullptr, &flags, &cls_idx,
                                      strategy(StrategyKind::kSelectMix), rng),
                    InputError);
    CHECK_THROWS_AS(build_mixed_batch(iota_batch(2), ds, &oof, nullptr, &cls_idx,
                                      strategy(StrategyKind::kSelectMix), rng),
                    InputError);
    CHECK_THROWS_AS(build_mixed_batch(iota_batch(2), ds, &oof, &flags, nullptr,
                                      strategy(StrategyKind::kSelectMix), rng),
                    InputError);
    CHECK_THROWS_AS(build_mixed_batch({0, 5}, ds, nullptr, nullptr, nullptr,
                                      strategy(StrategyKind::kErm), rng),
                    InputError);
    CHECK_THROWS_AS(build_mixed_batch(iota_batch(2), ds, nullptr, nullptr, nullptr,
                                      strategy(StrategyKind::kMixup, -1.0), rng),
                    SpecError);
}

TEST_CASE("unmixed rows always carry weight one and equal labels") {
    const std::vector<int> noisy = {0, 1, 2, 0, 1, 2, 0, 1};
    const std::vector<int> preds = {0, 1, 0, 0, 2, 2, 0, 1};
    const Dataset ds = identifier_dataset(noisy, 3);
    const OofPredictions oof = predictions_of(preds, 3);
    const auto flags = mismatch_flags(mismatch_set(ds, oof), 8);
    const auto cls_idx = class_index(preds, 3);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        for (StrategyKind kind : {StrategyKind::kErm, StrategyKind::kMixup,
                                  StrategyKind::kMixupStar, StrategyKind::kSelectMix}) {
            const MixedBatch mb = build_mixed_batch(iota_batch(8), ds, &oof, &flags, &cls_idx,
                                                    strategy(kind, 0.5), rng);
            for (int t = 0; t < mb.size(); ++t) {
                CHECK(mb.lambda[t] >= 0.0);
                CHECK(mb.lambda[t] <= 1.0);
                if (!mb.mixed_flag[t]) {
                    CHECK(mb.lambda[t] == 1.0);
                    CHECK(mb.label_a[t] == mb.label_b[t]);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Loss and targets
// ---------------------------------------------------------------------------

TEST_CASE("the two-term loss equals soft cross-entropy against the blended target") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const int b = 6, C = 4;
        MixedBatch mb;
        mb.inputs = Matrix::Zero(b, 1);
        mb.lambda.resize(b);
        mb.label_a.resize(b);
        mb.label_b.resize(b);
        mb.mixed_flag.assign(b, 1);
        for (int t = 0; t < b; ++t) {
            mb.lambda[t] = rng.uniform();
            mb.label_a[t] = static_cast<int>(rng.below(C));
            mb.label_b[t] = static_cast<int>(rng.below(C));
        }
        const Matrix probs = testsupport::random_soft_targets(b, C, rng);
        const Matrix targets = soft_targets(mb, C);

        double expected = 0.0;
        for (int t = 0; t < b; ++t) {
            expected += soft_cross_entropy(probs.row(t), targets.row(t));
        }
        expected /= b;
        CHECK(composite_loss(probs, mb) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("weight one reduces the loss to plain cross-entropy on the first label") {
    MixedBatch mb;
    mb.inputs = Matrix::Zero(1, 1);
    mb.lambda = {1.0};
    mb.label_a = {2};
    mb.label_b = {0};
    mb.mixed_flag = {1};
    Matrix probs(1, 3);
    probs << 0.2, 0.3, 0.5;
    CHECK(composite_loss(probs, mb) == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("an even split averages the two per-label losses") {
    MixedBatch mb;
    mb.inputs = Matrix::Zero(1, 1);
    mb.lambda = {0.5};
    mb.label_a = {0};
    mb.label_b = {1};
    mb.mixed_flag = {1};
    Matrix probs(1, 2);
    probs << std::exp(-1.0), std::exp(-2.0);
    // Per-label losses are exactly 1 and 2, so the blend is 1.5.
    CHECK(composite_loss(probs, mb) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("the loss clamps vanishing probabilities instead of diverging") {
    MixedBatch mb;
    mb.inputs = Matrix::Zero(1, 1);
    mb.lambda = {1.0};
    mb.label_a = {0};
    mb.label_b = {0};
    mb.mixed_flag = {0};
    Matrix probs(1, 2);
    probs << 0.0, 1.0;
    const double loss = composite_loss(probs, mb);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(kProbFloor)).epsilon(1e-12));
}

TEST_CASE("loss shape validation") {
    MixedBatch mb;
    mb.inputs = Matrix::Zero(2, 1);
    mb.lambda = {0.5, 0.5};
    mb.label_a = {0, 1};
    mb.label_b = {1, 0};
    mb.mixed_flag = {1, 1};
    Matrix probs(1, 2);
    probs << 0.5, 0.5;
    CHECK_THROWS_AS(composite_loss(probs, mb), ShapeError);

    Matrix two_rows(2, 2);
    two_rows << 0.5, 0.5, 0.5, 0.5;
    mb.label_a[1] = 7;
    CHECK_THROWS_AS(composite_loss(two_rows, mb), ShapeError);
}

TEST_CASE("soft targets blend one-hots by the recorded weight") {
    MixedBatch mb;
    mb.inputs = Matrix::Zero(3, 1);
    mb.lambda = {0.6, 1.0, 0.25};
    mb.label_a = {0, 1, 2};
    mb.label_b = {1, 1, 2};
    mb.mixed_flag = {1, 0, 1};
    const Matrix targets = soft_targets(mb, 3);

    CHECK(targets(0, 0) == 0.6);
    CHECK(targets(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(targets(0, 2) == 0.0);

    // Unmixed row: exact one-hot.
    CHECK(targets(1, 1) == 1.0);
    CHECK(targets(1, 0) == 0.0);
    CHECK(targets(1, 2) == 0.0);

    // Mixed row with equal endpoints accumulates to a full one-hot.
    CHECK(targets(2, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(targets(2, 0) == 0.0);

    for (int t = 0; t < 3; ++t) {
        CHECK(targets.row(t).sum() == doctest::Approx(1.0).epsilon(1e-15));
    }

    mb.label_b[0] = 3;
    CHECK_THROWS_AS(soft_targets(mb, 3), ShapeError);
}

// ---------------------------------------------------------------------------
// Name round trips
// ---------------------------------------------------------------------------

TEST_CASE("strategy and pool names round-trip and reject unknowns") {
    for (StrategyKind kind : {StrategyKind::kErm, StrategyKind::kMixup,
                              StrategyKind::kMixupStar, StrategyKind::kSelectMix}) {
        CHECK(parse_strategy(to_string(kind)) == kind);
    }
    for (PartnerPool pool : {PartnerPool::kReliablePredClass, PartnerPool::kAnyPredClass,
                             PartnerPool::kNoisyClass}) {
        CHECK(parse_partner_pool(to_string(pool)) == pool);
    }
    CHECK_THROWS_AS(parse_strategy("cutmix"), SpecError);
    CHECK_THROWS_AS(parse_partner_pool("same_class"), SpecError);
}
