#include "selectmix/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "selectmix/rng.hpp"

namespace selectmix {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kProbFloor)); }

// Mean and Monte-Carlo standard error with a fixed left-to-right reduction
// so reports are bit-reproducible.
void mean_and_se(const std::vector<double>& losses, double& mean, double& se) {
    const std::size_t n = losses.size();
    double sum = 0.0;
    for (double v : losses) {
        sum += v;
    }
    mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double v : losses) {
        sq += (v - mean) * (v - mean);
    }
    const double var = n > 1 ? sq / static_cast<double>(n - 1) : 0.0;
    se = std::sqrt(var / static_cast<double>(n));
}

}  // namespace

KappaPair kappa(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw SpecError("kappa: alpha must be positive and finite, got " + std::to_string(alpha));
    }
    KappaPair k;
    k.alpha = alpha;
    k.kappa_cdn = alpha / (2.0 * alpha + 1.0);
    k.kappa_idn = (alpha + 1.0) / (2.0 * alpha + 1.0);
    return k;
}

std::string risk_report_json(const RiskReport& report) {
    nlohmann::ordered_json j;
    j["alpha"] = report.alpha;
    j["kappa_idn"] = report.kappa_idn;
    j["kappa_cdn"] = report.kappa_cdn;
    j["rho"] = report.rho;
    j["delta"] = report.delta;
    j["r_mix"] = report.r_mix;
    j["r_mix_se"] = report.r_mix_se;
    j["r_sel"] = report.r_sel;
    j["r_sel_se"] = report.r_sel_se;
    j["gap_bound"] = report.gap_bound;
    j["holds"] = report.holds;
    return j.dump(2) + "\n";
}

RiskReport parse_risk_report(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("risk report: ") + e.what());
    }
    RiskReport r;
    try {
        r.alpha = j.at("alpha").get<double>();
        r.kappa_idn = j.at("kappa_idn").get<double>();
        r.kappa_cdn = j.at("kappa_cdn").get<double>();
        r.rho = j.at("rho").get<double>();
        r.delta = j.at("delta").get<double>();
        r.r_mix = j.at("r_mix").get<double>();
        r.r_mix_se = j.at("r_mix_se").get<double>();
        r.r_sel = j.at("r_sel").get<double>();
        r.r_sel_se = j.at("r_sel_se").get<double>();
        r.gap_bound = j.at("gap_bound").get<double>();
        r.holds = j.at("holds").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("risk report: ") + e.what());
    }
    return r;
}

void write_risk_report(const RiskReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open " + path + " for writing");
    }
    out << risk_report_json(report);
    if (!out) {
        throw InputError("write failed for " + path);
    }
}

RiskReport read_risk_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_risk_report(text);
}

double delta_from_probs(const Matrix& probs, const std::vector<int>& clean_labels,
                        const std::vector<std::uint8_t>& is_mismatch) {
    const int n = static_cast<int>(probs.rows());
    const int C = static_cast<int>(probs.cols());
    if (static_cast<int>(clean_labels.size()) != n ||
        static_cast<int>(is_mismatch.size()) != n) {
        throw ShapeError("delta_from_probs: probs, labels, and flags must align");
    }
    double reliable_ll = 0.0;
    int reliable_count = 0;
    double uniform_ll = 0.0;
    for (int i = 0; i < n; ++i) {
        double row_ll = 0.0;
        for (int c = 0; c < C; ++c) {
            row_ll += clamped_log(probs(i, c));
        }
        uniform_ll += row_ll / C;
        if (!is_mismatch[i]) {
            reliable_ll += clamped_log(probs(i, clean_labels[i]));
            ++reliable_count;
        }
    }
    if (reliable_count == 0) {
        throw EstimationError("delta_from_probs: no reliable samples");
    }
    return reliable_ll / reliable_count - uniform_ll / n;
}

double estimate_delta(const NetworkSpec& spec, const NetworkState& model, const Dataset& ds,
                      const std::vector<int>& mismatch) {
    if (!ds.clean_labels) {
        throw EstimationError("estimate_delta: dataset has no clean labels");
    }
    const Matrix probs = forward(spec, model, ds.features);
    return delta_from_probs(probs, *ds.clean_labels, mismatch_flags(mismatch, ds.size()));
}

RiskReport estimate_risks(const NetworkSpec& spec, const NetworkState& model, const Dataset& ds,
                          const OofPredictions& oof, const std::vector<int>& mismatch,
                          const std::vector<std::vector<int>>& cls_idx, double alpha,
                          int num_draws, std::uint64_t seed) {
    if (!ds.clean_labels) {
        throw EstimationError("estimate_risks: dataset has no clean labels");
    }
    if (num_draws < 10000) {
        throw SpecError("estimate_risks: need at least 10000 draws, got " +
                        std::to_string(num_draws));
    }
    if (oof.size() != ds.size()) {
        throw ShapeError("estimate_risks: " + std::to_string(oof.size()) +
                         " predictions for " + std::to_string(ds.size()) + " rows");
    }
    const KappaPair k = kappa(alpha);
    const int n = ds.size();
    const std::vector<std::uint8_t> flags = mismatch_flags(mismatch, n);

    // Draw all pair/lambda decisions up front, then evaluate the network in
    // large chunks; per-draw losses are reduced in index order.
    struct Draw {
        int i;
        int j;       // -1: unmixed
        double lam;  // 1 when unmixed
        int label_a;
        int label_b;
    };

    Rng mix_rng(seed, {stream::kRisk, 0});
    std::vector<Draw> mix_draws(num_draws);
    for (Draw& d : mix_draws) {
        d.i = static_cast<int>(mix_rng.below(static_cast<std::uint64_t>(n)));
        d.j = static_cast<int>(mix_rng.below(static_cast<std::uint64_t>(n)));
        d.lam = sample_lambda(alpha, mix_rng);
        d.label_a = ds.noisy_labels[d.i];
        d.label_b = ds.noisy_labels[d.j];
    }

    Rng sel_rng(seed, {stream::kRisk, 1});
    std::vector<Draw> sel_draws(num_draws);
    for (Draw& d : sel_draws) {
        d.i = static_cast<int>(sel_rng.below(static_cast<std::uint64_t>(n)));
        d.label_a = ds.noisy_labels[d.i];
        d.label_b = ds.noisy_labels[d.i];
        d.j = -1;
        d.lam = 1.0;
        if (flags[d.i]) {
            const int partner = select_partner(d.i, cls_idx, flags, ds.noisy_labels, oof,
                                               PartnerPool::kReliablePredClass, sel_rng);
            if (partner >= 0) {
                d.j = partner;
                d.lam = sample_lambda(alpha, sel_rng);
                d.label_b = oof.pred_labels[d.i];
            }
        }
    }

    auto losses_of = [&](const std::vector<Draw>& draws) {
        std::vector<double> losses(draws.size());
        const int chunk = 4096;
        Matrix inputs(chunk, ds.dim());
        for (std::size_t start = 0; start < draws.size(); start += chunk) {
            const int b = static_cast<int>(std::min<std::size_t>(chunk, draws.size() - start));
            for (int t = 0; t < b; ++t) {
                const Draw& d = draws[start + t];
                if (d.j < 0) {
                    inputs.row(t) = ds.features.row(d.i);
                } else {
                    inputs.row(t) =
                        d.lam * ds.features.row(d.i) + (1.0 - d.lam) * ds.features.row(d.j);
                }
            }
            const Matrix probs = forward(spec, model, inputs.topRows(b));
            for (int t = 0; t < b; ++t) {
                const Draw& d = draws[start + t];
                const double la = -clamped_log(probs(t, d.label_a));
                const double lb = -clamped_log(probs(t, d.label_b));
                losses[start + t] = d.lam * la + (1.0 - d.lam) * lb;
            }
        }
        return losses;
    };

    RiskReport report;
    report.alpha = alpha;
    report.kappa_idn = k.kappa_idn;
    report.kappa_cdn = k.kappa_cdn;
    report.rho = static_cast<double>(mismatch.size()) / n;
    report.delta = estimate_delta(spec, model, ds, mismatch);
    mean_and_se(losses_of(mix_draws), report.r_mix, report.r_mix_se);
    mean_and_se(losses_of(sel_draws), report.r_sel, report.r_sel_se);
    report.gap_bound = report.kappa_cdn * report.delta * report.rho;
    const double slack = 3.0 * std::sqrt(report.r_mix_se * report.r_mix_se +
                                         report.r_sel_se * report.r_sel_se);
    report.holds = report.r_sel <= report.r_mix - report.gap_bound + slack;
    return report;
}

double linearity_residual(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& y1,
                          const Eigen::RowVectorXd& y2, double a) {
    if (p.size() != y1.size() || p.size() != y2.size()) {
        throw ShapeError("linearity_residual: vector lengths differ");
    }
    const Eigen::RowVectorXd target = a * y1 + (1.0 - a) * y2;
    const double combined = soft_cross_entropy(p, target);
    const double split = a * soft_cross_entropy(p, y1) + (1.0 - a) * soft_cross_entropy(p, y2);
    return std::abs(combined - split);
}

}  // namespace selectmix
