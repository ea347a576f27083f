#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selectmix/crossval.hpp"
#include "selectmix/dataset.hpp"
#include "selectmix/mixing.hpp"
#include "selectmix/net.hpp"
#include "selectmix/types.hpp"

namespace selectmix {

// The two interpolation coefficients of the mixed-risk decomposition:
// kappa_idn weights same-pair terms (E[lambda^2 + (1-lambda)^2]) and
// kappa_cdn weights cross-pair terms (2 E[lambda(1-lambda)]) under
// lambda ~ Beta(alpha, alpha). They sum to one identically.
struct KappaPair {
    double alpha = 1.0;
    double kappa_idn = 0.0;
    double kappa_cdn = 0.0;
};

// Closed forms kappa_cdn = alpha/(2 alpha + 1), kappa_idn = (alpha+1)/(2 alpha+1).
KappaPair kappa(double alpha);

// Outcome of the empirical risk-gap check: Monte-Carlo estimates of the
// mixed risk (random-pair interpolation against observed labels) and the
// selective risk (reliable samples unmixed, mismatches mixed toward their
// predicted class), the mismatch rate rho, the reliability margin delta,
// and the predicted gap kappa_cdn * delta * rho. `holds` records whether
// r_sel <= r_mix - gap_bound within 3 combined standard errors.
struct RiskReport {
    double alpha = 1.0;
    double kappa_idn = 0.0;
    double kappa_cdn = 0.0;
    double rho = 0.0;
    double delta = 0.0;
    double r_mix = 0.0;
    double r_mix_se = 0.0;
    double r_sel = 0.0;
    double r_sel_se = 0.0;
    double gap_bound = 0.0;
    bool holds = false;
};

std::string risk_report_json(const RiskReport& report);
RiskReport parse_risk_report(const std::string& json_text);
void write_risk_report(const RiskReport& report, const std::string& path);
RiskReport read_risk_report(const std::string& path);

// Reliability margin from raw class posteriors: the mean clean-label
// log-likelihood over reliable rows minus the mean uniform-average
// log-likelihood over all rows. Zero for the uniform predictor.
double delta_from_probs(const Matrix& probs, const std::vector<int>& clean_labels,
                        const std::vector<std::uint8_t>& is_mismatch);

// Same margin evaluated through a trained network.
double estimate_delta(const NetworkSpec& spec, const NetworkState& model, const Dataset& ds,
                      const std::vector<int>& mismatch);

// Monte-Carlo comparison of the two risks on a fixed model. num_draws
// independent draws per risk (at least 10^4); deterministic per seed with a
// fixed-order reduction.
RiskReport estimate_risks(const NetworkSpec& spec, const NetworkState& model, const Dataset& ds,
                          const OofPredictions& oof, const std::vector<int>& mismatch,
                          const std::vector<std::vector<int>>& cls_idx, double alpha,
                          int num_draws, std::uint64_t seed);

// |soft-CE(p, a*y1 + (1-a)*y2) - a*CE(p, y1) - (1-a)*CE(p, y2)|: the
// linearity of cross-entropy in its target, measured in double precision.
double linearity_residual(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& y1,
                          const Eigen::RowVectorXd& y2, double a);

}  // namespace selectmix
