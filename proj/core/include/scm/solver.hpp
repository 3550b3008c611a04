#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scm/errors.hpp"

namespace scm {

// Ridge term added to the fit objective to select the minimum-norm optimum
// when donors are collinear; recorded in output metadata.
inline constexpr double kRidgeEpsilon = 1e-12;
inline constexpr int kMaxSolverIterations = 10000;
// Weights above this count as support (leave-one-out eligibility).
inline constexpr double kSupportThreshold = 1e-6;

// Donor weights on the probability simplex plus fit diagnostics.
struct WeightVector {
    std::vector<std::string> donor_ids;
    Eigen::VectorXd weights;
    double objective = 0.0;  // pre-treatment SSR at the returned weights (no ridge)
    double pre_mspe = 0.0;
    double pre_rmspe = 0.0;
    double ridge_epsilon = kRidgeEpsilon;

    std::vector<std::string> support(double threshold = kSupportThreshold) const;
};

// Solves  min_w ||y - D w||^2 + eps ||w||^2  over the probability simplex
// with a primal active-set method. Deterministic: identical inputs give
// bitwise-identical results. Rows of donor_fit are fit years, columns are
// donors aligned with donor_ids. Requires >= 1 donor and >= 2 fit years.
WeightVector fit_weights(const Eigen::VectorXd& treated_fit,
                         const Eigen::MatrixXd& donor_fit,
                         const std::vector<std::string>& donor_ids);

// Exact solve by enumerating every support face of the simplex. Global
// optimum for small pools; fit_weights cross-checks against it for <= 3
// donors. Guarded to <= 16 donors.
WeightVector fit_weights_enumerated(const Eigen::VectorXd& treated_fit,
                                    const Eigen::MatrixXd& donor_fit,
                                    const std::vector<std::string>& donor_ids);

// Per-year treated-minus-synthetic differences over fit and eval windows.
struct GapSeries {
    std::vector<int> years;  // fit years followed by eval years
    std::size_t fit_count = 0;
    Eigen::VectorXd treated;
    Eigen::VectorXd synthetic;
    Eigen::VectorXd gap;
    double pre_mspe = 0.0;
    double pre_rmspe = 0.0;
    double post_mspe = 0.0;
    double post_rmspe = 0.0;

    // post_rmspe / pre_rmspe; nullopt when the pre-treatment fit is exact.
    std::optional<double> rmspe_ratio() const;
};

// Applies fitted weights across fit and eval years. donor_all rows follow
// `years` (fit years first); donor_ids must match the weight vector's.
GapSeries synthesize(const WeightVector& weights, const Eigen::MatrixXd& donor_all,
                     const Eigen::VectorXd& treated_all, const std::vector<int>& years,
                     std::size_t fit_count, const std::vector<std::string>& donor_ids);

// Average annual growth rate in percent: 100 * ((end/start)^(1/n) - 1).
double aagr(double start, double end, int years);

// Simple percent change: 100 * (after - before) / before.
double pct_change(double before, double after);

// CSV renderings. Weights: `donor,weight` sorted by donor id at 6 decimal
// places; gaps: `year,treated,synthetic,gap` at 6 significant digits.
std::string weights_to_csv(const WeightVector& weights);
std::string gaps_to_csv(const GapSeries& gaps);

}  // namespace scm
