#pragma once

// Test-only oracles, independent of the library's solve path. The grid
// oracle enumerates simplex lattice points by brute force; anything it
// reports is a true upper bound on the constrained minimum.

#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scm::testing {

struct GridResult {
    Eigen::VectorXd weights;
    double objective = std::numeric_limits<double>::infinity();
};

inline double ssr(const Eigen::VectorXd& y, const Eigen::MatrixXd& donors,
                  const Eigen::VectorXd& w) {
    return (y - donors * w).squaredNorm();
}

// Enumerates every composition (k_1,...,k_n) of K = round(1/step) and
// evaluates w_i = k_i * step. Exhaustive, so exponential in the donor
// count; intended for <= 4 donors.
inline void grid_search_rec(const Eigen::VectorXd& y, const Eigen::MatrixXd& donors,
                            Eigen::VectorXi& counts, int coord, int remaining, int total,
                            GridResult& best) {
    const int n = static_cast<int>(donors.cols());
    if (coord == n - 1) {
        counts[coord] = remaining;
        Eigen::VectorXd w = counts.cast<double>() / static_cast<double>(total);
        const double obj = ssr(y, donors, w);
        if (obj < best.objective) {
            best.objective = obj;
            best.weights = w;
        }
        return;
    }
    for (int k = 0; k <= remaining; ++k) {
        counts[coord] = k;
        grid_search_rec(y, donors, counts, coord + 1, remaining - k, total, best);
    }
}

inline GridResult grid_search_simplex(const Eigen::VectorXd& y,
                                      const Eigen::MatrixXd& donors, double step) {
    const int total = static_cast<int>(std::lround(1.0 / step));
    Eigen::VectorXi counts(donors.cols());
    GridResult best;
    grid_search_rec(y, donors, counts, 0, total, total, best);
    return best;
}

// Deterministic random fit instances: donors are smooth-ish trending
// series, the treated vector mixes a random simplex point plus noise.
struct FitInstance {
    Eigen::VectorXd treated;
    Eigen::MatrixXd donors;
    std::vector<std::string> donor_ids;
};

inline FitInstance random_instance(std::mt19937& rng, int n_donors, int n_years,
                                   double noise = 0.3) {
    std::uniform_real_distribution<double> level(2.0, 12.0);
    std::uniform_real_distribution<double> trend(-0.1, 0.25);
    std::normal_distribution<double> wiggle(0.0, 0.35);
    std::normal_distribution<double> eps(0.0, noise);

    FitInstance inst;
    inst.donors.resize(n_years, n_donors);
    for (int j = 0; j < n_donors; ++j) {
        const double a = level(rng);
        const double b = trend(rng);
        for (int t = 0; t < n_years; ++t) {
            inst.donors(t, j) = a + b * t + wiggle(rng);
        }
        inst.donor_ids.push_back("D" + std::to_string(j));
    }
    // random simplex point via exponential spacings
    std::exponential_distribution<double> ex(1.0);
    Eigen::VectorXd w(n_donors);
    for (int j = 0; j < n_donors; ++j) w[j] = ex(rng);
    w /= w.sum();
    inst.treated = inst.donors * w;
    for (int t = 0; t < n_years; ++t) inst.treated[t] += eps(rng);
    return inst;
}

}  // namespace scm::testing
