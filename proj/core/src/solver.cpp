#include "scm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "scm/csv.hpp"

namespace scm {

namespace {

// Shared problem data for  min 1/2 w'Qw + c'w  s.t. sum w = 1, w >= 0,
// where Q = 2 (D'D + eps I) and c = -2 D'y, built from data normalized to
// unit magnitude. Normalizing keeps the bordered KKT systems well
// conditioned at any data scale and makes the solve path (and the ridge
// tie-break) scale-equivariant. The ridge keeps Q positive definite so
// every face subproblem has a unique solution.
struct QpData {
    Eigen::MatrixXd Q;
    Eigen::VectorXd c;
    Eigen::VectorXd y;       // normalized
    Eigen::MatrixXd donors;  // normalized
    Eigen::VectorXd y_raw;
    Eigen::MatrixXd donors_raw;
    double grad_scale = 1.0;
};

QpData make_qp(const Eigen::VectorXd& y, const Eigen::MatrixXd& donors) {
    QpData qp;
    qp.y_raw = y;
    qp.donors_raw = donors;
    const double mag = std::max(donors.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff());
    const double s = mag > 0.0 ? mag : 1.0;
    qp.y = y / s;
    qp.donors = donors / s;
    qp.Q = 2.0 * (qp.donors.transpose() * qp.donors +
                  kRidgeEpsilon * Eigen::MatrixXd::Identity(donors.cols(), donors.cols()));
    qp.c = -2.0 * qp.donors.transpose() * qp.y;
    qp.grad_scale = std::max(1.0, std::max(qp.Q.cwiseAbs().maxCoeff(),
                                           qp.c.cwiseAbs().maxCoeff()));
    return qp;
}

double ridged_objective(const QpData& qp, const Eigen::VectorXd& w) {
    return (qp.y - qp.donors * w).squaredNorm() + kRidgeEpsilon * w.squaredNorm();
}

struct FaceSolution {
    Eigen::VectorXd w;  // full-length, zeros off the face
    double multiplier = 0.0;
    bool ok = false;
};

// Equality-constrained minimizer on one face: coordinates in `free_idx`
// vary, the rest are pinned at zero, sum of free coordinates is one.
FaceSolution solve_face(const QpData& qp, const std::vector<int>& free_idx) {
    const int k = static_cast<int>(free_idx.size());
    const int n = static_cast<int>(qp.Q.rows());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd rhs(k + 1);
    for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) kkt(a, b) = qp.Q(free_idx[a], free_idx[b]);
        kkt(a, k) = 1.0;
        kkt(k, a) = 1.0;
        rhs[a] = -qp.c[free_idx[a]];
    }
    rhs[k] = 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    FaceSolution sol;
    if (!lu.isInvertible()) {
        return sol;  // numerically singular face; caller skips it
    }
    const Eigen::VectorXd x = lu.solve(rhs);
    sol.w = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < k; ++a) sol.w[free_idx[a]] = x[a];
    // the system solves Q_FF w + m 1 = -c_F, so the stationarity multiplier
    // lambda with grad_F = lambda 1 is -m
    sol.multiplier = -x[k];
    sol.ok = true;
    return sol;
}

// Clamp stray negatives from the final face solve and renormalize so the
// simplex invariants hold exactly after projection.
Eigen::VectorXd project_to_simplex(Eigen::VectorXd w) {
    for (int j = 0; j < w.size(); ++j) {
        if (w[j] < 0.0) w[j] = 0.0;
    }
    const double s = w.sum();
    if (s > 0.0 && s != 1.0) w /= s;
    return w;
}

WeightVector finish(const QpData& qp, Eigen::VectorXd w,
                    const std::vector<std::string>& donor_ids) {
    WeightVector out;
    out.donor_ids = donor_ids;
    out.weights = project_to_simplex(std::move(w));
    // diagnostics come from the original, un-normalized data
    out.objective = (qp.y_raw - qp.donors_raw * out.weights).squaredNorm();
    out.pre_mspe = out.objective / static_cast<double>(qp.y_raw.size());
    out.pre_rmspe = std::sqrt(out.pre_mspe);
    out.ridge_epsilon = kRidgeEpsilon;
    return out;
}

void check_inputs(const Eigen::VectorXd& treated_fit, const Eigen::MatrixXd& donor_fit,
                  const std::vector<std::string>& donor_ids) {
    if (donor_fit.cols() == 0) {
        throw SolverError("empty donor set");
    }
    if (donor_fit.rows() < 2) {
        throw SolverError("fewer than 2 fit periods; refusing a degenerate fit");
    }
    if (treated_fit.size() != donor_fit.rows()) {
        throw SolverError("treated vector length does not match donor matrix rows");
    }
    if (static_cast<Eigen::Index>(donor_ids.size()) != donor_fit.cols()) {
        throw SolverError("donor id count does not match donor matrix columns");
    }
    if (!treated_fit.allFinite() || !donor_fit.allFinite()) {
        throw SolverError("non-finite values in fit matrices");
    }
}

Eigen::VectorXd active_set_solve(const QpData& qp) {
    const int n = static_cast<int>(qp.Q.rows());
    const double kkt_tol = 1e-10 * qp.grad_scale;

    // Start at the best vertex (deterministic; ties take the lowest index).
    int best_vertex = 0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        const double obj = (qp.y - qp.donors.col(j)).squaredNorm() + kRidgeEpsilon;
        if (obj < best_obj) {
            best_obj = obj;
            best_vertex = j;
        }
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    w[best_vertex] = 1.0;
    std::vector<bool> pinned(n, true);
    pinned[best_vertex] = false;

    for (int iter = 0; iter < kMaxSolverIterations; ++iter) {
        std::vector<int> free_idx;
        for (int j = 0; j < n; ++j) {
            if (!pinned[j]) free_idx.push_back(j);
        }
        const FaceSolution face = solve_face(qp, free_idx);
        if (!face.ok) {
            break;  // cannot refine this face further
        }

        double min_face_w = 0.0;
        for (int j : free_idx) min_face_w = std::min(min_face_w, face.w[j]);

        if (min_face_w >= -1e-13) {
            // Face solution feasible: test multipliers of pinned bounds.
            w = face.w;
            const Eigen::VectorXd grad = qp.Q * w + qp.c;
            int release = -1;
            double worst = -kkt_tol;
            for (int j = 0; j < n; ++j) {
                if (!pinned[j]) continue;
                const double nu = grad[j] - face.multiplier;
                if (nu < worst) {
                    worst = nu;
                    release = j;
                }
            }
            if (release < 0) {
                return w;  // KKT satisfied
            }
            pinned[release] = false;
            continue;
        }

        // Step toward the face solution until a bound blocks.
        double alpha = 1.0;
        int blocking = -1;
        for (int j : free_idx) {
            if (face.w[j] < w[j] && face.w[j] < 0.0) {
                const double a = w[j] / (w[j] - face.w[j]);
                if (a < alpha) {
                    alpha = a;
                    blocking = j;
                }
            }
        }
        w += alpha * (face.w - w);
        if (blocking >= 0) {
            w[blocking] = 0.0;
            pinned[blocking] = true;
        }
    }
    return w;  // iteration cap: return the best iterate found
}

}  // namespace

std::vector<std::string> WeightVector::support(double threshold) const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < donor_ids.size(); ++j) {
        if (weights[static_cast<Eigen::Index>(j)] > threshold) out.push_back(donor_ids[j]);
    }
    return out;
}

WeightVector fit_weights(const Eigen::VectorXd& treated_fit,
                         const Eigen::MatrixXd& donor_fit,
                         const std::vector<std::string>& donor_ids) {
    check_inputs(treated_fit, donor_fit, donor_ids);
    const QpData qp = make_qp(treated_fit, donor_fit);
    Eigen::VectorXd w = active_set_solve(qp);

    if (donor_fit.cols() <= 3) {
        // Built-in cross-check on tiny pools: exhaustive enumeration is
        // exact, so take its solution whenever it is strictly better.
        WeightVector exact = fit_weights_enumerated(treated_fit, donor_fit, donor_ids);
        if (ridged_objective(qp, exact.weights) + 1e-12 < ridged_objective(qp, w)) {
            return exact;
        }
    }
    return finish(qp, std::move(w), donor_ids);
}

WeightVector fit_weights_enumerated(const Eigen::VectorXd& treated_fit,
                                    const Eigen::MatrixXd& donor_fit,
                                    const std::vector<std::string>& donor_ids) {
    check_inputs(treated_fit, donor_fit, donor_ids);
    const int n = static_cast<int>(donor_fit.cols());
    if (n > 16) {
        throw SolverError("face enumeration is limited to 16 donors");
    }
    const QpData qp = make_qp(treated_fit, donor_fit);

    Eigen::VectorXd best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> face;
        for (int j = 0; j < n; ++j) {
            if (mask & (1u << j)) face.push_back(j);
        }
        const FaceSolution sol = solve_face(qp, face);
        if (!sol.ok) continue;
        bool feasible = true;
        for (int j : face) {
            if (sol.w[j] < -1e-12) {
                feasible = false;
                break;
            }
        }
        if (!feasible) continue;
        const double obj = ridged_objective(qp, sol.w);
        if (obj < best_obj - 1e-15 ||
            (obj < best_obj + 1e-15 && best.size() == 0)) {
            best_obj = obj;
            best = sol.w;
        }
    }
    if (best.size() == 0) {
        throw SolverError("face enumeration found no feasible face");
    }
    return finish(qp, std::move(best), donor_ids);
}

std::optional<double> GapSeries::rmspe_ratio() const {
    if (pre_rmspe <= 0.0) return std::nullopt;
    return post_rmspe / pre_rmspe;
}

GapSeries synthesize(const WeightVector& weights, const Eigen::MatrixXd& donor_all,
                     const Eigen::VectorXd& treated_all, const std::vector<int>& years,
                     std::size_t fit_count, const std::vector<std::string>& donor_ids) {
    if (donor_ids != weights.donor_ids) {
        throw SolverError("donor ids do not align with the fitted weight vector");
    }
    if (donor_all.cols() != weights.weights.size()) {
        throw SolverError("donor matrix columns do not match the weight count");
    }
    if (donor_all.rows() != treated_all.size() ||
        static_cast<std::size_t>(donor_all.rows()) != years.size()) {
        throw SolverError("year count mismatch between matrices and year list");
    }
    if (fit_count == 0 || fit_count > years.size()) {
        throw SolverError("fit window must be a non-empty prefix of the year list");
    }

    GapSeries g;
    g.years = years;
    g.fit_count = fit_count;
    g.treated = treated_all;
    g.synthetic = donor_all * weights.weights;
    g.gap = g.treated - g.synthetic;

    const auto fit_n = static_cast<Eigen::Index>(fit_count);
    const auto eval_n = static_cast<Eigen::Index>(years.size() - fit_count);
    g.pre_mspe = g.gap.head(fit_n).squaredNorm() / static_cast<double>(fit_n);
    g.pre_rmspe = std::sqrt(g.pre_mspe);
    if (eval_n > 0) {
        g.post_mspe = g.gap.tail(eval_n).squaredNorm() / static_cast<double>(eval_n);
        g.post_rmspe = std::sqrt(g.post_mspe);
    }
    return g;
}

double aagr(double start, double end, int years) {
    if (!(start > 0.0) || !(end > 0.0)) {
        throw std::invalid_argument("aagr requires positive endpoint values");
    }
    if (years < 1) {
        throw std::invalid_argument("aagr requires at least one year");
    }
    return 100.0 * (std::pow(end / start, 1.0 / years) - 1.0);
}

double pct_change(double before, double after) {
    if (before == 0.0) {
        throw std::invalid_argument("pct_change requires a nonzero base value");
    }
    return 100.0 * (after - before) / before;
}

std::string weights_to_csv(const WeightVector& weights) {
    std::vector<std::size_t> order(weights.donor_ids.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return weights.donor_ids[a] < weights.donor_ids[b];
    });
    std::ostringstream out;
    out << "donor,weight\n";
    for (std::size_t i : order) {
        out << weights.donor_ids[i] << ','
            << csv::format_fixed6(weights.weights[static_cast<Eigen::Index>(i)]) << '\n';
    }
    return out.str();
}

std::string gaps_to_csv(const GapSeries& gaps) {
    std::ostringstream out;
    out << "year,treated,synthetic,gap\n";
    for (std::size_t i = 0; i < gaps.years.size(); ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        out << gaps.years[i] << ',' << csv::format_sig6(gaps.treated[t]) << ','
            << csv::format_sig6(gaps.synthetic[t]) << ','
            << csv::format_sig6(gaps.gap[t]) << '\n';
    }
    return out.str();
}

}  // namespace scm
