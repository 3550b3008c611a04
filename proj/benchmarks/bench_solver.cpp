#include <benchmark/benchmark.h>


#include <random>

#include "scm/inference.hpp"
#include "scm/solver.hpp"


namespace {

struct Instance {
    Eigen::VectorXd treated;
    Eigen::MatrixXd donors;
    std::vector<std::string> ids;
};

Instance make_instance(int n_donors, int n_years) {
    std::mt19937 rng(static_cast<unsigned>(n_donors * 1000 + n_years));
    std::uniform_real_distribution<double> level(3.0, 12.0);
    std::normal_distribution<double> eps(0.0, 0.3);
    Instance inst;
    inst.donors.resize(n_years, n_donors);
    for (int j = 0; j < n_donors; ++j) {
        const double a = level(rng);
        for (int t = 0; t < n_years; ++t) {
            inst.donors(t, j) = a + 0.1 * t + eps(rng);
        }
        inst.ids.push_back("D" + std::to_string(j));
    }
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n_donors, 1.0 / n_donors);
    inst.treated = inst.donors * w;
    for (int t = 0; t < n_years; ++t) inst.treated[t] += eps(rng);
    return inst;
}

void BM_FitWeightsActiveSet(benchmark::State& state) {
    const auto inst = make_instance(static_cast<int>(state.range(0)),
                                    static_cast<int>(state.range(1)));
    for (auto _ : state) {
        auto w = scm::fit_weights(inst.treated, inst.donors, inst.ids);
        benchmark::DoNotOptimize(w.objective);
    }
}
BENCHMARK(BM_FitWeightsActiveSet)
    ->Args({3, 10})
    ->Args({9, 18})
    ->Args({16, 40});

void BM_FitWeightsEnumerated(benchmark::State& state) {
    const auto inst = make_instance(static_cast<int>(state.range(0)), 18);
    for (auto _ : state) {
        auto w = scm::fit_weights_enumerated(inst.treated, inst.donors, inst.ids);
        benchmark::DoNotOptimize(w.objective);
    }
}
BENCHMARK(BM_FitWeightsEnumerated)->Arg(3)->Arg(9)->Arg(12);

void BM_FullInference(benchmark::State& state) {
    const int n_donors = static_cast<int>(state.range(0));
    std::mt19937 rng(5);
    std::normal_distribution<double> eps(0.0, 0.1);
    scm::PanelBuilder b;
    std::vector<std::string> donors;
    for (int j = 0; j < n_donors; ++j) {
        donors.push_back("D" + std::to_string(100 + j));
        for (int y = 1870; y <= 1890; ++y) {
            b.set(donors.back(), y, "y", 5.0 + 0.2 * j + 0.08 * (y - 1870) + eps(rng));
        }
    }
    for (int y = 1870; y <= 1890; ++y) {
        b.set("TRT", y, "y", 5.5 + 0.08 * (y - 1870) + eps(rng) + (y > 1887 ? 0.6 : 0.0));
    }
    const scm::PanelDataset data = b.build();
    scm::StudyConfig cfg;
    cfg.name = "bench";
    cfg.outcome = {"y", scm::OutcomeKind::Level, "y", std::nullopt};
    cfg.treated = "TRT";
    cfg.donors = donors;
    cfg.fit_years = {1870, 1887};
    cfg.eval_years = {1888, 1890};
    for (auto _ : state) {
        auto report = scm::run_inference(data, cfg);
        benchmark::DoNotOptimize(report.p_value.num);
    }
}
BENCHMARK(BM_FullInference)->Arg(5)->Arg(9);

}  // namespace

BENCHMARK_MAIN();
