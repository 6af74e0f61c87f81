// Serial reference vs OpenMP variants of the data-parallel kernels and the
// per-image maps. Run with --benchmark_filter to pick a family.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "paracap/alignment.hpp"
#include "paracap/fixture.hpp"
#include "paracap/kernels.hpp"
#include "paracap/ordering.hpp"
#include "paracap/parallel.hpp"

namespace {

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> m(rows * cols);
    for (auto& x : m) x = dist(rng);
    return m;
}

void BM_CosineSerial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 300;
    const auto u = random_matrix(n, d, 1), v = random_matrix(n, d, 2);
    std::vector<double> out(n * n);
    for (auto _ : state) {
        paracap::kernels::cosine_matrix_serial(u, v, out, n, n, d);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

void BM_CosineOmp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 300;
    const auto u = random_matrix(n, d, 1), v = random_matrix(n, d, 2);
    std::vector<double> out(n * n);
    for (auto _ : state) {
        paracap::kernels::cosine_matrix_omp(u, v, out, n, n, d, paracap::default_jobs());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

void BM_MatmulSerial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        paracap::kernels::matmul_serial(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
}

void BM_MatmulOmp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        paracap::kernels::matmul_omp(a, b, c, n, n, n, paracap::default_jobs());
        benchmark::DoNotOptimize(c.data());
    }
}

// Per-image maps over the toy fixture; range(0) is the job count.
void BM_AlignDataset(benchmark::State& state) {
    const auto ds = paracap::fixture::toy_dataset();
    const auto table = paracap::fixture::toy_embeddings();
    for (auto _ : state) {
        auto records = paracap::align_dataset(ds.images, table, 0.6, static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(records.data());
    }
}

void BM_DatasetLoss(benchmark::State& state) {
    namespace po = paracap::ordering;
    const auto ds = paracap::fixture::toy_dataset();
    const auto records = paracap::align_dataset(ds.images, paracap::fixture::toy_embeddings(), 0.6);
    std::vector<po::TrainingSample> samples;
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        if (!records[i].empty()) samples.push_back(po::make_sample(ds.images[i], records[i], paracap::BoxEncoding::normalized));
    po::ModelConfig mc;
    mc.input_dim = ds.feature_dim + 4;
    const auto model = po::init_model(mc, 42);
    std::vector<double> grad;
    for (auto _ : state) {
        double loss = po::dataset_loss(model, samples, &grad, static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(loss);
    }
}

}  // namespace

BENCHMARK(BM_CosineSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_CosineOmp)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulOmp)->Arg(64)->Arg(256);
BENCHMARK(BM_AlignDataset)->Arg(1)->Arg(4);
BENCHMARK(BM_DatasetLoss)->Arg(1)->Arg(4);

BENCHMARK_MAIN();
