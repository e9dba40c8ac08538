// Serial vs OpenMP kernel timings. Usage: bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "mega/kernels.hpp"

namespace k = mega::kernels;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial_ms, double parallel_ms, bool same) {
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
  };

  std::printf("threads: %d\n", k::max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  for (std::size_t n : {64, 256, 512}) {
    const auto a = fill(n * n), b = fill(n * n);
    std::vector<double> cs(n * n), cp(n * n);
    const double s = best_ms(repeats, [&] {
      std::fill(cs.begin(), cs.end(), 0.0);
      k::serial::matmul(a, b, cs, n, n, n);
    });
    const double p = best_ms(repeats, [&] {
      std::fill(cp.begin(), cp.end(), 0.0);
      k::parallel::matmul(a, b, cp, n, n, n);
    });
    char name[64];
    std::snprintf(name, sizeof(name), "matmul %zux%zux%zu", n, n, n);
    row(name, s, p, cs == cp);
  }

  {
    const std::size_t rows = 4096, cols = 512;
    const auto a = fill(rows * cols);
    std::vector<double> os(rows * cols), op(rows * cols);
    const double s = best_ms(repeats, [&] { k::serial::transpose(a, os, rows, cols); });
    const double p = best_ms(repeats, [&] { k::parallel::transpose(a, op, rows, cols); });
    row("transpose 4096x512", s, p, os == op);
  }

  {
    // Edge-sized gather/scatter, as in message passing over a large batch.
    const std::size_t nodes = 20000, edges = 80000, cols = 32;
    const auto h = fill(nodes * cols);
    std::vector<std::size_t> index(edges);
    for (auto& i : index) i = rng() % nodes;
    std::vector<double> gs(edges * cols), gp(edges * cols);
    const double s = best_ms(repeats, [&] { k::serial::gather_rows(h, index, gs, cols); });
    const double p = best_ms(repeats, [&] { k::parallel::gather_rows(h, index, gp, cols); });
    row("gather 80000 rows x32", s, p, gs == gp);

    std::vector<double> ss(nodes * cols), sp(nodes * cols);
    const double s2 = best_ms(repeats, [&] {
      std::fill(ss.begin(), ss.end(), 0.0);
      k::serial::scatter_add_rows(gs, index, ss, cols);
    });
    const double p2 = best_ms(repeats, [&] {
      std::fill(sp.begin(), sp.end(), 0.0);
      k::parallel::scatter_add_rows(gs, index, sp, cols);
    });
    row("scatter-add 80000 rows x32", s2, p2, ss == sp);
  }
  return 0;
}
