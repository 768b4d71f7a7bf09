#include <chrono>

#include "vmudiff/rng.hpp"
#include "vmudiff/vmss.hpp"

namespace vmudiff {

std::vector<ScanBenchRow> scan_benchmark(const std::vector<int>& lengths, int d, int n, int reps) {
  require(!lengths.empty(), ErrorKind::Usage, "scan_benchmark: need at least one length");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    require(lengths[i] >= 1, ErrorKind::Usage, "scan_benchmark: lengths must be >= 1");
    require(i == 0 || lengths[i] > lengths[i - 1], ErrorKind::Usage,
            "scan_benchmark: lengths must be strictly increasing");
  }
  require(d >= 1 && n >= 1 && reps >= 1, ErrorKind::Usage, "scan_benchmark: bad dims");

  std::vector<ScanBenchRow> rows;
  Rng rng(0x5ca11ed5eedull);
  for (int L : lengths) {
    std::vector<float> u(static_cast<std::size_t>(L) * d);
    std::vector<float> abar(static_cast<std::size_t>(L) * d * n);
    std::vector<float> bbar(static_cast<std::size_t>(L) * n);
    std::vector<float> c(static_cast<std::size_t>(L) * n);
    std::vector<float> h(static_cast<std::size_t>(L) * d * n);
    std::vector<float> y(static_cast<std::size_t>(L) * d);
    for (auto& v : u) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : abar) v = static_cast<float>(rng.uniform(0.1, 0.95));
    for (auto& v : bbar) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    for (auto& v : c) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    double best = 0.0;
    for (int r = -2; r < reps; ++r) {  // two warmup runs
      auto t0 = std::chrono::steady_clock::now();
      scan_forward(L, d, n, u.data(), abar.data(), bbar.data(), false, c.data(), 1.0f, h.data(),
                   y.data());
      auto t1 = std::chrono::steady_clock::now();
      double nanos = std::chrono::duration<double, std::nano>(t1 - t0).count();
      if (r >= 0 && (best == 0.0 || nanos < best)) best = nanos;
    }
    rows.push_back({L, best, best / static_cast<double>(L)});
  }
  return rows;
}

}  // namespace vmudiff
