// Pools one random 5x10 input with every operator and prints the results.

#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uotpool/uotpool.hpp"

using namespace uotpool;

int main() {
  std::mt19937_64 rng(7);
  const DenseMatrix x = random_input(5, 10, rng);
  const SimplexVector a = random_simplex(10, rng);

  std::vector<std::pair<std::string, PoolingSpec>> specs{
      {"mean", pooling::Mean{}},
      {"max", pooling::Max{}},
      {"mixed(0.5)", pooling::MixedMeanMax{0.5}},
      {"uot badmm ~ mean", pooling::UotBadmm{mean_config(5, 10, 32)}},
      {"uot sinkhorn ~ max", pooling::UotSinkhorn{max_config(5, 10, 32)}},
      {"uot badmm ~ Xa", pooling::UotBadmm{attention_config(5, a, 32)}},
      {"hierarchical(0.5)", pooling::HierarchicalUot{0.5}},
  };

  const PooledVector xa = weighted_pool(x, a);
  std::printf("%-20s", "X a");
  for (double v : xa.values) std::printf(" %8.5f", v);
  std::printf("\n");
  for (const auto& [name, spec] : specs) {
    const PooledVector out = pool(x, spec);
    std::printf("%-20s", name.c_str());
    for (double v : out.values) std::printf(" %8.5f", v);
    std::printf("\n");
  }

  // A learnable configuration: start from all weights 1 and read back the plan mass.
  const UotParams params = materialize_params(ReparamState::initial(4), x);
  const UotSolution sol = badmm_uot(x, params);
  std::printf("plan mass with unit weights, K=4: %.6f\n", sol.diagnostics.total_mass);
  return 0;
}
