#include "hermite.hpp"

namespace tmld {

namespace {
void gen(int k, int pos, int remaining, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (pos == k) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    cur[pos] = v;
    gen(k, pos + 1, remaining - v, cur, out);
  }
  cur[pos] = 0;
}
}  // namespace

std::vector<std::vector<int>> total_order_multi_indices(int k, int total_order) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k, 0);
  for (int deg = 0; deg <= total_order; ++deg) {
    // enumerate |alpha| == deg grouped by degree
    std::vector<std::vector<int>> all;
    gen(k, 0, deg, cur, all);
    for (auto& a : all) {
      int s = 0;
      for (int v : a) s += v;
      if (s == deg) out.push_back(a);
    }
  }
  return out;
}

}  // namespace tmld
