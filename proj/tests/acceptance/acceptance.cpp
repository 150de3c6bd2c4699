// Runs the ten acceptance criteria and prints one line per criterion.
// Exit status is nonzero if any criterion fails.

#include <iostream>

#include "conesched/repro.hpp"

int main() {
  using namespace conesched::repro;
  int failed = 0;
  const std::vector<std::function<CriterionResult()>> all = {
      [] { return criterion_1(); }, [] { return criterion_2(); }, [] { return criterion_3(); },
      [] { return criterion_4(); }, [] { return criterion_5(); }, [] { return criterion_6(); },
      [] { return criterion_7(); }, [] { return criterion_8(); }, [] { return criterion_9(); },
      [] { return criterion_10(); }};
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto r = run_guarded(static_cast<int>(i + 1), all[i]);
    std::cout << format_line(r) << std::endl;
    failed += r.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
