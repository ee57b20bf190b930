// Runs acceptance checks 1-10 and prints one PASS/FAIL line each.
// Exit status is the number of failing checks.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "lccal/testing/acceptance.hpp"

int main(int argc, char** argv) {
  using namespace lccal;
  bool skip_learning = false;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--skip-learning") skip_learning = true;

  const auto scratch = std::filesystem::temp_directory_path() / "lccal_acceptance";
  std::vector<acceptance::CheckResult> results = acceptance::run_property_checks(scratch);
  for (const auto& r : results) std::cout << acceptance::format_line(r) << std::endl;

  if (!skip_learning) {
    const DeskExperimentConfig cfg = acceptance::learning_check_config();
    const auto r = acceptance::check_learning(cfg, [](const DeskEvaluation& e) {
      std::fprintf(stderr, "  [7] step %zu: E_R %.3f, E_t %.3f of injected\n", e.step, e.rotation_ratio(),
                   e.translation_ratio());
    });
    std::cout << acceptance::format_line(r) << std::endl;
    results.insert(results.begin() + 6, r);
  }

  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << results.size()
            << " checks)" << std::endl;
  return failed;
}
