#pragma once

#include <functional>
#include <string>
#include <vector>

namespace gammasense {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Built-in oracle suites: gradient check, shape audit, geometry and
/// serialization round trips. `progress` is called after each suite.
std::vector<SelftestResult> run_selftests(const std::function<void(const SelftestResult&)>& progress = {});

}  // namespace gammasense
