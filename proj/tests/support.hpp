#pragma once

#include <filesystem>
#include <string>

#include "lccal/testing/generators.hpp"

namespace lccal::test {

using oracle::random_cloud;
using oracle::random_quaternion;
using oracle::random_rotation;
using oracle::random_tensor;
using oracle::random_tensor_away_from;
using oracle::random_transform;

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lccal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lccal::test
