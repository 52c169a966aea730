#pragma once

// Small scenes and scratch directories shared by the tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>

#include "gammasense/model.hpp"
#include "gammasense/scenegen.hpp"
#include "gammasense/training.hpp"

namespace fixtures {

/// 128 x 96 rig with the default field of view.
inline gammasense::SceneSpec small_spec() {
  gammasense::SceneSpec spec;
  spec.rig.focal_px = 140.0;
  spec.rig.alpha = 140.0;
  spec.rig.beta = 140.0;
  spec.rig.width = 128;
  spec.rig.height = 96;
  spec.rig.cx = 63.5;
  spec.rig.cy = 47.5;
  return spec;
}

/// Smallest useful network: base 8, one block per module, x2 expansion.
inline gammasense::ModelConfig tiny_model() {
  gammasense::ModelConfig c;
  c.base_channels = 8;
  c.block_counts = {1, 1, 1, 1};
  c.ebn_expansion = 2;
  c.head_hidden_sizes = {32};
  return c;
}

inline gammasense::TrainConfig tiny_train(int epochs = 2) {
  gammasense::TrainConfig t;
  t.batch_size = 4;
  t.epochs = epochs;
  t.target_size = 32;
  t.seed = 3;
  return t;
}

/// Removed with its contents on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gs") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Generated once per test process: 6 train, 2 val, 2 test at 128 x 96.
inline const std::filesystem::path& shared_dataset() {
  static TempDir dir("dataset");
  static const bool generated = [] {
    gammasense::generate_dataset(small_spec(), gammasense::SplitCounts{6, 2, 2}, dir.path(), 11);
    return true;
  }();
  (void)generated;
  return dir.path();
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
