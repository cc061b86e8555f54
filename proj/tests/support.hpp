#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "windgen/nn/tape.hpp"
#include "windgen/nn/tensor.hpp"

namespace windgen::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("windgen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

/// Largest relative error between analytic gradients and central finite
/// differences over all entries of every input. `f` builds a scalar on a
/// fresh tape from variables holding `inputs`.
using ScalarFn = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)>;

inline double gradcheck(const ScalarFn& f, std::vector<nn::Tensor> inputs, double h = 1e-5) {
  nn::Tape tape;
  std::vector<nn::Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  tape.backward(f(tape, vars));
  std::vector<nn::Tensor> analytic;
  for (auto v : vars) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<nn::Tensor>& xs) {
    nn::Tape t(false);
    std::vector<nn::Var> vs;
    for (const auto& x : xs) vs.push_back(t.constant(x));
    return f(t, vs).value()[0];
  };
  double worst = 0.0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double x = inputs[a][i];
      inputs[a][i] = x + h;
      const double up = eval(inputs);
      inputs[a][i] = x - h;
      const double down = eval(inputs);
      inputs[a][i] = x;
      const double numeric = (up - down) / (2 * h);
      const double g = analytic[a][i];
      const double err = std::abs(numeric - g) / std::max(1e-6, std::abs(numeric) + std::abs(g));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace windgen::testing
