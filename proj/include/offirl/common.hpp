#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace offirl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Error hierarchy. Everything thrown by the library derives from Error so
// callers (the CLI in particular) can map failures to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParameter : Error {
  using Error::Error;
};
struct EmptyDataset : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct NotTrained : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// Stable seed derivation so that sub-components get independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

// Distributions implemented locally: libstdc++/libc++ differ in how
// std::normal_distribution consumes the engine, which would break
// bitwise reproducibility across toolchains.
double uniform01(Rng& rng);
double standard_normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
std::size_t categorical(Rng& rng, const double* probs, std::size_t n);
inline std::size_t categorical(Rng& rng, const std::vector<double>& probs) {
  return categorical(rng, probs.data(), probs.size());
}

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

}  // namespace offirl
