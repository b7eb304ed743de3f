#pragma once

#include <cstddef>
#include <vector>

namespace test {

/// Exact QP solution of min |x - g|^2 s.t. <x, r_k> >= 0 by enumerating
/// every active set and keeping the closest feasible projection.
std::vector<double> brute_force_qp(const std::vector<double>& g, const std::vector<std::vector<double>>& refs);

// Closed-form trainable-parameter counts (biases included, running stats excluded).
inline std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k + out; }
inline std::size_t bn_params(std::size_t c) { return 2 * c; }
inline std::size_t dense_params(std::size_t in, std::size_t out) { return out * in + out; }
inline std::size_t block_params(std::size_t in, std::size_t mid, std::size_t out) {
  return conv_params(in, mid, 3) + bn_params(mid) + conv_params(mid, out, 3) + bn_params(out) + conv_params(in, out, 1) +
         bn_params(out);
}
inline std::size_t tcresnet8_params(std::size_t classes) {
  return conv_params(40, 16, 9) + bn_params(16) + block_params(16, 24, 24) + block_params(24, 32, 32) +
         block_params(32, 48, 48) + dense_params(48, classes);
}
inline std::size_t subnet_params(std::size_t c1, std::size_t c2, std::size_t classes) {
  return block_params(24, c1, c2) + dense_params(c2, classes);
}

}  // namespace test
