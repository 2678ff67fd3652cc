#pragma once

#include <cstdint>
#include <random>

#include "pidon/diffcore/tape.hpp"

namespace pidon::nets {

struct InitConfig {
  std::uint64_t seed = 0;
};

/// Draws an (fan_out x fan_in) weight matrix from Normal(0, 2 / (fan_in + fan_out)).
ad::Mat glorot_normal(std::size_t fan_out, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace pidon::nets
