#ifndef DITQ_DITQ_HPP
#define DITQ_DITQ_HPP

// Umbrella header for the ditq post-training quantization toolkit.

#include "ditq/calib.hpp"
#include "ditq/common.hpp"
#include "ditq/half.hpp"
#include "ditq/lowrank.hpp"
#include "ditq/matrix.hpp"
#include "ditq/qlayer.hpp"
#include "ditq/quant.hpp"
#include "ditq/rng.hpp"
#include "ditq/sim.hpp"
#include "ditq/smooth.hpp"
#include "ditq/tensor_io.hpp"

#endif  // DITQ_DITQ_HPP
