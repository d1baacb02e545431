#pragma once

// Umbrella header: the Res2Net block, its autodiff machinery, the analytical
// complexity engine, and the desk-scale training harness.

#include "res2net/analysis.hpp"
#include "res2net/block.hpp"
#include "res2net/dataset.hpp"
#include "res2net/errors.hpp"
#include "res2net/gradcam.hpp"
#include "res2net/gradcheck.hpp"
#include "res2net/network.hpp"
#include "res2net/nnops.hpp"
#include "res2net/params.hpp"
#include "res2net/rng.hpp"
#include "res2net/serialize.hpp"
#include "res2net/tape.hpp"
#include "res2net/tensor.hpp"
#include "res2net/train.hpp"
