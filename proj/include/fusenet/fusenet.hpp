// Umbrella header.
#pragma once

#include "fusenet/autodiff.hpp"
#include "fusenet/checkpoint.hpp"
#include "fusenet/common.hpp"
#include "fusenet/dataio.hpp"
#include "fusenet/fusion.hpp"
#include "fusenet/image.hpp"
#include "fusenet/linalg.hpp"
#include "fusenet/losses.hpp"
#include "fusenet/metrics.hpp"
#include "fusenet/network.hpp"
#include "fusenet/optim.hpp"
#include "fusenet/plot.hpp"
#include "fusenet/tensor.hpp"
#include "fusenet/train.hpp"
