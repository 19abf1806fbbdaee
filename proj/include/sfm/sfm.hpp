#pragma once

#include "sfm/rng.hpp"
#include "sfm/dense.hpp"
#include "sfm/sparse.hpp"
#include "sfm/prox.hpp"
#include "sfm/kernels.hpp"
#include "sfm/penalty.hpp"
#include "sfm/optim.hpp"
#include "sfm/synthdata.hpp"
#include "sfm/metrics.hpp"
#include "sfm/dataio.hpp"
