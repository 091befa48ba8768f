#pragma once

// Umbrella header for the whole engine. Individual headers are self-contained
// and can be included directly when compile time matters.

#include "checkpoint.hpp"
#include "common.hpp"
#include "config.hpp"
#include "data.hpp"
#include "gradcheck.hpp"
#include "image.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "ops.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "progressive.hpp"
#include "resample.hpp"
#include "rng.hpp"
#include "tensor.hpp"
