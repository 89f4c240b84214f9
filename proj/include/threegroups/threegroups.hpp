#pragma once

#include "threegroups/config.hpp"
#include "threegroups/diagnostics.hpp"
#include "threegroups/error.hpp"
#include "threegroups/io.hpp"
#include "threegroups/likelihoods.hpp"
#include "threegroups/matrix.hpp"
#include "threegroups/metrics.hpp"
#include "threegroups/model_core.hpp"
#include "threegroups/priors.hpp"
#include "threegroups/rng.hpp"
#include "threegroups/sampler.hpp"
#include "threegroups/simgen.hpp"
#include "threegroups/summary.hpp"
