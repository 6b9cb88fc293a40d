#pragma once

// Convenience umbrella for the whole library.

#include "unmix/baselines.hpp"
#include "unmix/dataio.hpp"
#include "unmix/metrics.hpp"
#include "unmix/quec.hpp"
#include "unmix/simulate.hpp"
#include "unmix/solver.hpp"
#include "unmix/types.hpp"
