#pragma once

// Umbrella header: binary-item latent class estimation, the constrained
// multidimensional 2PL reparametrization, discriminant-power item screening,
// and likelihood-ratio dimensionality clustering.

#include "lcirt/config.hpp"
#include "lcirt/data.hpp"
#include "lcirt/dimensionality.hpp"
#include "lcirt/error.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/matrix.hpp"
#include "lcirt/patterns.hpp"
#include "lcirt/pipeline.hpp"
#include "lcirt/report.hpp"
#include "lcirt/rng.hpp"
#include "lcirt/selection.hpp"
#include "lcirt/simulate.hpp"
#include "lcirt/stats.hpp"
#include "lcirt/twopl.hpp"
