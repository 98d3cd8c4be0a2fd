#pragma once

// Umbrella header for the source-aware membership audit toolkit.

#include "sma/attribution.hpp"
#include "sma/audit.hpp"
#include "sma/core.hpp"
#include "sma/error.hpp"
#include "sma/eval.hpp"
#include "sma/image_io.hpp"
#include "sma/labeling.hpp"
#include "sma/metrics.hpp"
#include "sma/perturb.hpp"
#include "sma/ragsim.hpp"
#include "sma/report.hpp"
#include "sma/rng.hpp"
#include "sma/target.hpp"
