#pragma once

// Umbrella header.

#include "civicsim/aggregation.hpp"
#include "civicsim/analytics.hpp"
#include "civicsim/corpus.hpp"
#include "civicsim/domain.hpp"
#include "civicsim/prompts.hpp"
#include "civicsim/providers.hpp"
#include "civicsim/report.hpp"
#include "civicsim/runner.hpp"
