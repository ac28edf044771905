#pragma once

#include "slimtsf/bootstrap.hpp"
#include "slimtsf/data.hpp"
#include "slimtsf/error.hpp"
#include "slimtsf/features.hpp"
#include "slimtsf/forest.hpp"
#include "slimtsf/metrics.hpp"
#include "slimtsf/ranking.hpp"
#include "slimtsf/selection.hpp"
#include "slimtsf/synthetic.hpp"
