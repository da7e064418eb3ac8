#pragma once

#include "moverstayer/compare.hpp"
#include "moverstayer/data.hpp"
#include "moverstayer/error.hpp"
#include "moverstayer/estimate.hpp"
#include "moverstayer/inference.hpp"
#include "moverstayer/io.hpp"
#include "moverstayer/likelihood.hpp"
#include "moverstayer/metrics.hpp"
#include "moverstayer/model.hpp"
#include "moverstayer/numeric.hpp"
#include "moverstayer/optimize.hpp"
#include "moverstayer/parallel.hpp"
#include "moverstayer/random.hpp"
#include "moverstayer/simulate.hpp"
#include "moverstayer/version.hpp"
