#pragma once

#include "mixhaz/config.hpp"
#include "mixhaz/estimator.hpp"
#include "mixhaz/hazards.hpp"
#include "mixhaz/manifest.hpp"
#include "mixhaz/optim.hpp"
#include "mixhaz/propensity.hpp"
#include "mixhaz/records.hpp"
#include "mixhaz/rng.hpp"
#include "mixhaz/search_model.hpp"
#include "mixhaz/simlab.hpp"
