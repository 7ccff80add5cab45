#pragma once

// Umbrella header for the whole library.

#include "ndc/bfgs.hpp"
#include "ndc/config.hpp"
#include "ndc/dataset.hpp"
#include "ndc/errors.hpp"
#include "ndc/filters.hpp"
#include "ndc/ident_cc.hpp"
#include "ndc/map_ident.hpp"
#include "ndc/model.hpp"
#include "ndc/ocv.hpp"
#include "ndc/profile.hpp"
#include "ndc/simulate.hpp"
#include "ndc/wiener.hpp"
