#pragma once

#include "dgopt/ema.hpp"
#include "dgopt/errors.hpp"
#include "dgopt/harness.hpp"
#include "dgopt/network.hpp"
#include "dgopt/objectives.hpp"
#include "dgopt/powerflow.hpp"
