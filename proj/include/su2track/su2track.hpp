#pragma once

#include "su2track/types.hpp"
#include "su2track/lie.hpp"
#include "su2track/jet.hpp"
#include "su2track/state.hpp"
#include "su2track/attitude.hpp"
#include "su2track/tracking.hpp"
#include "su2track/dynamics.hpp"
#include "su2track/reference.hpp"
#include "su2track/estimator.hpp"
#include "su2track/config.hpp"
#include "su2track/sim.hpp"
#include "su2track/io.hpp"
