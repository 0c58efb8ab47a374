#pragma once

#include "mai/types.hpp"
#include "mai/network.hpp"
#include "mai/network_io.hpp"
#include "mai/assembly.hpp"
#include "mai/state_space.hpp"
#include "mai/rational_fit.hpp"
#include "mai/modes.hpp"
#include "mai/sensitivity.hpp"
#include "mai/report.hpp"
