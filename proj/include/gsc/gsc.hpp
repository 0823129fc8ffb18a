#pragma once

#include "gsc/cluster.hpp"
#include "gsc/dyngraph.hpp"
#include "gsc/error.hpp"
#include "gsc/geig.hpp"
#include "gsc/netmodel.hpp"
#include "gsc/powerflow.hpp"
#include "gsc/robust.hpp"
#include "gsc/sim.hpp"
