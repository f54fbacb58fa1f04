#pragma once

#include "halo/errors.hpp"
#include "halo/rng.hpp"
#include "halo/linalg.hpp"
#include "halo/hetgraph.hpp"
#include "halo/energy.hpp"
#include "halo/unfold.hpp"
#include "halo/readout.hpp"
#include "halo/diff.hpp"
#include "halo/train.hpp"
#include "halo/synth.hpp"
