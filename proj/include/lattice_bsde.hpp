#pragma once

#include "lattice_bsde/errors.hpp"
#include "lattice_bsde/lattice.hpp"
#include "lattice_bsde/parallel.hpp"
#include "lattice_bsde/scenario.hpp"
#include "lattice_bsde/optimize.hpp"
#include "lattice_bsde/drivers.hpp"
#include "lattice_bsde/convex.hpp"
#include "lattice_bsde/solver.hpp"
#include "lattice_bsde/extraction.hpp"
#include "lattice_bsde/feynman_kac.hpp"
#include "lattice_bsde/portfolio.hpp"
#include "lattice_bsde/equilibrium.hpp"
#include "lattice_bsde/io.hpp"
#include "lattice_bsde/config.hpp"
