#pragma once

#include "coulomb_mpc/formation.hpp"
#include "coulomb_mpc/cones.hpp"
#include "coulomb_mpc/admm_solver.hpp"
#include "coulomb_mpc/horizon.hpp"
#include "coulomb_mpc/recovery.hpp"
#include "coulomb_mpc/controller.hpp"
#include "coulomb_mpc/simulation.hpp"
#include "coulomb_mpc/oracle.hpp"
#include "coulomb_mpc/config.hpp"
