#pragma once

#include "vmpt/config.hpp"
#include "vmpt/elasticity.hpp"
#include "vmpt/experiment.hpp"
#include "vmpt/export.hpp"
#include "vmpt/fem.hpp"
#include "vmpt/metric.hpp"
#include "vmpt/pdas.hpp"
#include "vmpt/phasefield.hpp"
#include "vmpt/qp.hpp"
#include "vmpt/solver.hpp"
#include "vmpt/trimesh.hpp"
#include "vmpt/types.hpp"
