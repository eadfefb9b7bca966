#pragma once

#include "gridtopo/error.hpp"
#include "gridtopo/harness.hpp"
#include "gridtopo/inference.hpp"
#include "gridtopo/measurement.hpp"
#include "gridtopo/netmodel.hpp"
#include "gridtopo/oracle.hpp"
#include "gridtopo/parallel.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/sparse_ldlt.hpp"
#include "gridtopo/twostage.hpp"
#include "gridtopo/ybus.hpp"
