#pragma once

#include "twoscale/envelope.hpp"
#include "twoscale/harness.hpp"
#include "twoscale/kernel.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/operator.hpp"
#include "twoscale/quadrature.hpp"
#include "twoscale/system.hpp"
#include "twoscale/types.hpp"
