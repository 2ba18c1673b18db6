#pragma once

// Everything: fields, kernels, material laws, hypothesis checks, the CH and
// NS steppers, diagnostics and the run driver.

#include "nlchns/assumptions.hpp"
#include "nlchns/ch.hpp"
#include "nlchns/config.hpp"
#include "nlchns/core.hpp"
#include "nlchns/diagnostics.hpp"
#include "nlchns/driver.hpp"
#include "nlchns/grid.hpp"
#include "nlchns/kernel.hpp"
#include "nlchns/material.hpp"
#include "nlchns/ns.hpp"
#include "nlchns/poisson.hpp"
#include "nlchns/snapshot.hpp"
