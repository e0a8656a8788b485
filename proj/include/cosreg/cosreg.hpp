#ifndef COSREG_COSREG_HPP
#define COSREG_COSREG_HPP

#include "cosreg/aggregate.hpp"
#include "cosreg/errors.hpp"
#include "cosreg/experiment.hpp"
#include "cosreg/fit.hpp"
#include "cosreg/grid.hpp"
#include "cosreg/integrate.hpp"
#include "cosreg/io.hpp"
#include "cosreg/likelihood.hpp"
#include "cosreg/optimize.hpp"
#include "cosreg/process.hpp"

#endif  // COSREG_COSREG_HPP
