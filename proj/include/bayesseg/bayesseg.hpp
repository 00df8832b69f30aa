#ifndef BAYESSEG_BAYESSEG_HPP
#define BAYESSEG_BAYESSEG_HPP

// Online Bayesian multiple-changepoint detection for multidimensional,
// possibly partially observed time series.

#include "bayesseg/emission.hpp"
#include "bayesseg/errors.hpp"
#include "bayesseg/filter.hpp"
#include "bayesseg/io.hpp"
#include "bayesseg/length_prior.hpp"
#include "bayesseg/masked_linalg.hpp"
#include "bayesseg/numerics.hpp"
#include "bayesseg/oracle.hpp"
#include "bayesseg/posterior.hpp"
#include "bayesseg/rng.hpp"
#include "bayesseg/simulate.hpp"

#endif
