#ifndef PEXP_PEXP_HPP
#define PEXP_PEXP_HPP

#include "error.hpp"
#include "special.hpp"
#include "rng.hpp"
#include "seq_core.hpp"
#include "pexp_dist.hpp"
#include "wn_model.hpp"
#include "prior.hpp"
#include "quadrature.hpp"
#include "parallel.hpp"
#include "hbayes.hpp"
#include "ebayes.hpp"
#include "rates.hpp"
#include "svg.hpp"
#include "harness.hpp"

#endif
