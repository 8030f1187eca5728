#ifndef CELLWEIGHTS_CELLWEIGHTS_HPP
#define CELLWEIGHTS_CELLWEIGHTS_HPP

#include "cellweights/csv.hpp"
#include "cellweights/cwmle.hpp"
#include "cellweights/dataset.hpp"
#include "cellweights/ellipse.hpp"
#include "cellweights/estimators.hpp"
#include "cellweights/rng.hpp"
#include "cellweights/simulate.hpp"
#include "cellweights/unpack.hpp"

#endif
