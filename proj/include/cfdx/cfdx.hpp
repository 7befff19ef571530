#pragma once

#include "cfdx/errors.hpp"
#include "cfdx/rng.hpp"
#include "cfdx/model.hpp"
#include "cfdx/sampling.hpp"
#include "cfdx/parallel.hpp"
#include "cfdx/subset_walk.hpp"
#include "cfdx/exact.hpp"
#include "cfdx/measures.hpp"
#include "cfdx/twin.hpp"
#include "cfdx/monte_carlo.hpp"
#include "cfdx/synthetic.hpp"
#include "cfdx/evaluation.hpp"
#include "cfdx/desiderata.hpp"
