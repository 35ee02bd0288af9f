#pragma once

#include "qcs/bounds.hpp"
#include "qcs/config.hpp"
#include "qcs/errors.hpp"
#include "qcs/gmvq.hpp"
#include "qcs/harness.hpp"
#include "qcs/io.hpp"
#include "qcs/model.hpp"
#include "qcs/rng.hpp"
#include "qcs/solvers.hpp"
