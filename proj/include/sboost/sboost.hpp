#pragma once

#include "sboost/matrix.hpp"
#include "sboost/tape.hpp"
#include "sboost/optim.hpp"
#include "sboost/model.hpp"
#include "sboost/boost_loss.hpp"
#include "sboost/aca.hpp"
#include "sboost/data.hpp"
#include "sboost/metrics.hpp"
#include "sboost/theory.hpp"
#include "sboost/config.hpp"
#include "sboost/harness.hpp"
