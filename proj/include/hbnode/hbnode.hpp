#pragma once

#include "hbnode/activation.hpp"
#include "hbnode/adjoint.hpp"
#include "hbnode/csv.hpp"
#include "hbnode/data.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/experiments.hpp"
#include "hbnode/linalg.hpp"
#include "hbnode/mlp.hpp"
#include "hbnode/models.hpp"
#include "hbnode/ode_rnn.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/optim.hpp"
#include "hbnode/rng.hpp"
#include "hbnode/spectrum.hpp"
#include "hbnode/tensor.hpp"
#include "hbnode/training.hpp"
