#pragma once

#include "fasrec/baselines.hpp"
#include "fasrec/binary_io.hpp"
#include "fasrec/channel_model.hpp"
#include "fasrec/config.hpp"
#include "fasrec/dataset.hpp"
#include "fasrec/errors.hpp"
#include "fasrec/experiment.hpp"
#include "fasrec/mlp.hpp"
#include "fasrec/pilot_system.hpp"
#include "fasrec/random.hpp"
