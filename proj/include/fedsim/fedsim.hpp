#pragma once

#include "fedsim/config.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/greenledger.hpp"
#include "fedsim/lora.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/metrics_core.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/personalization.hpp"
#include "fedsim/rng.hpp"
