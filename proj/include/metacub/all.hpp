#pragma once

#include "metacub/baselines.hpp"
#include "metacub/config.hpp"
#include "metacub/data_io.hpp"
#include "metacub/delay_kernel.hpp"
#include "metacub/environment.hpp"
#include "metacub/errors.hpp"
#include "metacub/experiment.hpp"
#include "metacub/incomplete_beta.hpp"
#include "metacub/meta_level.hpp"
#include "metacub/metacub_policy.hpp"
#include "metacub/metrics.hpp"
#include "metacub/outcome_model.hpp"
#include "metacub/policy.hpp"
#include "metacub/predictor.hpp"
#include "metacub/report.hpp"
#include "metacub/reward_ledger.hpp"
#include "metacub/rng.hpp"
