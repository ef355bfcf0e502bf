#pragma once

#include "cpguard/attacks.hpp"
#include "cpguard/bev_core.hpp"
#include "cpguard/consensus.hpp"
#include "cpguard/harness/config_io.hpp"
#include "cpguard/harness/experiments.hpp"
#include "cpguard/harness/report.hpp"
#include "cpguard/harness/selftest.hpp"
#include "cpguard/harness/scenario.hpp"
#include "cpguard/harness/trial.hpp"
#include "cpguard/perception.hpp"
#include "cpguard/random.hpp"
