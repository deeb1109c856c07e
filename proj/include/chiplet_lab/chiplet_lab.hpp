#pragma once

#include "chiplet_lab/analyzer.hpp"
#include "chiplet_lab/arch.hpp"
#include "chiplet_lab/error.hpp"
#include "chiplet_lab/experiment.hpp"
#include "chiplet_lab/mapper.hpp"
#include "chiplet_lab/netsim.hpp"
#include "chiplet_lab/region.hpp"
#include "chiplet_lab/report.hpp"
#include "chiplet_lab/workload.hpp"
