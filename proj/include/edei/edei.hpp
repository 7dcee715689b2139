#pragma once

#include "edei/core.hpp"
#include "edei/config.hpp"
#include "edei/graph.hpp"
#include "edei/spread.hpp"
#include "edei/assignments.hpp"
#include "edei/environment.hpp"
#include "edei/nn.hpp"
#include "edei/predictor.hpp"
#include "edei/metrics.hpp"
#include "edei/marl.hpp"
#include "edei/scenario_io.hpp"
#include "edei/checkpoint.hpp"
#include "edei/cli.hpp"
