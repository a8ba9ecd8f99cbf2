#pragma once

#include "common.hpp"
#include "linalg.hpp"
#include "probspec.hpp"
#include "rml.hpp"
#include "gp.hpp"
#include "lowdiscrepancy.hpp"
#include "embedding.hpp"
#include "hdbo.hpp"
#include "baselines.hpp"
#include "bench.hpp"
#include "config.hpp"
#include "cli.hpp"
