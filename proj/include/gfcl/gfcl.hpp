#pragma once

#include "gfcl/adam.hpp"
#include "gfcl/attention.hpp"
#include "gfcl/config.hpp"
#include "gfcl/episodes.hpp"
#include "gfcl/fixtures.hpp"
#include "gfcl/graph.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/harness.hpp"
#include "gfcl/io.hpp"
#include "gfcl/model.hpp"
#include "gfcl/params.hpp"
#include "gfcl/protonet.hpp"
#include "gfcl/rng.hpp"
#include "gfcl/sbm.hpp"
#include "gfcl/tape.hpp"
#include "gfcl/tensor.hpp"
