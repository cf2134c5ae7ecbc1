#pragma once

#include "spikedisc/analysis/discrimination.hpp"
#include "spikedisc/audio/frontend.hpp"
#include "spikedisc/core/batchnorm.hpp"
#include "spikedisc/core/errors.hpp"
#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/parallel.hpp"
#include "spikedisc/core/rng.hpp"
#include "spikedisc/core/tensor.hpp"
#include "spikedisc/io/checkpoint.hpp"
#include "spikedisc/io/tensor_file.hpp"
#include "spikedisc/layers/heads.hpp"
#include "spikedisc/layers/layers.hpp"
#include "spikedisc/layers/residual.hpp"
#include "spikedisc/losses/losses.hpp"
#include "spikedisc/models/graph.hpp"
#include "spikedisc/neurons/lif.hpp"
#include "spikedisc/neurons/surrogate.hpp"
#include "spikedisc/train/avtoy.hpp"
#include "spikedisc/train/config.hpp"
#include "spikedisc/train/harness.hpp"
#include "spikedisc/train/optim.hpp"
