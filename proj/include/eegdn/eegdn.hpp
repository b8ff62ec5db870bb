#pragma once

#include "eegdn/bench.hpp"
#include "eegdn/dataset.hpp"
#include "eegdn/dim_expand.hpp"
#include "eegdn/error.hpp"
#include "eegdn/fft.hpp"
#include "eegdn/metrics.hpp"
#include "eegdn/model.hpp"
#include "eegdn/model_spec.hpp"
#include "eegdn/ops.hpp"
#include "eegdn/pipeline.hpp"
#include "eegdn/synth.hpp"
#include "eegdn/tensor.hpp"
#include "eegdn/train.hpp"
#include "eegdn/weights_io.hpp"
