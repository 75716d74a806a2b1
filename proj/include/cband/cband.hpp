// Umbrella header: pulls in the full public surface of the library.
#pragma once

#include "cband/activation.hpp"
#include "cband/backbone.hpp"
#include "cband/benchmark.hpp"
#include "cband/errors.hpp"
#include "cband/features.hpp"
#include "cband/frame.hpp"
#include "cband/ggd.hpp"
#include "cband/image_io.hpp"
#include "cband/metrics.hpp"
#include "cband/mlp.hpp"
#include "cband/mscn.hpp"
#include "cband/onnx.hpp"
#include "cband/preprocess.hpp"
#include "cband/rng.hpp"
#include "cband/sureal.hpp"
#include "cband/synth.hpp"
#include "cband/y4m.hpp"
