// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Everything except the JSON run configuration (which needs nlohmann/json).

#include "stochdiff/autodiff.hpp"
#include "stochdiff/checkpoint.hpp"
#include "stochdiff/data.hpp"
#include "stochdiff/denoiser.hpp"
#include "stochdiff/diffusion.hpp"
#include "stochdiff/drop_monitor.hpp"
#include "stochdiff/evaluation.hpp"
#include "stochdiff/forecasting.hpp"
#include "stochdiff/gmm.hpp"
#include "stochdiff/gradcheck.hpp"
#include "stochdiff/latent.hpp"
#include "stochdiff/layers.hpp"
#include "stochdiff/metrics.hpp"
#include "stochdiff/model.hpp"
#include "stochdiff/params.hpp"
#include "stochdiff/plot.hpp"
#include "stochdiff/random.hpp"
#include "stochdiff/tensor.hpp"
#include "stochdiff/training.hpp"
