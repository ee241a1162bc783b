#pragma once

#include "poba/bal_io.hpp"
#include "poba/baseline_solvers.hpp"
#include "poba/camera_model.hpp"
#include "poba/common.hpp"
#include "poba/evalkit.hpp"
#include "poba/landmark_blocks.hpp"
#include "poba/lm_optimizer.hpp"
#include "poba/post_cluster.hpp"
#include "poba/power_series.hpp"
#include "poba/spectral_diagnostics.hpp"
#include "poba/synthetic.hpp"
