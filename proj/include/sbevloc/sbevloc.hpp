#pragma once

// Umbrella header for the S-BEVLoc library.

#include "sbevloc/benchmark.hpp"
#include "sbevloc/bev.hpp"
#include "sbevloc/config.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/extractor.hpp"
#include "sbevloc/fast.hpp"
#include "sbevloc/format.hpp"
#include "sbevloc/geometry.hpp"
#include "sbevloc/kitti_io.hpp"
#include "sbevloc/localization.hpp"
#include "sbevloc/loss.hpp"
#include "sbevloc/metrics.hpp"
#include "sbevloc/model.hpp"
#include "sbevloc/numeric.hpp"
#include "sbevloc/optimizer.hpp"
#include "sbevloc/parallel.hpp"
#include "sbevloc/point_cloud.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/synthetic.hpp"
#include "sbevloc/tensor_file.hpp"
#include "sbevloc/trainer.hpp"
#include "sbevloc/triplet.hpp"
