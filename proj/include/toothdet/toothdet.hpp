#pragma once

// Convenience include of the whole library.

#include "toothdet/anatomy.hpp"
#include "toothdet/distmap.hpp"
#include "toothdet/gradcheck.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/io.hpp"
#include "toothdet/losses.hpp"
#include "toothdet/metrics.hpp"
#include "toothdet/optimize.hpp"
#include "toothdet/parallel.hpp"
#include "toothdet/phantom.hpp"
#include "toothdet/pipeline.hpp"
#include "toothdet/rng.hpp"
#include "toothdet/svg.hpp"
#include "toothdet/volume.hpp"
