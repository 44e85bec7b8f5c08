#pragma once

// Umbrella header.

#include "voxcam/atlas.hpp"
#include "voxcam/augment.hpp"
#include "voxcam/core.hpp"
#include "voxcam/dataset.hpp"
#include "voxcam/evolve.hpp"
#include "voxcam/explain.hpp"
#include "voxcam/grammar.hpp"
#include "voxcam/nifti.hpp"
#include "voxcam/nn.hpp"
#include "voxcam/ops.hpp"
#include "voxcam/optim.hpp"
#include "voxcam/phantom.hpp"
#include "voxcam/png.hpp"
#include "voxcam/report.hpp"
#include "voxcam/svm.hpp"
#include "voxcam/tensor.hpp"
#include "voxcam/volume.hpp"
