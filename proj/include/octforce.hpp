#pragma once

#include "octforce/adam.hpp"
#include "octforce/commands.hpp"
#include "octforce/error.hpp"
#include "octforce/eval.hpp"
#include "octforce/experiment.hpp"
#include "octforce/fft.hpp"
#include "octforce/io.hpp"
#include "octforce/needle_sim.hpp"
#include "octforce/ops.hpp"
#include "octforce/recon.hpp"
#include "octforce/resnet1d.hpp"
#include "octforce/runtime.hpp"
#include "octforce/tensor.hpp"
#include "octforce/train.hpp"
