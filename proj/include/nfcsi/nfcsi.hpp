#pragma once

// Umbrella header for the near-field CSI feedback library.

#include "nfcsi/channel.hpp"
#include "nfcsi/checkpoint.hpp"
#include "nfcsi/config.hpp"
#include "nfcsi/dataset.hpp"
#include "nfcsi/evaluation.hpp"
#include "nfcsi/metrics.hpp"
#include "nfcsi/model.hpp"
#include "nfcsi/training.hpp"
