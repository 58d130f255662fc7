#pragma once

// Convenience umbrella: pulls in the whole library.

#include "gce/baselines.hpp"
#include "gce/channel.hpp"
#include "gce/errors.hpp"
#include "gce/estimator.hpp"
#include "gce/harness.hpp"
#include "gce/linalg.hpp"
#include "gce/measurement.hpp"
#include "gce/nn.hpp"
#include "gce/precoding.hpp"
#include "gce/rng.hpp"
#include "gce/weights_io.hpp"
#include "gce/wgan.hpp"
