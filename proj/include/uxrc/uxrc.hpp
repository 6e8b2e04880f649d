// uxrc/uxrc.hpp -- umbrella header
#pragma once

#include "uxrc/channel.hpp"
#include "uxrc/controllers.hpp"
#include "uxrc/experiment.hpp"
#include "uxrc/media.hpp"
#include "uxrc/metrics.hpp"
#include "uxrc/radio.hpp"
#include "uxrc/rng.hpp"
#include "uxrc/scene_io.hpp"
#include "uxrc/simulator.hpp"
