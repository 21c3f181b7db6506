#pragma once

// Everything at once.
#include "lsmix/core.hpp"
#include "lsmix/datagen.hpp"
#include "lsmix/diagnostics.hpp"
#include "lsmix/losses.hpp"
#include "lsmix/models.hpp"
#include "lsmix/plot.hpp"
#include "lsmix/sweep.hpp"
#include "lsmix/train.hpp"
#include "lsmix/verify.hpp"
