#pragma once

#include "shazam/feature_store/container.hpp"
#include "shazam/feature_store/depths.hpp"
#include "shazam/feature_store/import.hpp"
#include "shazam/feature_store/split.hpp"
#include "shazam/feature_store/synth.hpp"
#include "shazam/feature_store/types.hpp"
