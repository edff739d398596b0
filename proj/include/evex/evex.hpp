#pragma once

#include "evex/analysis.hpp"
#include "evex/classifier.hpp"
#include "evex/evolution.hpp"
#include "evex/hypervolume.hpp"
#include "evex/image.hpp"
#include "evex/imaging.hpp"
#include "evex/io.hpp"
#include "evex/lime.hpp"
#include "evex/pareto.hpp"
#include "evex/records.hpp"
#include "evex/ridge.hpp"
#include "evex/segmentation.hpp"
