#pragma once

#include "bcrf/core_types.hpp"
#include "bcrf/kernels.hpp"
#include "bcrf/energy.hpp"
#include "bcrf/inference.hpp"
#include "bcrf/exact_oracle.hpp"
#include "bcrf/diff.hpp"
#include "bcrf/panoptic.hpp"
#include "bcrf/io.hpp"
#include "bcrf/synthetic.hpp"
