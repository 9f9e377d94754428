#pragma once

#include "slsp/analyzer.hpp"
#include "slsp/container.hpp"
#include "slsp/gemm.hpp"
#include "slsp/matrix.hpp"
#include "slsp/pack.hpp"
#include "slsp/pattern.hpp"
#include "slsp/quantize.hpp"
