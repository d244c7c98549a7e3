#pragma once

#include "fquant/alloc.hpp"
#include "fquant/core.hpp"
#include "fquant/cppq.hpp"
#include "fquant/haar.hpp"
#include "fquant/parallel.hpp"
#include "fquant/procsim.hpp"
#include "fquant/product_quantizer.hpp"
#include "fquant/quant1d.hpp"
#include "fquant/ratelab.hpp"
