#pragma once

#include "dilatation/carnot.hpp"
#include "dilatation/core.hpp"
#include "dilatation/curve.hpp"
#include "dilatation/errors.hpp"
#include "dilatation/instances.hpp"
#include "dilatation/length.hpp"
#include "dilatation/optim.hpp"
#include "dilatation/projection.hpp"
