#pragma once

#include "sfde/error.hpp"
#include "sfde/expr.hpp"
#include "sfde/measure.hpp"
#include "sfde/resolvent.hpp"
#include "sfde/segment.hpp"
#include "sfde/spectral.hpp"
#include "sfde/stochastic.hpp"
#include "sfde/system.hpp"
#include "sfde/wiener.hpp"
