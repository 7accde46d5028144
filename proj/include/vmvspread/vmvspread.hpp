#pragma once

#include "cli.hpp"
#include "errors.hpp"
#include "fourier.hpp"
#include "hedging.hpp"
#include "kernels.hpp"
#include "levy.hpp"
#include "linalg.hpp"
#include "market.hpp"
#include "math.hpp"
#include "mc.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "version.hpp"
