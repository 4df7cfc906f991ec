#pragma once

#include "piobs/errors.hpp"
#include "piobs/linalg.hpp"
#include "piobs/analysis.hpp"
#include "piobs/design.hpp"
#include "piobs/sim.hpp"
