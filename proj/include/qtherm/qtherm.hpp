#pragma once

#include "qtherm/closed_forms.hpp"
#include "qtherm/correlations.hpp"
#include "qtherm/ed.hpp"
#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"
#include "qtherm/hermite.hpp"
#include "qtherm/scenario.hpp"
#include "qtherm/thermo.hpp"
#include "qtherm/three_body.hpp"
