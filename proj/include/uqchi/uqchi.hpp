#pragma once

#include "uqchi/error.hpp"
#include "uqchi/panel.hpp"
#include "uqchi/panel_io.hpp"
#include "uqchi/med_core.hpp"
#include "uqchi/predictor.hpp"
#include "uqchi/chi_baseline.hpp"
#include "uqchi/simulator.hpp"
#include "uqchi/model_io.hpp"
#include "uqchi/harness.hpp"
