#pragma once

#include "ccf/linalg.hpp"
#include "ccf/dynamics.hpp"
#include "ccf/certificates.hpp"
#include "ccf/data.hpp"
#include "ccf/conic_program.hpp"
#include "ccf/socp_solver.hpp"
#include "ccf/uncertainty.hpp"
#include "ccf/robust_controller.hpp"
#include "ccf/experiments.hpp"
