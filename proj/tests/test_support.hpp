// Test-side aliases for the deterministic instance generators and
// finite-difference oracles that live in the check module (the `check`
// subcommand runs the same oracles at the CLI).
#pragma once

#include "gstiefel/check.hpp"

namespace gstiefel::testing {

using check::fd_directional;
using check::fd_gradient;
using check::m_orthonormalize;
using check::random_matrix;
using check::random_orthogonal;
using check::random_spd;
using check::rel_error;

}  // namespace gstiefel::testing
