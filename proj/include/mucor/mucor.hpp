#ifndef MUCOR_MUCOR_HPP
#define MUCOR_MUCOR_HPP

// Umbrella header: the full library.

#include "mucor/adam.hpp"
#include "mucor/adjoint.hpp"
#include "mucor/channel.hpp"
#include "mucor/experiment.hpp"
#include "mucor/fem.hpp"
#include "mucor/field_io.hpp"
#include "mucor/fields.hpp"
#include "mucor/grid.hpp"
#include "mucor/homogenize.hpp"
#include "mucor/loss.hpp"
#include "mucor/mlp.hpp"
#include "mucor/parallel.hpp"
#include "mucor/sha256.hpp"
#include "mucor/sparse.hpp"
#include "mucor/train.hpp"

#endif  // MUCOR_MUCOR_HPP
