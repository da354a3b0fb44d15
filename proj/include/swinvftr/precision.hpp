#pragma once

// Tensor scalar type. Defining SWINVFTR_DOUBLE builds a 64-bit variant of the
// library inside a different inline namespace, so the two variants can be
// linked into one program.
#ifdef SWINVFTR_DOUBLE
#define SWINVFTR_PRECISION f64
#else
#define SWINVFTR_PRECISION f32
#endif

namespace swinvftr::inline SWINVFTR_PRECISION {

#ifdef SWINVFTR_DOUBLE
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace swinvftr
