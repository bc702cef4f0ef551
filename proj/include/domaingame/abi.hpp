// SPDX-License-Identifier: Apache-2.0
//
// The single- and double-precision builds live in distinct inline namespaces
// so both libraries can be linked into one executable.
#pragma once

#ifdef DOMAINGAME_DOUBLE
#define DOMAINGAME_ABI f64
#else
#define DOMAINGAME_ABI f32
#endif
