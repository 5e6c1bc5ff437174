#pragma once

namespace teledex {

/// Kernels that fan out over independent work items take one of these.
/// `serial` is the reference path the tests compare `parallel` against.
enum class Execution { serial, parallel };

/// Worker threads OpenMP would use for a parallel region; 1 without OpenMP.
int max_threads();

}  // namespace teledex
