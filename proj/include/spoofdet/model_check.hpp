#pragma once

#include <cstdint>

#include "spoofdet/grad_check.hpp"

namespace spoofdet {

// End-to-end gradient check of the full scorer at small dimensions (64-bit,
// adapter on, DSU off, batch of two utterances with one label per class).
// Every parameter tensor is jittered off its initial special values so the
// check runs at generic positions. With inject_fault, the analytic gradient
// of one projection matrix is doubled; the reported error must flag it.
GradCheckResult mhfa_grad_check(std::uint64_t seed, bool inject_fault);

}  // namespace spoofdet
