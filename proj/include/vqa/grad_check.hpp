// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vqa/autodiff.hpp"

namespace vqa {

/// Builds a scalar from leaf Vars bound to the checked inputs.
using ScalarFunction =
    std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Compares reverse-mode gradients of `f` against central differences with
/// step `eps`. Returns max over every input entry of
/// |analytic - numeric| / max(1, |numeric|). Throws NumericError when any
/// evaluation is non-finite.
double grad_check(const ScalarFunction& f, std::span<const Tensor> inputs,
                  double eps = 1e-5);

}  // namespace vqa
