// Result shape shared by the survival and regression model fits.
#pragma once

#include <string>

#include "orthodr/kernels.hpp"
#include "orthodr/solver.hpp"
#include "orthodr/stiefel.hpp"

namespace orthodr {

// Fit output for the dimension-reduction models. The estimated basis lives
// on the standardized-covariate scale; center/scale carry what is needed to
// back-transform (see back_transform()).
struct DrFitResult {
    FitResult fit;
    StiefelPoint B_initial;
    Vector center;
    Vector scale;
    double bw = 0.0;
    double slice_fraction = 0.0;
    std::string method;
    bool initial_fallback = false;          // initializer fell back to a random start
    long degenerate_mean_windows = 0;       // kernel-window substitutions during the fit
    long degenerate_hazard_windows = 0;

    const StiefelPoint& B() const { return fit.B; }
    StiefelPoint B_raw() const { return back_transform(fit.B, scale); }
};

} // namespace orthodr
