#pragma once

#include "deffa/imaging.hpp"

namespace deffa {

/// Parameters of the high-frequency enhancement that produces the
/// domain-invariant network input.
struct InvariantConfig {
    int window_size = 15;         ///< odd, >= 3
    double alpha_enh = 1.0;       ///< enhancement scale, > 0
    double epsilon = 1e-8;        ///< variance guard, > 0
    bool normalize_output = true; ///< min-max rescale to [0,1]

    void validate() const;
};

/// Mean over the window_size x window_size neighbourhood of each pixel,
/// reflect-padded (edge pixel not repeated) at the borders.
GrayField local_average(const GrayField& field, const InvariantConfig& cfg);

/// field - local_average(field). Computed as the window mean of
/// (centre - neighbour), so constant fields give exactly zero.
GrayField high_frequency(const GrayField& field, const InvariantConfig& cfg);

/// alpha * sum(H^2) / (M*N*(var(H) + epsilon)).
double enhancement_factor(const GrayField& high, const InvariantConfig& cfg);

/// green channel -> high_frequency -> G*H -> optional min-max to [0,1].
/// A constant result maps to all zeros.
GrayField make_invariant_input(const ColorImage& image, const InvariantConfig& cfg);
GrayField make_invariant_input(const FundusSample& sample, const InvariantConfig& cfg);

}  // namespace deffa
