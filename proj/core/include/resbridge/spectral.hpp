#pragma once

#include "resbridge/tensor.hpp"

namespace resbridge {

// Trajectories and their spectra are both [T, A] tensors; the transform acts
// along the time axis, independently per action dimension.
using Trajectory = Tensor;
using SpectralCoeffs = Tensor;

struct SpectralDecomposition {
  Trajectory semantic;   // reconstruction of the lowest `cutoff` modes
  Trajectory execution;  // orthogonal remainder
  int cutoff = 1;
};

// Orthonormal DCT-II along time. For a constant signal the only nonzero
// coefficient is the DC entry sqrt(T) * mean.
SpectralCoeffs dct_forward(const Trajectory& x);

// Exact inverse (orthonormal DCT-III).
Trajectory dct_inverse(const SpectralCoeffs& coeffs);

// Keeps frequency indices [0, k), zeroes the rest. Throws
// "cutoff out of range" unless 1 <= k <= T.
SpectralCoeffs lowpass_project(const SpectralCoeffs& coeffs, int k);

// semantic = F^-1(P_k(F(x))), execution = x - semantic.
SpectralDecomposition decompose(const Trajectory& x, int k);

}  // namespace resbridge
