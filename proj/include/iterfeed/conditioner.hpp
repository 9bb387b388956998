/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_CONDITIONER_HPP_
#define ITERFEED_CONDITIONER_HPP_

// Feedback conditioning layer: an affine feature-map modulation
//   local:  out[h,w,c] = in[h,w,c] * gamma[h,w,c] + omega[h,w,c]
//   global: out[h,w,c] = in[h,w,c] * gamma[c]     + omega[c]
// The layer itself is purely affine; any thresholding comes from the
// activations of the downstream blocks.

#include <string>

#include "iterfeed/autodiff.hpp"
#include "iterfeed/tensor.hpp"

namespace iterfeed {

enum class FeedbackVariant { kLocal, kGlobal };

inline const char* variant_name(FeedbackVariant v) {
  return v == FeedbackVariant::kLocal ? "local" : "global";
}

inline FeedbackVariant variant_from_name(const std::string& s) {
  if (s == "local") return FeedbackVariant::kLocal;
  if (s == "global") return FeedbackVariant::kGlobal;
  throw UsageError("unknown feedback variant: " + s);
}

template <class S>
struct TransformParams {
  Tensor<S> gamma;
  Tensor<S> omega;
  FeedbackVariant variant = FeedbackVariant::kLocal;
};

template <class S>
void check_modulation_shapes(const Shape& psi, const Shape& gamma,
                             const Shape& omega, FeedbackVariant variant) {
  if (psi.size() != 3)
    throw DataError("modulate: feature map must be rank-3, got " +
                    shape_str(psi));
  if (gamma != omega)
    throw DataError("modulate: gamma " + shape_str(gamma) + " != omega " +
                    shape_str(omega));
  if (variant == FeedbackVariant::kLocal) {
    if (gamma != psi)
      throw DataError("modulate: local params " + shape_str(gamma) +
                      " do not match feature map " + shape_str(psi));
  } else {
    if (shape_size(gamma) != psi[2])
      throw DataError("modulate: global params " + shape_str(gamma) +
                      " do not match channel count of " + shape_str(psi));
  }
}

template <class S>
Tensor<S> modulate(const Tensor<S>& psi, const TransformParams<S>& p) {
  check_modulation_shapes<S>(psi.shape, p.gamma.shape, p.omega.shape,
                             p.variant);
  Tensor<S> out = psi;
  if (p.variant == FeedbackVariant::kLocal) {
    for (std::int64_t i = 0; i < out.size(); ++i)
      out[i] = out[i] * p.gamma[i] + p.omega[i];
  } else {
    int channels = psi.shape[2];
    for (std::int64_t i = 0; i < out.size(); ++i) {
      int c = static_cast<int>(i % channels);
      out[i] = out[i] * p.gamma[c] + p.omega[c];
    }
  }
  return out;
}

// Tape version used inside training graphs. psi is rank-3; gamma/omega are
// either rank-3 (local) or flat channel vectors (global).
template <class S>
Var<S> modulate(Tape<S>& t, Var<S> psi, Var<S> gamma, Var<S> omega,
                FeedbackVariant variant) {
  const Shape& ps = t.val(psi.id).shape;
  check_modulation_shapes<S>(ps, t.val(gamma.id).shape,
                             t.val(omega.id).shape, variant);
  if (variant == FeedbackVariant::kLocal)
    return t.add(t.mul(psi, gamma), omega);
  // Broadcast per channel: flatten to [H*W, C] rows and tile via add_row
  // semantics; mul needs an explicit expansion, so build it once.
  int hw = ps[0] * ps[1], c = ps[2];
  Var<S> flat = t.reshape(psi, Shape{hw, c});
  Tensor<S> ones(Shape{hw, 1}, S(1));
  Var<S> gam_m = t.matmul(t.input(ones), t.reshape(gamma, Shape{1, c}));
  Var<S> scaled = t.mul(flat, gam_m);
  Var<S> shifted = t.add_row(scaled, omega);
  return t.reshape(shifted, ps);
}

template <class S>
TransformParams<S> identity_params(const Shape& psi_shape,
                                   FeedbackVariant variant) {
  if (psi_shape.size() != 3)
    throw DataError("identity_params: feature map shape must be rank-3");
  TransformParams<S> p;
  p.variant = variant;
  Shape s = variant == FeedbackVariant::kLocal ? psi_shape
                                               : Shape{psi_shape[2]};
  p.gamma = Tensor<S>::full(s, S(1));
  p.omega = Tensor<S>::zeros(s);
  return p;
}

}  // namespace iterfeed

#endif  // ITERFEED_CONDITIONER_HPP_
