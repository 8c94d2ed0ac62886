#pragma once

#include <span>
#include <vector>

#include "menan/tensor.hpp"

namespace menan::numerics {

// Every op checks input shapes (DimensionError) and output finiteness
// (NumericError). The result records history only when an input requires
// a gradient.

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// x·Wᵀ + b for x of shape [in] or [n,in], W [out,in], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Valid (unpadded) strided convolution along time.
/// x [T,Cin], weight [Cout,K,Cin], bias [Cout] -> [(T-K)/stride+1, Cout].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride);

/// One GRU step with gate order (reset, update, new):
///   r = σ(W_ir x + b_ir + W_hr h + b_hr)
///   z = σ(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
///   h' = (1 - z) ⊙ n + z ⊙ h
/// x [in], h [H], w_ih [3H,in], w_hh [3H,H], b_ih [3H], b_hh [3H] -> [H]
Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w_ih,
                const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh);

/// Parametric ReLU with one shared slope (slope has a single element).
Tensor prelu(const Tensor& x, const Tensor& slope);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// Natural log; every input value must be positive.
Tensor log(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Reductions over the time axis of x [T,C] -> [C].
Tensor mean_time(const Tensor& x);
/// Population standard deviation, sqrt(var + eps).
Tensor std_time(const Tensor& x, double eps = 1e-8);
Tensor max_time(const Tensor& x);

/// Concatenation along axis 0; trailing dimensions must agree.
Tensor concat(std::span<const Tensor> parts);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

/// Row `index` of x [T,C] as a [C] vector.
Tensor select_row(const Tensor& x, std::size_t index);

/// Identity in the forward pass; multiplies the incoming gradient by
/// `factor` in the backward pass (factor < 0 gives gradient reversal).
Tensor scale_grad(const Tensor& x, double factor);

/// Unrolled dot product with a fixed summation order.
double dot(const double* a, const double* b, std::size_t n);

}  // namespace menan::numerics
