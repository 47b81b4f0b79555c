#pragma once

#include <memory>
#include <vector>

#include "hit/tensor.hpp"

namespace hit {

// Elementwise (shapes must match exactly; broadcasting is deliberate-only
// via the dedicated ops below).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, real c);
Tensor mul_scalar(const Tensor& a, real c);
// Multiplies every element by the single-element tensor s (s stays tracked).
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor gelu(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);          // (m,k)x(k,n)
Tensor bmm(const Tensor& a, const Tensor& b);             // (B,m,k)x(B,k,n)
Tensor bmm_nt(const Tensor& a, const Tensor& b);          // (B,m,p)x(B,q,p) -> (B,m,q)
Tensor transpose(const Tensor& a);                        // rank-2
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor sum(const Tensor& a);    // -> shape {1}
Tensor mean(const Tensor& a);   // -> shape {1}

// x:(N,Cin) w:(Cin,Cout) b:(Cout) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Broadcasts b over the last axis of x.
Tensor add_bias_last(const Tensor& x, const Tensor& b);

// Cross-correlation, zero padding. x:(H,W,Cin), w:(kh,kw,Cin/groups,Cout),
// b:(Cout) or undefined. groups==Cin with Cout==Cin is depthwise.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
              int groups);

// Stride-2 upsampling. x:(H,W,Cin), w:(2,2,Cin,Cout) -> (2H,2W,Cout).
Tensor conv_transpose2x2(const Tensor& x, const Tensor& w, const Tensor& b);

// Normalizes the last axis; gamma/beta shape (C).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps);

Tensor softmax(const Tensor& x, int axis);

// x:(H,W,C) -> (out_h,out_w,C), half-pixel-center convention.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

// Pools the last axis from c_in to c_out; bin b covers channel indices
// [floor(b*c_in/c_out), floor((b+1)*c_in/c_out)).
Tensor adaptive_avg_pool_channels(const Tensor& x, int c_out);
std::vector<std::pair<int, int>> adaptive_pool_bins(int c_in, int c_out);

// out[i,:] = table[indices[i],:]
Tensor gather_rows(const Tensor& table, const std::shared_ptr<std::vector<int>>& indices);

// out[i] = x.flat[indices[i]]; backward scatter-adds.
Tensor gather_flat(const Tensor& x, const std::shared_ptr<std::vector<std::int64_t>>& indices,
                   std::vector<int> out_shape);

// Repeats the whole block sequence t times along axis 0.
Tensor tile_axis0(const Tensor& a, int t);

// x:(H,W,C); reflection without edge repetition; each pad must be < extent.
Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop2d(const Tensor& x, int row0, int col0, int h, int w);

// Multiply-accumulate accounting. Kernels report their nominal MAC counts
// (padded taps included) while a counter is running on the calling thread.
class MacCounter {
public:
    static void start();
    static unsigned long long stop();
    static void add(unsigned long long macs);
    static bool active();
};

// Test hook for the gradcheck negative control: scales matmul's dA rule.
void set_matmul_grad_corruption(bool enabled);

}  // namespace hit
