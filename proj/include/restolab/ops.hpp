#ifndef RESTOLAB_OPS_HPP
#define RESTOLAB_OPS_HPP

#include "restolab/autograd.hpp"

namespace restolab::ops {

enum class PadMode { Zero, Reflect };

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, double s);

// x * s where s is a scalar Var (gating scores, loss weights)
Var mul_scalar_var(const Var& x, const Var& s);
// scalar a / scalar b
Var div_vars(const Var& a, const Var& b);

// linear algebra
Var matmul(const Var& a, const Var& b); // [m,k] x [k,n]
Var transpose(const Var& a);            // [m,n] -> [n,m]
Var reshape(const Var& a, std::vector<int> shape);

// slice along axis 0 (rows of a matrix, channels of a CHW map, entries of a vector)
Var slice0(const Var& a, int begin, int end);
Var concat0(const std::vector<Var>& parts); // concat along axis 0

// nonlinearities / normalization
Var gelu(const Var& x);
Var softmax_rows(const Var& x); // [m,n], softmax along axis 1
Var softmax_vec(const Var& x);  // [n]
Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta); // [N,D]
Var layernorm_chw(const Var& x, const Var& gamma, const Var& beta);  // over C per position

// conv / spatial
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1,
           PadMode pad = PadMode::Reflect); // x [Cin,H,W], w [Cout,Cin,k,k], b [Cout] or null
Var global_avg_pool(const Var& x);          // [C,H,W] -> [C]
Var bilinear_resize(const Var& x, int out_h, int out_w); // align-corners
Var pixel_shuffle(const Var& x, int r);     // [C*r*r,H,W] -> [C,H*r,W*r]
Var patchify(const Var& x, int p);          // [C,H,W] -> [(H/p)*(W/p), C*p*p]

// x [n] or rows [m,n]: y = x W^T + b with W [out,in], b [out]
Var linear(const Var& x, const Var& w, const Var& b);

// reductions
Var sum(const Var& x);
Var mean(const Var& x);
Var mean_abs_diff(const Var& a, const Var& b);

} // namespace restolab::ops

#endif
