#pragma once

#include "gpolab/array.hpp"

namespace gpolab::kernels {

// Every kernel exists in a serial and an OpenMP flavor that produce
// bit-identical results: each output element is computed by exactly one
// thread with a fixed-order float64 accumulation, so the schedule cannot
// change the value. Exec::Auto picks the parallel path for large inputs.
enum class Exec { Auto, Serial, Parallel };

// Thread cap, resolved once from GPO_LAB_THREADS (places an upper bound on
// omp_get_max_threads). Returns the effective thread count.
int effective_threads();
void set_thread_cap(int n);

// C = op(A) * op(B), 2-D only.
Array matmul(const Array& a, bool trans_a, const Array& b, bool trans_b,
             Exec exec = Exec::Auto);
inline Array matmul(const Array& a, const Array& b, Exec exec = Exec::Auto) {
    return matmul(a, false, b, false, exec);
}

// Elementwise; shapes must match exactly.
Array ew_add(const Array& a, const Array& b, Exec exec = Exec::Auto);
Array ew_sub(const Array& a, const Array& b, Exec exec = Exec::Auto);
Array ew_mul(const Array& a, const Array& b, Exec exec = Exec::Auto);
Array ew_scale(const Array& a, double c, Exec exec = Exec::Auto);
Array ew_silu(const Array& a, Exec exec = Exec::Auto);
Array ew_relu(const Array& a, Exec exec = Exec::Auto);
Array ew_square(const Array& a, Exec exec = Exec::Auto);
Array ew_softplus(const Array& a, Exec exec = Exec::Auto);
Array ew_sigmoid(const Array& a, Exec exec = Exec::Auto);
// g * silu'(x) and g * relu'(x); used by the backward pass.
Array ew_silu_grad(const Array& x, const Array& g, Exec exec = Exec::Auto);
Array ew_relu_grad(const Array& x, const Array& g, Exec exec = Exec::Auto);

// a[m,n] + v broadcast across rows (v has n elements).
Array add_rowvec(const Array& a, const Array& v, Exec exec = Exec::Auto);

// Reductions. colsum -> [1,n], rowsum -> [m,1], sum_all -> scalar.
Array colsum(const Array& a, Exec exec = Exec::Auto);
Array rowsum(const Array& a, Exec exec = Exec::Auto);
double sum_all(const Array& a, Exec exec = Exec::Auto);

double stable_sigmoid(double x);
double stable_softplus(double x);

}  // namespace gpolab::kernels
