#include "gpolab/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace gpolab::kernels {

namespace {

int g_thread_cap = 0;  // 0 = uncapped

int read_env_cap() {
    const char* env = std::getenv("GPO_LAB_THREADS");
    if (!env) return 0;
    int v = std::atoi(env);
    return v > 0 ? v : 0;
}

// Work below this many inner flops is not worth a parallel region.
constexpr size_t kParallelGrain = 1 << 14;

bool use_parallel(Exec exec, size_t work) {
    switch (exec) {
        case Exec::Serial: return false;
        case Exec::Parallel: return true;
        case Exec::Auto: return effective_threads() > 1 && work >= kParallelGrain;
    }
    return false;
}

// Fixed-order dot product with four float64 accumulators. The unroll gives
// ILP without reassociating across lanes, so results do not depend on the
// execution mode.
double dot4(const float* a, const float* b, size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += static_cast<double>(a[i]) * b[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

double accum4(const float* a, size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

void require_2d(const Array& a, const char* who) {
    if (a.shape.size() != 2) {
        throw UsageError(std::string(who) + ": expected 2-D array, got " + shape_string(a.shape));
    }
}

template <typename F>
Array map_unary(const Array& a, Exec exec, F f) {
    Array out(a.shape);
    const size_t n = a.numel();
    const bool par = use_parallel(exec, n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            out.data[i] = static_cast<float>(f(static_cast<double>(a.data[i])));
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            out.data[i] = static_cast<float>(f(static_cast<double>(a.data[i])));
        }
    }
    return out;
}

template <typename F>
Array map_binary(const Array& a, const Array& b, Exec exec, const char* who, F f) {
    if (!a.same_shape(b)) {
        throw UsageError(std::string(who) + ": shape mismatch " + shape_string(a.shape) +
                         " vs " + shape_string(b.shape));
    }
    Array out(a.shape);
    const size_t n = a.numel();
    const bool par = use_parallel(exec, n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            out.data[i] = static_cast<float>(
                f(static_cast<double>(a.data[i]), static_cast<double>(b.data[i])));
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            out.data[i] = static_cast<float>(
                f(static_cast<double>(a.data[i]), static_cast<double>(b.data[i])));
        }
    }
    return out;
}

}  // namespace

int effective_threads() {
    static int env_cap = read_env_cap();
    int n = omp_get_max_threads();
    if (env_cap > 0) n = std::min(n, env_cap);
    if (g_thread_cap > 0) n = std::min(n, g_thread_cap);
    return std::max(1, n);
}

void set_thread_cap(int n) { g_thread_cap = n; }

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Array matmul(const Array& a, bool trans_a, const Array& b, bool trans_b, Exec exec) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const size_t m = trans_a ? a.shape[1] : a.shape[0];
    const size_t kk = trans_a ? a.shape[0] : a.shape[1];
    const size_t kb = trans_b ? b.shape[1] : b.shape[0];
    const size_t n = trans_b ? b.shape[0] : b.shape[1];
    if (kk != kb) {
        throw UsageError("matmul: inner dimension mismatch " + shape_string(a.shape) + " x " +
                         shape_string(b.shape));
    }

    // Pack both operands so the inner loop runs over contiguous memory.
    std::vector<float> a_pack;
    const float* a_rows = a.data.data();
    if (trans_a) {
        a_pack.resize(m * kk);
        for (size_t i = 0; i < m; ++i)
            for (size_t p = 0; p < kk; ++p) a_pack[i * kk + p] = a.data[p * m + i];
        a_rows = a_pack.data();
    }
    std::vector<float> b_pack;
    const float* b_cols = b.data.data();
    if (!trans_b) {
        b_pack.resize(n * kk);
        for (size_t j = 0; j < n; ++j)
            for (size_t p = 0; p < kk; ++p) b_pack[j * kk + p] = b.data[p * n + j];
        b_cols = b_pack.data();
    }

    Array c({m, n});
    const bool par = use_parallel(exec, m * n * kk);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long i = 0; i < static_cast<long long>(m); ++i) {
            for (size_t j = 0; j < n; ++j) {
                c.data[i * n + j] =
                    static_cast<float>(dot4(a_rows + i * kk, b_cols + j * kk, kk));
            }
        }
    } else {
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < n; ++j) {
                c.data[i * n + j] =
                    static_cast<float>(dot4(a_rows + i * kk, b_cols + j * kk, kk));
            }
        }
    }
    return c;
}

Array ew_add(const Array& a, const Array& b, Exec exec) {
    return map_binary(a, b, exec, "ew_add", [](double x, double y) { return x + y; });
}

Array ew_sub(const Array& a, const Array& b, Exec exec) {
    return map_binary(a, b, exec, "ew_sub", [](double x, double y) { return x - y; });
}

Array ew_mul(const Array& a, const Array& b, Exec exec) {
    return map_binary(a, b, exec, "ew_mul", [](double x, double y) { return x * y; });
}

Array ew_scale(const Array& a, double c, Exec exec) {
    return map_unary(a, exec, [c](double x) { return c * x; });
}

Array ew_silu(const Array& a, Exec exec) {
    return map_unary(a, exec, [](double x) { return x * stable_sigmoid(x); });
}

Array ew_relu(const Array& a, Exec exec) {
    return map_unary(a, exec, [](double x) { return x > 0.0 ? x : 0.0; });
}

Array ew_square(const Array& a, Exec exec) {
    return map_unary(a, exec, [](double x) { return x * x; });
}

Array ew_softplus(const Array& a, Exec exec) {
    return map_unary(a, exec, [](double x) { return stable_softplus(x); });
}

Array ew_sigmoid(const Array& a, Exec exec) {
    return map_unary(a, exec, [](double x) { return stable_sigmoid(x); });
}

Array ew_silu_grad(const Array& x, const Array& g, Exec exec) {
    // d/dx [x*sigmoid(x)] = sigmoid(x) * (1 + x*(1 - sigmoid(x)))
    return map_binary(x, g, exec, "ew_silu_grad", [](double xv, double gv) {
        const double s = stable_sigmoid(xv);
        return gv * s * (1.0 + xv * (1.0 - s));
    });
}

Array ew_relu_grad(const Array& x, const Array& g, Exec exec) {
    return map_binary(x, g, exec, "ew_relu_grad",
                      [](double xv, double gv) { return xv > 0.0 ? gv : 0.0; });
}

Array add_rowvec(const Array& a, const Array& v, Exec exec) {
    require_2d(a, "add_rowvec");
    const size_t m = a.shape[0], n = a.shape[1];
    if (v.numel() != n) {
        throw UsageError("add_rowvec: vector length " + std::to_string(v.numel()) +
                         " does not match columns " + std::to_string(n));
    }
    Array out(a.shape);
    const bool par = use_parallel(exec, m * n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long i = 0; i < static_cast<long long>(m); ++i) {
            for (size_t j = 0; j < n; ++j) {
                out.data[i * n + j] = static_cast<float>(
                    static_cast<double>(a.data[i * n + j]) + static_cast<double>(v.data[j]));
            }
        }
    } else {
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < n; ++j) {
                out.data[i * n + j] = static_cast<float>(
                    static_cast<double>(a.data[i * n + j]) + static_cast<double>(v.data[j]));
            }
        }
    }
    return out;
}

Array colsum(const Array& a, Exec exec) {
    require_2d(a, "colsum");
    const size_t m = a.shape[0], n = a.shape[1];
    Array out({1, n});
    const bool par = use_parallel(exec, m * n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long j = 0; j < static_cast<long long>(n); ++j) {
            double s = 0.0;
            for (size_t i = 0; i < m; ++i) s += a.data[i * n + j];
            out.data[j] = static_cast<float>(s);
        }
    } else {
        for (size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t i = 0; i < m; ++i) s += a.data[i * n + j];
            out.data[j] = static_cast<float>(s);
        }
    }
    return out;
}

Array rowsum(const Array& a, Exec exec) {
    require_2d(a, "rowsum");
    const size_t m = a.shape[0], n = a.shape[1];
    Array out({m, 1});
    const bool par = use_parallel(exec, m * n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long i = 0; i < static_cast<long long>(m); ++i) {
            out.data[i] = static_cast<float>(accum4(a.data.data() + i * n, n));
        }
    } else {
        for (size_t i = 0; i < m; ++i) {
            out.data[i] = static_cast<float>(accum4(a.data.data() + i * n, n));
        }
    }
    return out;
}

double sum_all(const Array& a, Exec exec) {
    const size_t n = a.numel();
    constexpr size_t kBlock = 4096;
    const size_t nblocks = (n + kBlock - 1) / kBlock;
    if (nblocks == 0) return 0.0;
    std::vector<double> partial(nblocks);
    const bool par = use_parallel(exec, n);
    if (par) {
#pragma omp parallel for schedule(static) num_threads(effective_threads())
        for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
            const size_t lo = b * kBlock;
            partial[b] = accum4(a.data.data() + lo, std::min(kBlock, n - lo));
        }
    } else {
        for (size_t b = 0; b < nblocks; ++b) {
            const size_t lo = b * kBlock;
            partial[b] = accum4(a.data.data() + lo, std::min(kBlock, n - lo));
        }
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace gpolab::kernels
