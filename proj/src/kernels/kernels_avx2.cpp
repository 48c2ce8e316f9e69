// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime CPUID check in kernels.cpp.

#include "iamp/kernels.hpp"

#if defined(IAMP_HAVE_AVX2)

#include <immintrin.h>

namespace iamp::kernels {

static inline double hadd4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

static inline float hadd8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d c0 = _mm256_setzero_pd();
    __m256d c1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        c0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), c0);
        c1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), c1);
    }
    for (; i + 4 <= n; i += 4) {
        c0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), c0);
    }
    double acc = hadd4(_mm256_add_pd(c0, c1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d c0 = _mm256_setzero_pd();
    __m256d c1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        c0 = _mm256_add_pd(c0, _mm256_loadu_pd(x + i));
        c1 = _mm256_add_pd(c1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) c0 = _mm256_add_pd(c0, _mm256_loadu_pd(x + i));
    double acc = hadd4(_mm256_add_pd(c0, c1));
    for (; i < n; ++i) acc += x[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yy = _mm256_loadu_pd(y + i);
        yy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), yy);
        _mm256_storeu_pd(y + i, yy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double* x, double alpha, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

void gemv_avx2(std::size_t m, std::size_t n, const double* a, const double* x, double* y) {
    for (std::size_t r = 0; r < m; ++r) {
        y[r] = dot_avx2(a + r * n, x, n);
    }
}

void gemv_f32_avx2(std::size_t m, std::size_t n, const float* a, const float* x, float* y) {
    for (std::size_t r = 0; r < m; ++r) {
        const float* row = a + r * n;
        __m256 c0 = _mm256_setzero_ps();
        __m256 c1 = _mm256_setzero_ps();
        std::size_t i = 0;
        for (; i + 16 <= n; i += 16) {
            c0 = _mm256_fmadd_ps(_mm256_loadu_ps(row + i), _mm256_loadu_ps(x + i), c0);
            c1 = _mm256_fmadd_ps(_mm256_loadu_ps(row + i + 8), _mm256_loadu_ps(x + i + 8), c1);
        }
        for (; i + 8 <= n; i += 8) {
            c0 = _mm256_fmadd_ps(_mm256_loadu_ps(row + i), _mm256_loadu_ps(x + i), c0);
        }
        float acc = hadd8(_mm256_add_ps(c0, c1));
        for (; i < n; ++i) acc += row[i] * x[i];
        y[r] = acc;
    }
}

void spmv_csc_avx2(std::size_t ncols, const std::int32_t* colptr, const std::int32_t* rows,
                   const double* vals, const double* x, double* y) {
    // Row indices within a column are unique, so the four scalar scatter adds
    // per vector step never alias.
    for (std::size_t j = 0; j < ncols; ++j) {
        const double xj = x[j];
        if (xj == 0.0) continue;
        const __m256d vx = _mm256_set1_pd(xj);
        std::int32_t k = colptr[j];
        const std::int32_t end = colptr[j + 1];
        for (; k + 4 <= end; k += 4) {
            alignas(32) double prod[4];
            _mm256_store_pd(prod, _mm256_mul_pd(_mm256_loadu_pd(vals + k), vx));
            y[rows[k]] += prod[0];
            y[rows[k + 1]] += prod[1];
            y[rows[k + 2]] += prod[2];
            y[rows[k + 3]] += prod[3];
        }
        for (; k < end; ++k) y[rows[k]] += vals[k] * xj;
    }
}

}  // namespace iamp::kernels

#endif  // IAMP_HAVE_AVX2
