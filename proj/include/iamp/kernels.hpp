#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops used by the propagation, interaction and training
// code. Each kernel has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant. The exported function pointers are resolved
// once at startup from CPUID; force_scalar() pins them back to the references
// (used by the equivalence tests).
//
// Conventions: gemv computes y = A*x with A row-major (m x n). spmv_csc
// accumulates y += A*x for a column-compressed sparse A; the caller zeroes y.

namespace iamp::kernels {

double dot_ref(const double* a, const double* b, std::size_t n);
double sum_ref(const double* x, std::size_t n);
void axpy_ref(double alpha, const double* x, double* y, std::size_t n);
void scale_ref(double* x, double alpha, std::size_t n);
void gemv_ref(std::size_t m, std::size_t n, const double* a, const double* x, double* y);
void gemv_f32_ref(std::size_t m, std::size_t n, const float* a, const float* x, float* y);
void spmv_csc_ref(std::size_t ncols, const std::int32_t* colptr, const std::int32_t* rows,
                  const double* vals, const double* x, double* y);

#if defined(IAMP_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void scale_avx2(double* x, double alpha, std::size_t n);
void gemv_avx2(std::size_t m, std::size_t n, const double* a, const double* x, double* y);
void gemv_f32_avx2(std::size_t m, std::size_t n, const float* a, const float* x, float* y);
void spmv_csc_avx2(std::size_t ncols, const std::int32_t* colptr, const std::int32_t* rows,
                   const double* vals, const double* x, double* y);
#endif

extern double (*dot)(const double*, const double*, std::size_t);
extern double (*sum)(const double*, std::size_t);
extern void (*axpy)(double, const double*, double*, std::size_t);
extern void (*scale)(double*, double, std::size_t);
extern void (*gemv)(std::size_t, std::size_t, const double*, const double*, double*);
extern void (*gemv_f32)(std::size_t, std::size_t, const float*, const float*, float*);
extern void (*spmv_csc)(std::size_t, const std::int32_t*, const std::int32_t*,
                        const double*, const double*, double*);

// "avx2" or "scalar".
const char* active_isa();

// Pin the dispatched pointers to the scalar references (true) or re-run CPU
// detection (false).
void force_scalar(bool on);

}  // namespace iamp::kernels
