#include "iamp/kernels.hpp"

namespace iamp::kernels {

double (*dot)(const double*, const double*, std::size_t) = dot_ref;
double (*sum)(const double*, std::size_t) = sum_ref;
void (*axpy)(double, const double*, double*, std::size_t) = axpy_ref;
void (*scale)(double*, double, std::size_t) = scale_ref;
void (*gemv)(std::size_t, std::size_t, const double*, const double*, double*) = gemv_ref;
void (*gemv_f32)(std::size_t, std::size_t, const float*, const float*, float*) = gemv_f32_ref;
void (*spmv_csc)(std::size_t, const std::int32_t*, const std::int32_t*,
                 const double*, const double*, double*) = spmv_csc_ref;

namespace {

const char* g_isa = "scalar";

bool cpu_has_avx2() {
#if defined(IAMP_HAVE_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void bind_scalar() {
    dot = dot_ref;
    sum = sum_ref;
    axpy = axpy_ref;
    scale = scale_ref;
    gemv = gemv_ref;
    gemv_f32 = gemv_f32_ref;
    spmv_csc = spmv_csc_ref;
    g_isa = "scalar";
}

void bind_best() {
#if defined(IAMP_HAVE_AVX2)
    if (cpu_has_avx2()) {
        dot = dot_avx2;
        sum = sum_avx2;
        axpy = axpy_avx2;
        scale = scale_avx2;
        gemv = gemv_avx2;
        gemv_f32 = gemv_f32_avx2;
        spmv_csc = spmv_csc_avx2;
        g_isa = "avx2";
        return;
    }
#endif
    bind_scalar();
}

const int g_init = [] {
    bind_best();
    return 0;
}();

}  // namespace

const char* active_isa() { return g_isa; }

void force_scalar(bool on) {
    if (on) {
        bind_scalar();
    } else {
        bind_best();
    }
}

}  // namespace iamp::kernels
