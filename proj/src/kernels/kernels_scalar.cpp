#include "iamp/kernels.hpp"

namespace iamp::kernels {

double dot_ref(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_ref(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_ref(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemv_ref(std::size_t m, std::size_t n, const double* a, const double* x, double* y) {
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = a + r * n;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += row[i] * x[i];
        y[r] = acc;
    }
}

void gemv_f32_ref(std::size_t m, std::size_t n, const float* a, const float* x, float* y) {
    for (std::size_t r = 0; r < m; ++r) {
        const float* row = a + r * n;
        float acc = 0.0f;
        for (std::size_t i = 0; i < n; ++i) acc += row[i] * x[i];
        y[r] = acc;
    }
}

void spmv_csc_ref(std::size_t ncols, const std::int32_t* colptr, const std::int32_t* rows,
                  const double* vals, const double* x, double* y) {
    for (std::size_t j = 0; j < ncols; ++j) {
        const double xj = x[j];
        if (xj == 0.0) continue;
        for (std::int32_t k = colptr[j]; k < colptr[j + 1]; ++k) {
            y[rows[k]] += vals[k] * xj;
        }
    }
}

}  // namespace iamp::kernels
