/* Elementwise activations over contiguous rows; written in C so the
   compiler can map exp/tanh onto glibc's vector math routines. */
#ifndef FADELAB_ROWS_H
#define FADELAB_ROWS_H
#include <math.h>

#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__) && defined(__GLIBC__) \
    && (__GLIBC__ > 2 || (__GLIBC__ == 2 && __GLIBC_MINOR__ >= 35))
/* glibc only advertises these under __FAST_MATH__, which we leave off. */
__attribute__((simd("notinbranch"))) extern double exp(double);
__attribute__((simd("notinbranch"))) extern double tanh(double);
#endif

static inline void fl_sigmoid_row(const double *restrict a, double *restrict out, int n)
{
    #pragma omp simd
    for (int i = 0; i < n; ++i)
        out[i] = 1.0 / (1.0 + exp(-a[i]));
}

static inline void fl_tanh_row(const double *restrict a, double *restrict out, int n)
{
    #pragma omp simd
    for (int i = 0; i < n; ++i)
        out[i] = tanh(a[i]);
}
#endif
