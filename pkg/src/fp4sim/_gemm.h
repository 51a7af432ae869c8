/* Sequential-k dense GEMM: every o[i][j] = ((0 + a[i][0]*b[0][j]) + a[i][1]*b[1][j]) + ...
 * Compiled with -ffp-contract=off so no FMA changes the rounding. */
#ifndef FP4SIM_GEMM_H
#define FP4SIM_GEMM_H
#include <stddef.h>
#include <string.h>

#define FP4SIM_TR 4
#define FP4SIM_TC 16

static void fp4sim_gemm_plain(const double *a, const double *b, double *o, ptrdiff_t i0,
                              ptrdiff_t i1, ptrdiff_t j0, ptrdiff_t j1, ptrdiff_t kk, ptrdiff_t n)
{
    for (ptrdiff_t i = i0; i < i1; i++)
        for (ptrdiff_t k = 0; k < kk; k++) {
            const double av = a[i * kk + k];
            const double *brow = b + k * n;
            double *orow = o + i * n;
            for (ptrdiff_t j = j0; j < j1; j++)
                orow[j] = orow[j] + av * brow[j];
        }
}

typedef double fp4sim_v8 __attribute__((vector_size(64)));

static inline fp4sim_v8 fp4sim_load8(const double *p)
{
    fp4sim_v8 v;
    memcpy(&v, p, sizeof v);
    return v;
}

/* o must be zero-initialised. Full 4 x 16 tiles keep eight 8-wide accumulators
 * in registers; ragged edges use the plain loop. Both orders are identical per
 * output element, so results do not depend on the tiling. */
static void fp4sim_gemm(const double *restrict a, const double *restrict b, double *restrict o,
                        ptrdiff_t m, ptrdiff_t kk, ptrdiff_t n)
{
    const ptrdiff_t mt = m - m % FP4SIM_TR, nt = n - n % FP4SIM_TC;
    for (ptrdiff_t i = 0; i < mt; i += FP4SIM_TR)
        for (ptrdiff_t j = 0; j < nt; j += FP4SIM_TC) {
            fp4sim_v8 c00 = {0}, c01 = {0}, c10 = {0}, c11 = {0};
            fp4sim_v8 c20 = {0}, c21 = {0}, c30 = {0}, c31 = {0};
            const double *a0 = a + i * kk, *a1 = a0 + kk, *a2 = a1 + kk, *a3 = a2 + kk;
            for (ptrdiff_t k = 0; k < kk; k++) {
                const fp4sim_v8 b0 = fp4sim_load8(b + k * n + j);
                const fp4sim_v8 b1 = fp4sim_load8(b + k * n + j + 8);
                c00 = c00 + a0[k] * b0;
                c01 = c01 + a0[k] * b1;
                c10 = c10 + a1[k] * b0;
                c11 = c11 + a1[k] * b1;
                c20 = c20 + a2[k] * b0;
                c21 = c21 + a2[k] * b1;
                c30 = c30 + a3[k] * b0;
                c31 = c31 + a3[k] * b1;
            }
            double *o0 = o + i * n + j;
            memcpy(o0, &c00, 64);
            memcpy(o0 + 8, &c01, 64);
            memcpy(o0 + n, &c10, 64);
            memcpy(o0 + n + 8, &c11, 64);
            memcpy(o0 + 2 * n, &c20, 64);
            memcpy(o0 + 2 * n + 8, &c21, 64);
            memcpy(o0 + 3 * n, &c30, 64);
            memcpy(o0 + 3 * n + 8, &c31, 64);
        }
    if (nt < n)
        fp4sim_gemm_plain(a, b, o, 0, mt, nt, n, kk, n);
    if (mt < m)
        fp4sim_gemm_plain(a, b, o, mt, m, 0, n, kk, n);
}
#endif
