// Small dense matrix kernels backing the convolution layers.
//
// Determinism contract: every output element is accumulated by exactly one
// thread in a fixed k-order, so results are bit-identical for any thread
// count. Keep that property when touching the loops.
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fusenet::detail {

/// C[M x N] += A[M x K] * B[K x N], all row-major.
///
/// 4x32 register tile accumulated across the whole k loop; a generic
/// row-sweep covers the tile remainders.
template <class S>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const S* A, const S* B, S* C) {
    constexpr std::size_t IB = 4;
    constexpr std::size_t JB = 32;
    const std::size_t mfull = M - M % IB;
    const std::size_t nfull = N - N % JB;
    const std::size_t iblocks = mfull / IB;

#pragma omp parallel for schedule(static)
    for (std::size_t ib = 0; ib < iblocks; ++ib) {
        const std::size_t i0 = ib * IB;
        for (std::size_t j0 = 0; j0 < nfull; j0 += JB) {
            S acc[IB][JB] = {};
            for (std::size_t k = 0; k < K; ++k) {
                const S* brow = B + k * N + j0;
                for (std::size_t di = 0; di < IB; ++di) {
                    const S a = A[(i0 + di) * K + k];
                    for (std::size_t l = 0; l < JB; ++l) acc[di][l] += a * brow[l];
                }
            }
            for (std::size_t di = 0; di < IB; ++di) {
                S* crow = C + (i0 + di) * N + j0;
                for (std::size_t l = 0; l < JB; ++l) crow[l] += acc[di][l];
            }
        }
        // column remainder for these rows
        if (nfull < N) {
            for (std::size_t k = 0; k < K; ++k) {
                const S* brow = B + k * N;
                for (std::size_t di = 0; di < IB; ++di) {
                    const S a = A[(i0 + di) * K + k];
                    S* crow = C + (i0 + di) * N;
                    for (std::size_t j = nfull; j < N; ++j) crow[j] += a * brow[j];
                }
            }
        }
    }
    // row remainder, sequential (at most IB-1 rows)
    for (std::size_t i = mfull; i < M; ++i) {
        S* crow = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const S a = A[i * K + k];
            const S* brow = B + k * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

/// C[M x N] += A[M x K] * B^T where B is [N x K] row-major.
///
/// Runs as B * A^T through the tiled kernel; the transposes are linear-time
/// copies and M (conv output channels here) is small, so the temporaries
/// stay modest.
template <class S>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const S* A, const S* B, S* C) {
    std::vector<S> at(K * M);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) at[k * M + i] = A[i * K + k];
    std::vector<S> ct(N * M, S(0));
    gemm_nn(N, K, M, B, at.data(), ct.data());
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t i = 0; i < M; ++i) C[i * N + j] += ct[j * M + i];
}

}  // namespace fusenet::detail
