// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace pmq::kernels {

#if defined(PMQ_HAVE_AVX2)
const KernelTable& avx2_kernels() noexcept;
#endif
#if defined(PMQ_HAVE_NEON)
const KernelTable& neon_kernels() noexcept;
#endif

const KernelTable* kernels_for(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar:
            return &scalar_kernels();
        case Isa::Avx2:
#if defined(PMQ_HAVE_AVX2)
            if (__builtin_cpu_supports("avx2")) {
                return &avx2_kernels();
            }
#endif
            return nullptr;
        case Isa::Neon:
#if defined(PMQ_HAVE_NEON)
            return &neon_kernels();
#else
            return nullptr;
#endif
    }
    return nullptr;
}

namespace {

const KernelTable& select() noexcept {
    if (const char* env = std::getenv("PMQ_KERNELS")) {
        const std::string_view want(env);
        for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
            if (want == isa_name(isa)) {
                if (const KernelTable* t = kernels_for(isa)) {
                    return *t;
                }
            }
        }
    }
    for (Isa isa : {Isa::Avx2, Isa::Neon}) {
        if (const KernelTable* t = kernels_for(isa)) {
            return *t;
        }
    }
    return scalar_kernels();
}

}  // namespace

const KernelTable& active() noexcept {
    static const KernelTable& table = select();
    return table;
}

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

}  // namespace pmq::kernels
