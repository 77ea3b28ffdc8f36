#include "kobe/kernels.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#include "kobe/errors.hpp"

namespace kobe::kern {

bool avx2_available() {
#ifdef KOBE_HAVE_AVX2
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const Kernels* g_active = nullptr;
std::string g_backend;
std::once_flag g_once;

void select() {
    std::string mode = "auto";
    if (const char* env = std::getenv("KOBE_SIMD")) mode = env;

    if (mode == "scalar") {
        g_active = &scalar::kernels;
        g_backend = "scalar";
        return;
    }
#ifdef KOBE_HAVE_AVX2
    if (mode == "avx2") {
        if (!avx2_available()) throw ConfigError("KOBE_SIMD=avx2 requested but CPU lacks AVX2");
        g_active = &avx2::kernels;
        g_backend = "avx2";
        return;
    }
    if (mode == "auto") {
        if (avx2_available()) {
            g_active = &avx2::kernels;
            g_backend = "avx2";
        } else {
            g_active = &scalar::kernels;
            g_backend = "scalar";
        }
        return;
    }
#else
    if (mode == "avx2") throw ConfigError("KOBE_SIMD=avx2 requested but this build has no AVX2 kernels");
    if (mode == "auto") {
        g_active = &scalar::kernels;
        g_backend = "scalar";
        return;
    }
#endif
    throw ConfigError("unknown KOBE_SIMD value '" + mode + "' (expected auto, scalar or avx2)");
}

}  // namespace

const Kernels& active() {
    std::call_once(g_once, select);
    return *g_active;
}

const std::string& backend_name() {
    std::call_once(g_once, select);
    return g_backend;
}

}  // namespace kobe::kern
