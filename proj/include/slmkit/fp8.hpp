// Software e4m3 (1-4-3, bias 7) emulation: round-to-nearest-even on the
// mantissa, saturation at ±448, subnormals down to 2^-9, NaN at 0x7F/0xFF.
// No infinities exist in this format.
#pragma once

#include <cmath>
#include <cstdint>

namespace slmkit::fp8 {

inline constexpr double kMaxFinite = 448.0;        // (1 + 6/8) * 2^8
inline constexpr double kMinSubnormal = 0.001953125;  // 2^-9
inline constexpr int kExpBias = 7;
inline constexpr std::uint8_t kNanCode = 0x7F;

struct Fp8Value {
    std::uint8_t byte = 0;
};

inline double decode(Fp8Value v) {
    const bool sign = (v.byte & 0x80) != 0;
    const int exp_bits = (v.byte >> 3) & 0x0F;
    const int man_bits = v.byte & 0x07;
    if (exp_bits == 0x0F && man_bits == 0x07) return std::nan("");
    double mag;
    if (exp_bits == 0) {
        mag = std::ldexp(static_cast<double>(man_bits), -3 - 6);  // m/8 * 2^-6
    } else {
        mag = std::ldexp(1.0 + static_cast<double>(man_bits) / 8.0, exp_bits - kExpBias);
    }
    return sign ? -mag : mag;
}

inline Fp8Value encode(double x) {
    std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
    if (std::isnan(x)) return {static_cast<std::uint8_t>(sign | kNanCode)};
    double a = std::fabs(x);
    if (a == 0.0) return {sign};

    // Quantize to the local grid: ulp = 2^(E-3) in binade E, flat 2^-9 below 2^-6.
    int e = std::ilogb(a);
    if (e < -6) e = -6;
    const double ulp = std::ldexp(1.0, e - 3);
    const double q = a / ulp;
    // round half to even
    double r = std::floor(q);
    const double frac = q - r;
    if (frac > 0.5 || (frac == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
    double v = r * ulp;

    if (v > kMaxFinite) return {static_cast<std::uint8_t>(sign | 0x7E)};  // saturate to 448
    if (v == 0.0) return {sign};

    int e2 = std::ilogb(v);
    if (e2 < -6) {
        const int m = static_cast<int>(std::lround(v / kMinSubnormal));
        return {static_cast<std::uint8_t>(sign | m)};
    }
    const int m = static_cast<int>(std::lround((v / std::ldexp(1.0, e2) - 1.0) * 8.0));
    return {static_cast<std::uint8_t>(sign | ((e2 + kExpBias) << 3) | m)};
}

// Fake-quant convenience: value snapped to the nearest representable e4m3.
inline double quantize_value(double x) { return decode(encode(x)); }

}  // namespace slmkit::fp8
