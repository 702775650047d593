#pragma once

#include <cstddef>

namespace droneear {

// ADC front end: 21 MHz ADCCLK / 15 cycles per conversion.
inline constexpr double kAdcClockHz = 21.0e6;
inline constexpr int kAdcCyclesPerSample = 15;
inline constexpr double kAdcRate = kAdcClockHz / kAdcCyclesPerSample;  // 1.4 Msps
inline constexpr int kAdcBits = 12;
inline constexpr int kAdcCodeMax = (1 << kAdcBits) - 1;

inline constexpr int kDecimation = 64;
inline constexpr double kStreamRate = kAdcRate / kDecimation;  // 21875 Hz
inline constexpr int kStreamRateHz = 21875;
inline constexpr int kEffectiveBits = 18;

inline constexpr std::size_t kFrameLen = 2048;
inline constexpr std::size_t kBins = kFrameLen / 2;  // Nyquist bin dropped
inline constexpr double kBinWidthHz = kStreamRate / static_cast<double>(kFrameLen);

// 200 ms energy windows, five per second.
inline constexpr std::size_t kWindowLen = 4375;
inline constexpr int kWindowsPerSecond = 5;
inline constexpr std::size_t kSecondLen = kWindowLen * kWindowsPerSecond;

inline constexpr double kSoundSpeed = 343.0;
inline constexpr std::size_t kMaxSignatures = 32;

static_assert(kStreamRateHz * kDecimation == 1'400'000);
static_assert(kSecondLen == static_cast<std::size_t>(kStreamRateHz));

}  // namespace droneear
