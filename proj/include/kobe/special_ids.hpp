#pragma once

// Reserved vocabulary ids, fixed across every vocabulary in the project.

namespace kobe {

constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kBosId = 2;
constexpr int kEosId = 3;
constexpr int kSepId = 4;
constexpr int kNumReservedIds = 5;

}  // namespace kobe
