#pragma once

namespace ehrtext::tok {

/// Fixed id layout shared by every tokenizer:
///   0..3      PAD CLS SEP UNK
///   4..11     interval buckets T0..T7
///   12, 13    sign tokens + and -
///   14..113   digit-place tokens DP(place, digit), place in [-3, 6]
///   114..369  raw bytes
///   370..     learned merges
namespace special {
inline constexpr int kPad = 0;
inline constexpr int kCls = 1;
inline constexpr int kSep = 2;
inline constexpr int kUnk = 3;
inline constexpr int kIntervalBase = 4;
inline constexpr int kPlus = 12;
inline constexpr int kMinus = 13;
inline constexpr int kDigitBase = 14;
inline constexpr int kMinPlace = -3;
inline constexpr int kMaxPlace = 6;
inline constexpr int kCount = 114;
inline constexpr int kByteBase = kCount;
inline constexpr int kFirstMerge = kByteBase + 256;

constexpr int interval(int bucket) { return kIntervalBase + bucket; }
constexpr int digit_place(int place, int digit) { return kDigitBase + (place - kMinPlace) * 10 + digit; }
constexpr int byte(unsigned char b) { return kByteBase + b; }
constexpr bool is_special(int id) { return id >= 0 && id < kCount; }
}  // namespace special

}  // namespace ehrtext::tok
