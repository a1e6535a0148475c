#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace corrfair::hashing {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x00000100000001b3ull;

constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

// Finalizer from splitmix64; spreads low-entropy keys over all 64 bits.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Incremental keyed hasher for heterogeneous tuples. Fields are length-framed
// so ("ab","c") and ("a","bc") hash differently.
class Keyed {
  public:
    explicit Keyed(std::uint64_t seed = 0) : state_(mix64(seed ^ kFnvOffset)) {}

    Keyed& add(std::string_view s) {
        add_u64(s.size());
        state_ = fnv1a64(s, state_);
        return *this;
    }
    Keyed& add(std::uint64_t v) {
        add_u64(v);
        return *this;
    }
    Keyed& add(std::int64_t v) { return add(static_cast<std::uint64_t>(v)); }
    Keyed& add(int v) { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
    Keyed& add(double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        return add(bits);
    }

    std::uint64_t digest() const { return mix64(state_); }

    // Uniform draw in [0,1) derived from the digest; 53 mantissa bits.
    double unit() const { return static_cast<double>(digest() >> 11) * 0x1.0p-53; }

    // Uniform draw in [-0.5, 0.5).
    double centered_unit() const { return unit() - 0.5; }

  private:
    void add_u64(std::uint64_t v) {
        char buf[8];
        std::memcpy(buf, &v, sizeof buf);
        state_ = fnv1a64(std::string_view(buf, sizeof buf), state_);
    }
    std::uint64_t state_;
};

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// 128-bit content key as 32 hex chars (two independently seeded passes).
inline std::string content_key(std::string_view data) {
    const std::uint64_t a = mix64(fnv1a64(data));
    const std::uint64_t b = mix64(fnv1a64(data, 0x9ae16a3b2f90404full));
    return to_hex(a) + to_hex(b);
}

}  // namespace corrfair::hashing
