#ifndef FEDMOMENT_COMMON_H_
#define FEDMOMENT_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedmoment {

// Raised when a caller violates an operation's documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when local training produces a non-finite parameter.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void Require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a) {
  return MixSeed(MixSeed(base) ^ MixSeed(a + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a,
                                   std::uint64_t b) {
  return DeriveSeed(DeriveSeed(base, a), b);
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void Update(const void* data, std::size_t size);
  void Update(std::string_view text) { Update(text.data(), text.size()); }
  void Update(double value);
  void Update(std::uint64_t value);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Formats with %.9g; the interchange precision of corpus and distribution
// text files.
std::string FormatReal9(double value);

// Formats with a fixed number of decimals (report CSVs use 6).
std::string FormatFixed(double value, int decimals);

std::string FormatHex64(std::uint64_t value);

}  // namespace fedmoment

#endif  // FEDMOMENT_COMMON_H_
