#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dair/common.hpp"

namespace dair {

// Seeded random stream. All randomness in the library flows through this
// wrapper so the complete state can be captured in a checkpoint and training
// resumes bit-exactly. Value mappings are fixed here rather than delegated to
// std::*_distribution, whose output sequences the standard leaves unspecified.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1) with 53 random bits.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [0, n). Modulo bias is below 2^-53 for any n that fits a file
  // count or pixel coordinate.
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw StructuralError("uniform_int needs a positive bound");
    return static_cast<int64_t>(engine_() % static_cast<uint64_t>(n));
  }

  // The engine state as 64-bit words (mt19937_64: 312 state words plus the
  // read position), exactly what the checkpoint format stores.
  std::vector<uint64_t> state_words() const {
    std::ostringstream os;
    os << engine_;
    std::vector<uint64_t> words;
    std::istringstream is(os.str());
    uint64_t w;
    while (is >> w) words.push_back(w);
    return words;
  }

  void set_state_words(const std::vector<uint64_t>& words) {
    if (words.empty()) throw FormatError("empty RNG state");
    std::ostringstream os;
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) os << ' ';
      os << words[i];
    }
    std::istringstream is(os.str());
    is >> engine_;
    if (is.fail()) throw FormatError("malformed RNG state");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dair
