#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace stbt {

/// A sentence is an ordered list of surface tokens or subword units.
using Sentence = std::vector<std::string>;

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad flags, bad arguments, violated call preconditions. CLI exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// ---- text -------------------------------------------------------------------

bool valid_utf8(std::string_view s);

/// Splits a UTF-8 string into code points, each returned as its own string.
std::vector<std::string> utf8_chars(std::string_view s);

std::u32string to_u32(std::string_view s);

/// Whitespace tokenization (space, tab, CR, LF, FF, VT).
Sentence split_ws(std::string_view s);

std::string join(const Sentence& s, std::string_view sep = " ");

/// True for reserved domain tags: a single token "<...>" of length > 2.
bool is_tag(std::string_view token);

/// The leading tag of a sentence, or an empty view if it has none.
std::string_view leading_tag(const Sentence& s);

/// Drops the leading tag if present.
Sentence strip_tag(const Sentence& s);

/// Shortest round-trip representation of a double ("%.17g").
std::string format_double(double v);

double parse_double(std::string_view s);

/// Sum in ascending order; the result does not depend on the input order.
inline double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

// ---- hashing and seeding ----------------------------------------------------

std::string sha256_hex(std::string_view bytes);

/// Stage-local seed derived from a global seed, a label and an index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// ---- parallelism ------------------------------------------------------------

/// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots by the callee; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (unsigned w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace stbt
