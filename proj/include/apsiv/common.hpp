// Shared error taxonomy and the thread-count / parallel-loop plumbing used by the
// APS engine and the Monte Carlo harness. Everything here is header-only.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace apsiv {

enum class Errc {
  EmptyDataset,
  DimensionMismatch,
  NonpositiveVariance,
  DuplicateCentroids,
  NonpositiveBeds,
  NoNondegenerateRows,
  WeakDesignSingular,
  SingularDesign,
  NoCompliers,
  InsufficientSurrogate,
  ConfigError,
  MissingColumn,
  ParseError,
  NonBinary,
  DomainError,
  TooManyFailures,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonpositiveVariance: return "NonpositiveVariance";
    case Errc::DuplicateCentroids: return "DuplicateCentroids";
    case Errc::NonpositiveBeds: return "NonpositiveBeds";
    case Errc::NoNondegenerateRows: return "NoNondegenerateRows";
    case Errc::WeakDesignSingular: return "WeakDesignSingular";
    case Errc::SingularDesign: return "SingularDesign";
    case Errc::NoCompliers: return "NoCompliers";
    case Errc::InsufficientSurrogate: return "InsufficientSurrogate";
    case Errc::ConfigError: return "ConfigError";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::ParseError: return "ParseError";
    case Errc::NonBinary: return "NonBinary";
    case Errc::DomainError: return "DomainError";
    case Errc::TooManyFailures: return "TooManyFailures";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

// Resolve a requested thread count: 0 means "auto" (hardware concurrency),
// anything else is taken literally. Always at least 1.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Read APS_IV_THREADS from the environment; unset/invalid -> 0 (auto).
inline int threads_from_env() {
  const char* s = std::getenv("APS_IV_THREADS");
  if (s == nullptr || *s == '\0') return 0;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || v < 0) return 0;
  return static_cast<int>(v);
}

// Run fn(begin, end) over [0, n) split into contiguous blocks, one per worker.
// Output must be written to preallocated per-index slots so results are identical
// for any thread count (the schedule-independence contract).
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n < 2) {
    if (n > 0) fn(0, n);
    return;
  }
  int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::int64_t chunk = (n + workers - 1) / workers;
  std::exception_ptr first_error = nullptr;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace apsiv
