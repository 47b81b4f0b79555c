#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace hit {

#ifdef HIT_USE_FLOAT32
using real = float;
#else
using real = double;
#endif

// Error taxonomy. Every module throws one of these; the CLI maps them to
// its stable exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error {          // dimension / partition / alignment errors
    using Error::Error;
};
struct ConfigError : Error {         // invalid configuration or config file
    using Error::Error;
};
struct ContractError : Error {       // precondition violations (missing metadata etc.)
    using Error::Error;
};
struct DomainError : Error {         // out-of-range scalar arguments
    using Error::Error;
};
struct TapeError : Error {           // autodiff bookkeeping misuse
    using Error::Error;
};
struct NumericError : Error {        // NaN/Inf where finiteness is required
    using Error::Error;
};
struct IoError : Error {             // file format / filesystem failures
    using Error::Error;
};
struct CheckpointError : Error {     // checkpoint magic/version/count mismatch
    using Error::Error;
};

// SplitMix64; used to derive independent per-step/per-sample seeds from one
// root seed so determinism survives any execution order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace detail {

// Runs body(begin, end) over [0, n) split into contiguous chunks. Each output
// element is produced by exactly one invocation, so results are bit-identical
// for every worker count. Worker count capped by HIT_THREADS.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

int worker_count();

}  // namespace detail

}  // namespace hit
