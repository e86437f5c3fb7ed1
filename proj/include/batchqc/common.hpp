#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace batchqc {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, DataError -> 3,
// TrainError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles; just enough for the pipeline.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Runs body(i) for i in [0, n). With workers > 1 the range is split into
/// contiguous blocks, one thread per block. Bodies must not share mutable
/// state; results must not depend on scheduling.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t w =
      workers <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, static_cast<std::size_t>(ptr - buf)};
}

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Level comes from BATCHQC_LOG (debug|info|warn|error|off); default warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("BATCHQC_LOG");
    if (!env) return LogLevel::warn;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "warn") return LogLevel::warn;
    if (v == "error") return LogLevel::error;
    if (v == "off") return LogLevel::off;
    return LogLevel::warn;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  if (level >= log_level() && level != LogLevel::off) {
    std::cerr << "[batchqc:" << names[static_cast<int>(level)] << "] " << msg << "\n";
  }
}

inline void log_warn(const std::string& msg) { log(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::debug, msg); }

}  // namespace batchqc
