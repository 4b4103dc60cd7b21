#pragma once

#include <stdexcept>
#include <string>

namespace owal {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a precondition (dimension mismatch, bad argument, bad config).
class usage_error : public error {
 public:
  using error::error;
};

/// Linear algebra or ODE integration broke down.
class numerical_failure : public error {
 public:
  using error::error;
};

class insufficient_samples : public usage_error {
 public:
  using usage_error::usage_error;
};

class degenerate_distribution : public numerical_failure {
 public:
  using numerical_failure::numerical_failure;
};

/// Candidate duplicates an existing noiseless sample, so the rank-one update is singular.
class degenerate_candidate : public numerical_failure {
 public:
  using numerical_failure::numerical_failure;
};

class no_valid_candidate : public numerical_failure {
 public:
  using numerical_failure::numerical_failure;
};

/// ODE state exceeded the divergence threshold.
class divergence_error : public numerical_failure {
 public:
  using numerical_failure::numerical_failure;
};

/// Input file (CSV, manifest, config) is malformed.
class format_error : public usage_error {
 public:
  using usage_error::usage_error;
};

/// A verification check did not hold.
class check_failure : public error {
 public:
  using error::error;
};

}  // namespace owal
