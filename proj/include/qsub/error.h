#pragma once

#include <stdexcept>
#include <string>

namespace qsub {

// Base for all library failures. exit_code() is what the CLI returns.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const = 0;
};

// Invalid parameters, configurations or preconditions.
class InvalidInput : public Error
{
public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// Divergence, non-convergence or non-finite values.
class NumericFailure : public Error
{
public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// Unreadable, truncated or malformed files.
class FormatError : public Error
{
public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

inline void require(bool cond, std::string const &what)
{
  if (!cond) {
    throw InvalidInput(what);
  }
}

} // namespace qsub
