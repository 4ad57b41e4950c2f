#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace muse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or shapes handed to an operation.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Malformed input data. Carries the source name and 1-based line when known.
class DataError : public Error {
  public:
    explicit DataError(const std::string& message);
    DataError(const std::string& source, std::size_t line, const std::string& message);

    [[nodiscard]] const std::string& source() const noexcept { return m_source; }
    [[nodiscard]] std::size_t line() const noexcept { return m_line; }

  private:
    std::string m_source;
    std::size_t m_line = 0;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace muse
