#include "muse/error.hpp"

namespace muse {

DataError::DataError(const std::string& message) : Error(message) {}

DataError::DataError(const std::string& source, std::size_t line, const std::string& message)
    : Error(source + ":" + std::to_string(line) + ": " + message), m_source(source), m_line(line)
{}

}  // namespace muse
