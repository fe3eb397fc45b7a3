#include "crowdmac/errors.hpp"

namespace crowdmac {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

}  // namespace crowdmac
