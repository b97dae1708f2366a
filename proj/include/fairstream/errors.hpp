#pragma once

#include <stdexcept>
#include <string>

namespace fairstream {

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace fairstream
