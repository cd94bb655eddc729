#pragma once

#include <stdexcept>

namespace redattn {

// Shape disagreement between operands (matmul extents, elementwise mismatch).
class DimensionError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input sequence length violates the fixed length a scaling matrix imposes.
class FixedLengthError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Token id or row index outside its valid range.
class IndexError : public std::out_of_range {
  using std::out_of_range::out_of_range;
};

// API misuse: bad call order, empty inputs, invalid configuration values.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace redattn
