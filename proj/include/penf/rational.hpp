#pragma once

#include <gmpxx.h>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace penf {

using Rational = mpq_class;

// A random variable on a finite space: one value per atom.
using Vec = std::vector<Rational>;

struct EngineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Accepts "3", "-3/4", "0.125". Decimals are read exactly.
Rational parse_rational(std::string_view text);

std::string to_string(const Rational& q);

double to_double(const Rational& q);

}  // namespace penf
