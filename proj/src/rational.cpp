#include "penf/rational.hpp"

#include <cctype>

namespace penf {

Rational parse_rational(std::string_view text) {
    std::string s(text);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    if (s.empty()) throw EngineError("empty number");

    auto dot = s.find('.');
    if (dot != std::string::npos) {
        if (s.find('/') != std::string::npos) throw EngineError("bad number: " + s);
        std::string digits = s.substr(0, dot) + s.substr(dot + 1);
        std::size_t scale = s.size() - dot - 1;
        if (digits.empty() || digits == "-" || digits == "+") throw EngineError("bad number: " + s);
        if (digits.front() == '+') digits.erase(digits.begin());
        mpz_class num;
        if (num.set_str(digits, 10) != 0) throw EngineError("bad number: " + s);
        mpz_class den;
        mpz_ui_pow_ui(den.get_mpz_t(), 10, scale);
        Rational q(num, den);
        q.canonicalize();
        return q;
    }
    if (s.front() == '+') s.erase(s.begin());
    Rational q;
    if (q.set_str(s, 10) != 0) throw EngineError("bad number: " + std::string(text));
    if (q.get_den() == 0) throw EngineError("zero denominator: " + std::string(text));
    q.canonicalize();
    return q;
}

std::string to_string(const Rational& q) { return q.get_str(); }

double to_double(const Rational& q) { return q.get_d(); }

}  // namespace penf
