#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "penf/rational.hpp"

namespace penf {

struct Diagnostic {
    int line = 0;  // 0 when the problem is not tied to a line
    std::string key;
    std::string reason;
};

struct ScenarioError : EngineError {
    explicit ScenarioError(std::vector<Diagnostic> d);
    std::vector<Diagnostic> diagnostics;
};

std::string format_diagnostics(const std::vector<Diagnostic>& d);

// A validated scenario. Every applicable key is present, defaults included, in canonical text form.
class Scenario {
public:
    bool has(const std::string& section, const std::string& key) const;
    const std::string& text(const std::string& section, const std::string& key) const;
    Rational rational(const std::string& section, const std::string& key) const;
    double real(const std::string& section, const std::string& key) const;
    long integer(const std::string& section, const std::string& key) const;
    std::vector<std::string> list(const std::string& section, const std::string& key) const;
    std::vector<Rational> rationals(const std::string& section, const std::string& key) const;
    std::vector<long> integers(const std::string& section, const std::string& key) const;

    const std::string& name() const { return text("scenario", "name"); }
    bool exact() const { return text("scenario", "mode") == "exact"; }

    // Command-line overrides go through the same validation as file values.
    void set(const std::string& section, const std::string& key, const std::string& value);

    // Reports drop [output] so that artifacts do not depend on where they are written.
    std::string canonical(bool with_output = true) const;

    friend Scenario parse_scenario_text(std::string_view text);

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

Scenario parse_scenario_text(std::string_view text);
Scenario parse_scenario(const std::string& path);

// Time values: a grid index or "inf"; inf maps to steps + 1.
int parse_time(const std::string& text, int steps);

}  // namespace penf
