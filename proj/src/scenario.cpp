#include "penf/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace penf {

namespace {

enum class Kind { text, choice, choices, integer, integers, rational, rationals, time, times };

using Resolved = std::map<std::string, std::string>;  // "section.key" -> canonical value

struct KeySpec {
    std::string section;
    std::string key;
    Kind kind;
    std::vector<std::string> allowed;  // for choice kinds
    std::string fallback;              // empty: no default
    std::function<bool(const Resolved&)> applies;
    std::function<bool(const Resolved&)> required;
};

const std::vector<std::string> kSections{"scenario", "model", "checks", "output", "mc"};
const std::vector<std::string> kExactChecks{"mrp",          "drift-eq2",  "drift-eq3", "appendix",
                                            "harness",      "sh-measure", "l-martingale", "representation"};
const std::vector<std::string> kMcChecks{"projection", "replication", "sde-martingale", "cox-reproduction",
                                         "flagged-fraction"};

std::string get(const Resolved& r, const std::string& k) {
    auto it = r.find(k);
    return it == r.end() ? std::string() : it->second;
}

auto always = [](const Resolved&) { return true; };
auto never = [](const Resolved&) { return false; };
auto exact_mode = [](const Resolved& r) { return get(r, "scenario.mode") == "exact"; };
auto mc_mode = [](const Resolved& r) { return get(r, "scenario.mode") == "mc"; };

std::function<bool(const Resolved&)> model_is(std::vector<std::string> types) {
    return [types](const Resolved& r) {
        return exact_mode(r) && std::find(types.begin(), types.end(), get(r, "model.type")) != types.end();
    };
}

std::function<bool(const Resolved&)> f_keys(const std::string& section, std::function<bool(const Resolved&)> base) {
    return [section, base](const Resolved& r) { return base(r) && get(r, section + ".f") != "zero"; };
}

const std::vector<KeySpec>& registry() {
    static const std::vector<KeySpec> specs = [] {
        std::vector<KeySpec> s;
        auto add = [&](std::string sec, std::string key, Kind kind, std::vector<std::string> allowed, std::string fb,
                       std::function<bool(const Resolved&)> applies, std::function<bool(const Resolved&)> required) {
            s.push_back({std::move(sec), std::move(key), kind, std::move(allowed), std::move(fb), std::move(applies),
                         std::move(required)});
        };
        add("scenario", "name", Kind::text, {}, "", always, always);
        add("scenario", "mode", Kind::choice, {"exact", "mc"}, "exact", always, never);
        add("scenario", "seed", Kind::integer, {}, "1", always, never);
        add("scenario", "cap", Kind::integer, {}, "16384", always, never);

        auto natural = model_is({"natural"});
        add("model", "type", Kind::choice, {"cox", "density", "honest", "natural", "kernel"}, "", exact_mode, exact_mode);
        add("model", "steps", Kind::choices, {"quiet", "coin", "tri"}, "", exact_mode, exact_mode);
        add("model", "survival", Kind::rationals, {}, "", model_is({"cox", "natural"}), model_is({"cox", "natural"}));
        add("model", "mu", Kind::rationals, {}, "", model_is({"density"}), model_is({"density"}));
        add("model", "tilt", Kind::rationals, {}, "", model_is({"density"}), model_is({"density"}));
        add("model", "tilt_step", Kind::integer, {}, "", model_is({"density"}), model_is({"density"}));
        add("model", "drivers", Kind::choice, {"walk", "walk-and-square"}, "walk", exact_mode, never);
        add("model", "rule", Kind::choice, {"last-max", "last-zero", "vector"}, "last-max", model_is({"honest"}), never);
        auto vector_rule = [](const Resolved& r) {
            return exact_mode(r) && get(r, "model.type") == "honest" && get(r, "model.rule") == "vector";
        };
        add("model", "tau", Kind::times, {}, "", vector_rule, vector_rule);
        add("model", "n_vol", Kind::rational, {}, "0", natural, never);
        add("model", "y_scale", Kind::rational, {}, "1", natural, never);
        add("model", "f", Kind::choice, {"zero", "linear", "affine"}, "zero", natural, never);
        add("model", "f_scale", Kind::rational, {}, "0", f_keys("model", natural), never);
        add("model", "f_offset", Kind::rational, {}, "0", f_keys("model", natural), never);
        add("model", "f_bound", Kind::rational, {}, "", f_keys("model", natural), f_keys("model", natural));
        add("model", "f_derivative_bound", Kind::rational, {}, "", f_keys("model", natural), f_keys("model", natural));
        add("model", "law", Kind::rationals, {}, "", model_is({"kernel"}), never);
        add("model", "fixed", Kind::time, {}, "", model_is({"kernel"}), never);

        std::vector<std::string> all_checks = kExactChecks;
        all_checks.insert(all_checks.end(), kMcChecks.begin(), kMcChecks.end());
        add("checks", "run", Kind::choices, all_checks, "", always, always);
        add("checks", "mrp_expect", Kind::choice, {"spanning", "gap"}, "spanning", exact_mode, never);
        add("checks", "mutation", Kind::choice, {"none", "drop-tau-generator", "flip-comparison"}, "none", exact_mode,
            never);
        add("checks", "appendix_pairs", Kind::integer, {}, "50", exact_mode, never);
        add("checks", "sh_a", Kind::integer, {}, "1", exact_mode, never);
        add("checks", "sh_n", Kind::integer, {}, "64", exact_mode, never);

        add("output", "dir", Kind::text, {}, "penf-out", always, never);
        add("output", "formats", Kind::choices, {"json", "csv", "text"}, "json, csv, text", always, never);

        add("mc", "dt", Kind::rational, {}, "1/1024", mc_mode, never);
        add("mc", "horizon", Kind::rational, {}, "1", mc_mode, never);
        add("mc", "paths", Kind::integer, {}, "100000", mc_mode, never);
        add("mc", "u_grid", Kind::rationals, {}, "0, 1/4, 1/2, 3/4, 1", mc_mode, never);
        add("mc", "lambda", Kind::rational, {}, "1/2", mc_mode, never);
        add("mc", "lambda_slope", Kind::rational, {}, "0", mc_mode, never);
        add("mc", "n_vol", Kind::rational, {}, "0", mc_mode, never);
        add("mc", "y_vol", Kind::rational, {}, "1", mc_mode, never);
        add("mc", "y_rho", Kind::rational, {}, "1", mc_mode, never);
        add("mc", "f", Kind::choice, {"zero", "linear", "affine"}, "zero", mc_mode, never);
        add("mc", "f_scale", Kind::rational, {}, "0", f_keys("mc", mc_mode), never);
        add("mc", "f_offset", Kind::rational, {}, "0", f_keys("mc", mc_mode), never);
        add("mc", "f_bound", Kind::rational, {}, "", f_keys("mc", mc_mode), f_keys("mc", mc_mode));
        add("mc", "f_derivative_bound", Kind::rational, {}, "", f_keys("mc", mc_mode), f_keys("mc", mc_mode));
        add("mc", "floor", Kind::rational, {}, "1/100000000", mc_mode, never);
        add("mc", "sampler", Kind::choice, {"natural", "cox"}, "natural", mc_mode, never);
        add("mc", "hazard_scale", Kind::rational, {}, "1", mc_mode, never);
        add("mc", "levels", Kind::integers, {}, "3, 2, 1, 0", mc_mode, never);
        add("mc", "claims", Kind::choices, {"constant", "defaultable-bond", "stopped-walk"},
            "defaultable-bond, stopped-walk", mc_mode, never);
        return s;
    }();
    return specs;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(const std::string& v) {
    std::string body = trim(v);
    if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
    std::vector<std::string> out;
    if (trim(body).empty()) return out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
    return out;
}

bool parse_long(const std::string& s, long& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

// Canonical form of one scalar; throws std::invalid_argument with a reason.
std::string canonical_scalar(const KeySpec& spec, Kind kind, const std::string& raw) {
    switch (kind) {
        case Kind::text: {
            if (raw.empty()) throw std::invalid_argument("empty value");
            for (char c : raw)
                if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '/'))
                    throw std::invalid_argument("only letters, digits and - _ . / are allowed");
            return raw;
        }
        case Kind::choice: {
            if (std::find(spec.allowed.begin(), spec.allowed.end(), raw) == spec.allowed.end())
                throw std::invalid_argument("'" + raw + "' is not one of " + join(spec.allowed));
            return raw;
        }
        case Kind::integer: {
            long v;
            if (!parse_long(raw, v)) throw std::invalid_argument("'" + raw + "' is not an integer");
            return std::to_string(v);
        }
        case Kind::rational: {
            try {
                return to_string(parse_rational(raw));
            } catch (const EngineError&) {
                throw std::invalid_argument("'" + raw + "' is not a rational number");
            }
        }
        case Kind::time: {
            if (raw == "inf") return raw;
            long v;
            if (!parse_long(raw, v) || v < 0) throw std::invalid_argument("'" + raw + "' is not a grid index or inf");
            return std::to_string(v);
        }
        default:
            throw std::invalid_argument("internal: list kind as scalar");
    }
}

std::string canonical_value(const KeySpec& spec, const std::string& raw) {
    auto element = [](Kind k) {
        switch (k) {
            case Kind::choices: return Kind::choice;
            case Kind::integers: return Kind::integer;
            case Kind::rationals: return Kind::rational;
            case Kind::times: return Kind::time;
            default: return k;
        }
    };
    Kind el = element(spec.kind);
    if (el == spec.kind) return canonical_scalar(spec, spec.kind, trim(raw));
    std::vector<std::string> items;
    for (const auto& item : split_list(raw)) items.push_back(canonical_scalar(spec, el, item));
    if (items.empty()) throw std::invalid_argument("empty list");
    return join(items);
}

struct Provided {
    std::string value;
    int line;
};

// Cross-key rules that the per-key types cannot express.
void cross_check(const Resolved& r, const std::map<std::string, Provided>& provided, std::vector<Diagnostic>& diags) {
    auto line_of = [&](const std::string& k) {
        auto it = provided.find(k);
        return it == provided.end() ? 0 : it->second.line;
    };
    auto count = [&](const std::string& k) { return static_cast<long>(split_list(get(r, k)).size()); };
    if (get(r, "scenario.mode") == "exact") {
        long steps = count("model.steps");
        std::string type = get(r, "model.type");
        if ((type == "cox" || type == "natural") && r.count("model.survival") && count("model.survival") != steps + 1)
            diags.push_back({line_of("model.survival"), "model.survival", "needs steps + 1 entries"});
        if (type == "density") {
            for (const char* k : {"model.mu", "model.tilt"})
                if (r.count(k) && count(k) != steps + 2) diags.push_back({line_of(k), k, "needs steps + 2 entries"});
            long ts = 0;
            if (r.count("model.tilt_step") && (!parse_long(get(r, "model.tilt_step"), ts) || ts < 1 || ts > steps))
                diags.push_back({line_of("model.tilt_step"), "model.tilt_step", "must name a step in 1..steps"});
        }
        if (type == "kernel") {
            bool law = r.count("model.law") > 0, fixed = r.count("model.fixed") > 0;
            if (law == fixed) diags.push_back({line_of("model.type"), "model.law", "give exactly one of law or fixed"});
            if (law && count("model.law") != steps + 2)
                diags.push_back({line_of("model.law"), "model.law", "needs steps + 2 entries"});
        }
    }
    for (const std::string sec : {"model", "mc"}) {
        if (get(r, sec + ".f") == "affine" && get(r, sec + ".f_offset") != "0")
            diags.push_back({line_of(sec + ".f_offset"), sec + ".f_offset", "f must satisfy f(0) = 0"});
    }
    const auto& allowed = get(r, "scenario.mode") == "exact" ? kExactChecks : kMcChecks;
    for (const auto& c : split_list(get(r, "checks.run")))
        if (std::find(allowed.begin(), allowed.end(), c) == allowed.end())
            diags.push_back({line_of("checks.run"), "checks.run", "check '" + c + "' is not available in this mode"});
    long cap = 0;
    if (parse_long(get(r, "scenario.cap"), cap) && cap < 1)
        diags.push_back({line_of("scenario.cap"), "scenario.cap", "must be positive"});
}

Resolved resolve(const std::map<std::string, Provided>& provided, std::vector<Diagnostic>& diags) {
    Resolved r;
    std::set<std::string> known;
    for (const auto& spec : registry()) {
        std::string full = spec.section + "." + spec.key;
        known.insert(full);
        auto it = provided.find(full);
        bool applies = spec.applies(r);
        if (it != provided.end()) {
            if (!applies) {
                diags.push_back({it->second.line, full, "does not apply to this scenario"});
                continue;
            }
            try {
                r[full] = canonical_value(spec, it->second.value);
            } catch (const std::invalid_argument& e) {
                diags.push_back({it->second.line, full, e.what()});
                if (!spec.fallback.empty()) r[full] = spec.fallback;
            }
        } else if (applies) {
            if (spec.required(r))
                diags.push_back({0, full, "missing required key"});
            else if (!spec.fallback.empty())
                r[full] = spec.fallback;
        }
    }
    for (const auto& [k, p] : provided)
        if (!known.count(k)) diags.push_back({p.line, k, "unknown key"});
    if (diags.empty()) cross_check(r, provided, diags);
    return r;
}

}  // namespace

ScenarioError::ScenarioError(std::vector<Diagnostic> d)
    : EngineError(format_diagnostics(d)), diagnostics(std::move(d)) {}

std::string format_diagnostics(const std::vector<Diagnostic>& d) {
    std::string out;
    for (const auto& x : d)
        out += (x.line ? "line " + std::to_string(x.line) : std::string("scenario")) + ": " + x.key + ": " + x.reason +
               "\n";
    return out;
}

bool Scenario::has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key);
}

const std::string& Scenario::text(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s == values_.end() || !s->second.count(key)) throw EngineError("scenario has no " + section + "." + key);
    return s->second.at(key);
}

Rational Scenario::rational(const std::string& section, const std::string& key) const {
    return parse_rational(text(section, key));
}

double Scenario::real(const std::string& section, const std::string& key) const {
    return to_double(rational(section, key));
}

long Scenario::integer(const std::string& section, const std::string& key) const {
    long v = 0;
    parse_long(text(section, key), v);
    return v;
}

std::vector<std::string> Scenario::list(const std::string& section, const std::string& key) const {
    return split_list(text(section, key));
}

std::vector<Rational> Scenario::rationals(const std::string& section, const std::string& key) const {
    std::vector<Rational> out;
    for (const auto& s : list(section, key)) out.push_back(parse_rational(s));
    return out;
}

std::vector<long> Scenario::integers(const std::string& section, const std::string& key) const {
    std::vector<long> out;
    for (const auto& s : list(section, key)) {
        long v = 0;
        parse_long(s, v);
        out.push_back(v);
    }
    return out;
}

void Scenario::set(const std::string& section, const std::string& key, const std::string& value) {
    std::map<std::string, Provided> provided;
    for (const auto& [sec, keys] : values_)
        for (const auto& [k, v] : keys) provided[sec + "." + k] = {v, 0};
    provided[section + "." + key] = {value, 0};
    // Defaults that stop applying are dropped rather than reported.
    std::vector<Diagnostic> diags;
    Resolved r = resolve(provided, diags);
    diags.erase(std::remove_if(diags.begin(), diags.end(),
                               [&](const Diagnostic& d) {
                                   return d.reason == "does not apply to this scenario" &&
                                          d.key != section + "." + key;
                               }),
                diags.end());
    if (!diags.empty()) throw ScenarioError(diags);
    values_.clear();
    for (const auto& [k, v] : r) {
        auto dot = k.find('.');
        values_[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
}

std::string Scenario::canonical(bool with_output) const {
    std::string out;
    for (const auto& sec : kSections) {
        if (!with_output && sec == "output") continue;
        std::string block;
        for (const auto& spec : registry())
            if (spec.section == sec && has(sec, spec.key)) block += spec.key + " = " + text(sec, spec.key) + "\n";
        if (block.empty()) continue;
        if (!out.empty()) out += "\n";
        out += "[" + sec + "]\n" + block;
    }
    return out;
}

Scenario parse_scenario_text(std::string_view text) {
    std::map<std::string, Provided> provided;
    std::vector<Diagnostic> diags;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        auto hash = raw.find('#');
        std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') {
                diags.push_back({line, body, "malformed section header"});
                continue;
            }
            section = trim(body.substr(1, body.size() - 2));
            if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
                diags.push_back({line, section, "unknown section"});
            continue;
        }
        auto eq = body.find('=');
        if (eq == std::string::npos) {
            diags.push_back({line, body, "expected key = value"});
            continue;
        }
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (section.empty()) {
            diags.push_back({line, key, "key outside any section"});
            continue;
        }
        std::string full = section + "." + key;
        if (provided.count(full)) {
            diags.push_back({line, full, "duplicate key"});
            continue;
        }
        provided[full] = {value, line};
    }
    // Keep going after syntax errors so one pass reports everything.
    Resolved r = resolve(provided, diags);
    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
    if (!diags.empty()) throw ScenarioError(diags);
    Scenario s;
    for (const auto& [k, v] : r) {
        auto dot = k.find('.');
        s.values_[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
    return s;
}

Scenario parse_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError({{0, path, "cannot open scenario file"}});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

int parse_time(const std::string& text, int steps) {
    if (text == "inf") return steps + 1;
    long v = 0;
    if (!parse_long(text, v) || v < 0 || v > steps + 1) throw EngineError("time '" + text + "' is outside the grid");
    return static_cast<int>(v);
}

}  // namespace penf
