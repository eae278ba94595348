#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "random_models.hpp"

using namespace penf;
namespace fs = std::filesystem;

namespace {

const char* kCox = R"([scenario]
name = tiny
[model]
type = cox
steps = coin, coin
survival = 1, 1/2, 1/4
[checks]
run = mrp, l-martingale
)";

std::vector<Diagnostic> diagnostics_of(const std::string& text) {
    try {
        parse_scenario_text(text);
    } catch (const ScenarioError& e) {
        return e.diagnostics;
    }
    return {};
}

bool has_diag(const std::vector<Diagnostic>& d, const std::string& key, const std::string& reason, int line = -1) {
    for (const auto& x : d)
        if (x.key == key && x.reason.find(reason) != std::string::npos && (line < 0 || x.line == line)) return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("defaults are filled in") {
    auto sc = parse_scenario_text(kCox);
    CHECK(sc.name() == "tiny");
    CHECK(sc.exact());
    CHECK(sc.integer("scenario", "cap") == 16384);
    CHECK(sc.integer("scenario", "seed") == 1);
    CHECK(sc.text("model", "drivers") == "walk");
    CHECK(sc.list("output", "formats") == std::vector<std::string>{"json", "csv", "text"});
    CHECK_FALSE(sc.has("model", "tilt"));
    CHECK_FALSE(sc.has("mc", "dt"));
}

TEST_CASE("diagnostics carry the line") {
    auto d = diagnostics_of("[scenario]\nname = x\ncolour = red\n[model]\ntype = cox\nsteps = coin\nsurvival = 1, 1/2\n"
                            "tilt = 0\n[checks]\nrun = mrp\nrun = harness\n");
    CHECK(has_diag(d, "scenario.colour", "unknown key", 3));
    CHECK(has_diag(d, "model.tilt", "does not apply", 8));
    CHECK(has_diag(d, "checks.run", "duplicate key", 11));

    CHECK(has_diag(diagnostics_of("[scenario]\nmode = exact\n[model]\ntype = cox\nsteps = coin\nsurvival = 1, 1/2\n"
                                  "[checks]\nrun = mrp\n"),
                   "scenario.name", "missing required key"));
    CHECK(has_diag(diagnostics_of("name = x\n"), "name", "outside any section", 1));
    CHECK(has_diag(diagnostics_of("[scenario\n"), "[scenario", "malformed section header", 1));
    CHECK(has_diag(diagnostics_of("[scenario]\nname = x\n[model]\ntype = cox\nsteps = coin\nsurvival = 1\n[checks]\nrun = mrp\n"),
                   "model.survival", "steps + 1"));
    CHECK(has_diag(diagnostics_of("[scenario]\nname = x\nmode = mc\n[checks]\nrun = mrp\n"), "checks.run",
                   "not available"));
}

TEST_CASE("f must vanish at zero") {
    auto d = diagnostics_of("[scenario]\nname = x\nmode = mc\n[mc]\nf = affine\nf_scale = 1/2\nf_offset = 1/4\n"
                            "f_bound = 1\nf_derivative_bound = 1\n[checks]\nrun = projection\n");
    CHECK(has_diag(d, "mc.f_offset", "f(0) = 0", 7));
    auto msg = format_diagnostics(d);
    CHECK(msg.find("line 7: mc.f_offset: f must satisfy f(0) = 0") != std::string::npos);
}

TEST_CASE("overrides are validated") {
    auto sc = parse_scenario_text(kCox);
    sc.set("scenario", "seed", "42");
    CHECK(sc.integer("scenario", "seed") == 42);
    CHECK_THROWS_AS(sc.set("scenario", "cap", "zero"), ScenarioError);
    CHECK_THROWS_AS(sc.set("model", "tilt", "1"), ScenarioError);
}

TEST_CASE("golden corpus is byte-stable") {
    const fs::path dir = fs::path(PENF_SOURCE_DIR) / "tests" / "scenarios";
    int count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".scn") continue;
        ++count;
        auto golden = dir / "golden" / (entry.path().stem().string() + ".canon");
        INFO(entry.path().filename().string());
        REQUIRE(fs::exists(golden));
        auto canon = parse_scenario(entry.path().string()).canonical();
        CHECK(canon == slurp(golden));
        CHECK(parse_scenario_text(canon).canonical() == canon);
    }
    CHECK(count == 20);
}

TEST_CASE("exit codes") {
    auto ok = run(parse_scenario_text(kCox), Command::check);
    CHECK(ok.exit_code == 0);
    CHECK(ok.report["passed"] == true);

    auto flip = run(penf::testing::curated_scenario("appendix-flip"), Command::check);
    CHECK(flip.exit_code == 1);
    const auto& chk = flip.report["checks"][0];
    CHECK(chk["passed"] == false);

    auto small = parse_scenario_text(kCox);
    small.set("scenario", "cap", "4");
    auto capped = run(small, Command::check);
    CHECK(capped.exit_code == 2);
    CHECK(capped.report.contains("error"));
}

TEST_CASE("exact reports are reproducible and re-renderable") {
    auto sc = penf::testing::curated_scenario("honest");
    auto a = run(sc, Command::check), b = run(sc, Command::check);
    CHECK(a.report.dump(2) == b.report.dump(2));
    CHECK(a.report["schema"] == kReportSchema);

    auto reparsed = Json::parse(a.report.dump(2));
    auto first = render_artifacts(a.report, {"json", "csv", "text"});
    auto second = render_artifacts(reparsed, {"json", "csv", "text"});
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].name == second[i].name);
        CHECK(first[i].content == second[i].content);
    }
    CHECK(render_summary(reparsed) == render_summary(a.report));
}

TEST_CASE("artifacts are written whole") {
    const fs::path dir = fs::temp_directory_path() / "penf-cli-test";
    fs::remove_all(dir);
    auto out = run(parse_scenario_text(kCox), Command::model);
    auto arts = render_artifacts(out.report, {"json", "text"});
    write_artifacts(dir.string(), arts);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        ++files;
        CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
    }
    CHECK(files == arts.size());
    CHECK(slurp(dir / "report.json") == arts.front().content);
    fs::remove_all(dir);
}

TEST_CASE("Monte Carlo reports do not depend on the thread count") {
    auto sc = penf::testing::curated_scenario("mc-cox-reproduction");
    sc.set("mc", "paths", "500");
    auto one = run(sc, Command::mc, 1), four = run(sc, Command::mc, 4);
    CHECK(one.report.dump(2) == four.report.dump(2));
    CHECK(one.report["manifest"]["rng"].is_string());
}

}  // TEST_SUITE
