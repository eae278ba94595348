#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "penf/runner.hpp"

namespace {

struct Overrides {
    std::optional<long> seed, paths, cap;
    std::optional<std::string> dt, out, format;
    unsigned threads = 1;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool mc_flags) {
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--cap", o.cap, "atom cap for exact models");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--format", o.format, "comma list of json, csv, text");
    if (mc_flags) {
        cmd->add_option("--paths", o.paths, "Monte Carlo paths");
        cmd->add_option("--dt", o.dt, "time step, e.g. 1/1024");
        cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    }
}

penf::Scenario load(const std::string& path, const Overrides& o) {
    auto sc = penf::parse_scenario(path);
    if (o.seed) sc.set("scenario", "seed", std::to_string(*o.seed));
    if (o.cap) sc.set("scenario", "cap", std::to_string(*o.cap));
    if (o.out) sc.set("output", "dir", *o.out);
    if (o.format) sc.set("output", "formats", *o.format);
    if (o.paths) sc.set("mc", "paths", std::to_string(*o.paths));
    if (o.dt) sc.set("mc", "dt", *o.dt);
    return sc;
}

int execute(const std::string& path, const Overrides& o, penf::Command cmd) {
    auto sc = load(path, o);
    auto outcome = penf::run(sc, cmd, o.threads);
    penf::write_artifacts(sc.text("output", "dir"), penf::render_artifacts(outcome.report, sc.list("output", "formats")));
    std::cout << penf::render_summary(outcome.report);
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact and Monte Carlo checks for progressively enlarged filtrations"};
    app.require_subcommand(1);
    Overrides o;
    std::string scenario, dir;
    std::string formats = "json,csv,text";

    auto* model = app.add_subcommand("model", "build a model and summarize it");
    model->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    add_overrides(model, o, false);
    auto* check = app.add_subcommand("check", "run the checks block of an exact scenario");
    check->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    add_overrides(check, o, false);
    auto* mc = app.add_subcommand("mc", "run Monte Carlo experiments");
    mc->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
    add_overrides(mc, o, true);
    auto* report = app.add_subcommand("report", "re-render artifacts from report.json");
    report->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
    report->add_option("--format", formats, "comma list of csv, text");
    auto* canon = app.add_subcommand("canon", "print the canonical form of a scenario");
    canon->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*model) return execute(scenario, o, penf::Command::model);
        if (*check) return execute(scenario, o, penf::Command::check);
        if (*mc) return execute(scenario, o, penf::Command::mc);
        if (*canon) {
            std::cout << penf::parse_scenario(scenario).canonical();
            return 0;
        }
        std::ifstream in(dir + "/report.json");
        if (!in) throw penf::EngineError("no report.json in " + dir);
        auto rep = penf::Json::parse(in);
        if (rep.value("schema", "") != penf::kReportSchema) throw penf::EngineError("unsupported report schema");
        std::vector<std::string> fmts;
        std::stringstream ss(formats);
        for (std::string f; std::getline(ss, f, ',');)
            if (f != "json") fmts.push_back(f);
        penf::write_artifacts(dir, penf::render_artifacts(rep, fmts));
        std::cout << penf::render_summary(rep);
        return rep["exit_code"].get<int>();
    } catch (const penf::ScenarioError& e) {
        std::cerr << e.what();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
