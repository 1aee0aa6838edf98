#include "gebd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <ostream>

#include <CLI11.hpp>

#include "gebd/evaluator.hpp"
#include "gebd/pipeline.hpp"
#include "gebd/random.hpp"

namespace gebd {

namespace {

void print_report(const EvalReport& report, std::ostream& out) {
    out << "threshold precision recall f1\n";
    char line[128];
    double sum_f1 = 0.0;
    for (const EvalThresholdRow& row : report.thresholds) {
        std::snprintf(line, sizeof line, "%.4f %.4f %.4f %.4f", row.threshold, row.precision,
                      row.recall, row.f1);
        out << line << "\n";
        sum_f1 += row.f1;
    }
    if (!report.thresholds.empty()) {
        std::snprintf(line, sizeof line, "average f1 %.4f",
                      sum_f1 / static_cast<double>(report.thresholds.size()));
        out << line << "\n";
    }
}

} // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"two-stage event boundary pipeline on synthetic video features"};
    app.require_subcommand(1);

    std::string workdir = ".";
    std::string config_path;
    std::uint64_t seed = 0;
    std::string split;
    std::string out_path;
    int count = 10;
    int train_count = 200;
    int test_count = 50;
    std::string pred_path;
    std::string ann_path;
    std::vector<double> thresholds;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--workdir", workdir, "run directory for datasets and artifacts");
        sub->add_option("--config", config_path, "JSON file overriding config defaults");
        sub->add_option("--seed", seed, "override the config seed");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset split");
    add_common(gen);
    gen->add_option("--count", count, "number of videos");
    gen->add_option("--split", split, "split name (default train)");
    gen->add_option("--out", out_path, "dataset directory (default <workdir>/<split>)");

    CLI::App* tl = app.add_subcommand("train-local", "train the confidence model");
    add_common(tl);
    tl->add_option("--split", split, "split to train on (default train)");

    CLI::App* fz = app.add_subcommand("featurize", "write per-video handoff files");
    add_common(fz);
    fz->add_option("--split", split, "split to featurize (default train)");

    CLI::App* td = app.add_subcommand("train-decoder", "train the boundary decoder");
    add_common(td);
    td->add_option("--split", split, "handoff split to train on (default train)");

    CLI::App* in = app.add_subcommand("infer", "decode boundary predictions");
    add_common(in);
    in->add_option("--split", split, "split to decode (default test)");
    in->add_option("--out", out_path, "extra copy of the prediction file");

    CLI::App* ev = app.add_subcommand("eval", "score predictions against annotations");
    add_common(ev);
    ev->add_option("--pred", pred_path, "prediction file (default <workdir>/predictions.json)");
    ev->add_option("--ann", ann_path, "annotation file (default <workdir>/test/annotations.json)");
    ev->add_option("--thresholds", thresholds, "tolerance thresholds (default from config)");
    ev->add_option("--out", out_path, "report file (default <workdir>/report.json)");

    CLI::App* ra = app.add_subcommand("run-all", "gen + both trainings + infer + eval");
    add_common(ra);
    ra->add_option("--train-count", train_count, "training videos to generate");
    ra->add_option("--test-count", test_count, "held-out videos to generate");
    ra->add_option("--out", out_path, "extra copy of the report file");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);

        PipelineConfig cfg;
        if (!config_path.empty()) {
            try {
                cfg = load_config(config_path);
            } catch (const Error&) {
                throw;
            } catch (const std::exception& e) {
                throw Error(std::string("bad config: ") + e.what());
            }
        }
        const CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed") > 0) cfg.seed = seed;
        const auto violations = validate_config(cfg);
        if (!violations.empty()) {
            std::string msg = "invalid config:";
            for (const auto& v : violations) msg += " " + v + ";";
            throw Error(msg);
        }

        const PipelinePaths paths{workdir};

        if (sub == gen) {
            const std::string name = split.empty() ? "train" : split;
            const std::string dir = out_path.empty() ? paths.dataset_dir(name) : out_path;
            const std::uint64_t ds_seed = derive_seed(cfg.seed, "dataset", name == "train" ? 0 : 1);
            const auto anns = generate_dataset(dataset_spec_for(cfg, count, ds_seed, name), dir);
            out << "[gen] wrote " << anns.size() << " videos to " << dir << "\n";
        } else if (sub == tl) {
            const std::string name = split.empty() ? "train" : split;
            train_local(cfg, paths.dataset_dir(name), paths, &out);
            out << "[train-local] checkpoint " << paths.local_checkpoint() << "\n";
        } else if (sub == fz) {
            const std::string name = split.empty() ? "train" : split;
            featurize(cfg, paths.dataset_dir(name), paths, name, &out);
            out << "[featurize] handoff " << paths.handoff_dir(name) << "\n";
        } else if (sub == td) {
            const std::string name = split.empty() ? "train" : split;
            train_decoder(cfg, paths.dataset_dir(name), paths, &out);
            out << "[train-decoder] checkpoint " << paths.decoder_checkpoint() << "\n";
        } else if (sub == in) {
            const std::string name = split.empty() ? "test" : split;
            const PredictionMap preds = infer(cfg, paths.dataset_dir(name), paths, name, &out);
            if (!out_path.empty()) write_predictions(preds, out_path);
            out << "[infer] predictions " << paths.predictions_file() << "\n";
        } else if (sub == ev) {
            const std::string p = pred_path.empty() ? paths.predictions_file() : pred_path;
            const std::string a =
                ann_path.empty() ? paths.dataset_dir("test") + "/annotations.json" : ann_path;
            const auto& thr = thresholds.empty() ? cfg.rel_dis_thresholds : thresholds;
            const EvalReport report =
                evaluate(load_predictions(p), load_annotations(a), thr, &err);
            print_report(report, out);
            write_report(report, out_path.empty() ? paths.report_file() : out_path);
        } else if (sub == ra) {
            const EvalReport report = run_all(cfg, train_count, test_count, paths, &out);
            print_report(report, out);
            if (!out_path.empty()) write_report(report, out_path);
        }
        return 0;
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    } catch (const RunError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(std::vector<std::string> args) {
    return run_cli(std::move(args), std::cout, std::cerr);
}

} // namespace gebd
