#include <CLI11.hpp>

#include <iostream>

#include "ecglang/pipeline.hpp"

using ecglang::cfg::PipelineConfig;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string manifest;
    std::string embeddings;
    std::string checkpoint;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "pipeline config JSON");
    cmd->add_option("--out", o.out_dir, "artifact directory (overrides paths.out_dir)");
    cmd->add_option("--manifest", o.manifest, "dataset manifest CSV");
    cmd->add_option("--embeddings", o.embeddings, "EMB1 token-embedding file (FileBacked provider)");
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint prefix");
    cmd->add_option("--seed", o.seed, "random seed (overrides config)");
}

PipelineConfig resolve(const CommonOpts& o) {
    // from_json_string("{}") fills every default, including class
    // descriptions and synth templates.
    PipelineConfig c = o.config_path.empty() ? PipelineConfig::from_json_string("{}")
                                             : PipelineConfig::load(o.config_path);
    if (!o.out_dir.empty()) c.paths.out_dir = o.out_dir;
    if (!o.manifest.empty()) c.paths.manifest = o.manifest;
    if (!o.embeddings.empty()) c.paths.embeddings = o.embeddings;
    if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG-to-report pipeline: preprocessing, training, generation, "
                 "zero-shot detection and evaluation"};
    app.require_subcommand(1);

    CommonOpts synth_o, pre_o, train_o, gen_o, det_o, eval_o;
    std::string generations_csv, scores_csv;

    add_common(app.add_subcommand("synth", "generate the synthetic labeled ECG corpus"), synth_o);
    add_common(app.add_subcommand("preprocess", "filter, detect beats and cache feature vectors"),
               pre_o);
    add_common(app.add_subcommand("train", "fit the encoder + mapper on cached features"), train_o);
    add_common(app.add_subcommand("generate", "greedy-decode reports for the test split"), gen_o);
    add_common(app.add_subcommand("detect", "zero-shot disease scores for the test split"), det_o);
    auto* eval_cmd = app.add_subcommand("evaluate", "compute the metrics report");
    add_common(eval_cmd, eval_o);
    eval_cmd->add_option("--generations", generations_csv, "generations CSV from `generate`");
    eval_cmd->add_option("--scores", scores_csv, "scores CSV from `detect`");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        if (app.got_subcommand("synth")) ecglang::pipeline::cmd_synth(resolve(synth_o));
        if (app.got_subcommand("preprocess")) ecglang::pipeline::cmd_preprocess(resolve(pre_o));
        if (app.got_subcommand("train")) ecglang::pipeline::cmd_train(resolve(train_o));
        if (app.got_subcommand("generate")) ecglang::pipeline::cmd_generate(resolve(gen_o));
        if (app.got_subcommand("detect")) ecglang::pipeline::cmd_detect(resolve(det_o));
        if (app.got_subcommand("evaluate"))
            ecglang::pipeline::cmd_evaluate(resolve(eval_o), generations_csv, scores_csv);
    } catch (const ecglang::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ecglang::NumericalFault& e) {
        std::cerr << "numerical fault: " << e.what() << "\n";
        return 3;
    } catch (const ecglang::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ecglang::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
