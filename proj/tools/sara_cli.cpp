// sara_cli - command-line front door over the library: rank analysis,
// pretraining, adapter fine-tuning, merging, routing heatmaps, sweeps and
// evaluation. Every subcommand is a thin shell over library calls; stdout
// carries machine-readable results, progress goes to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sara/sara.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) {
            comma = csv.size();
        }
        out.push_back(std::stod(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) {
        throw std::invalid_argument("expected a comma-separated list of numbers: '" + csv + "'");
    }
    return out;
}

std::vector<std::string> parse_names(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) {
            comma = csv.size();
        }
        out.push_back(csv.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (out.empty()) {
        throw std::invalid_argument("expected a comma-separated list: '" + csv + "'");
    }
    return out;
}

std::pair<std::size_t, std::size_t> parse_layer_range(const std::string& s) {
    const std::size_t dots = s.find("..");
    if (dots == std::string::npos) {
        const std::size_t v = std::stoul(s);
        return {v, v};
    }
    return {std::stoul(s.substr(0, dots)), std::stoul(s.substr(dots + 2))};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    f << text;
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open config file '" + path + "'");
    }
    return json::parse(f);
}

// ---------------------------------------------------------------------------
// shared option bundles
// ---------------------------------------------------------------------------

struct TaskFlags {
    std::string task = "lang_b";
    std::size_t size = 128;
    std::size_t length = 12;
    std::uint64_t seed = 300;

    void add_to(CLI::App* cmd, const std::string& default_task) {
        task = default_task;
        cmd->add_option("--task", task, "task kind (copy, reverse, modular_add, lang_a, lang_b)")
            ->capture_default_str();
        cmd->add_option("--task-size", size, "number of examples")->capture_default_str();
        cmd->add_option("--task-length", length, "content tokens per example")
            ->capture_default_str();
        cmd->add_option("--task-seed", seed, "dataset sampling seed")->capture_default_str();
    }

    sara::TaskSpec spec(std::size_t vocab) const {
        sara::TaskSpec ts;
        ts.kind = sara::task_kind_from_name(task);
        ts.size = size;
        ts.length = length;
        ts.seed = seed;
        ts.vocab = vocab;
        return ts;
    }
};

struct TrainFlags {
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_steps = nullptr;
    CLI::Option* o_batch = nullptr;
    CLI::Option* o_warmup = nullptr;
    CLI::Option* o_dropout = nullptr;
    CLI::Option* o_wd = nullptr;
    CLI::Option* o_seed = nullptr;
    double lr = 0;
    std::size_t epochs = 0;
    std::uint64_t steps = 0;
    std::size_t batch = 0;
    std::uint64_t warmup = 0;
    double dropout = 0;
    double wd = 0;
    std::uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        o_lr = cmd->add_option("--lr", lr, "peak learning rate");
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
        o_steps = cmd->add_option("--steps", steps, "total steps (overrides epochs)");
        o_batch = cmd->add_option("--batch", batch, "batch size");
        o_warmup = cmd->add_option("--warmup", warmup, "linear warmup steps");
        o_dropout = cmd->add_option("--dropout", dropout, "adapter-branch dropout");
        o_wd = cmd->add_option("--weight-decay", wd, "decoupled weight decay");
        o_seed = cmd->add_option("--seed", seed, "training seed");
    }

    // flags > config file > recipe defaults
    void overlay(sara::TrainConfig& c) const {
        if (o_lr->count()) c.lr = lr;
        if (o_epochs->count()) c.epochs = epochs;
        if (o_steps->count()) c.total_steps = steps;
        if (o_batch->count()) c.batch_size = batch;
        if (o_warmup->count()) c.warmup_steps = warmup;
        if (o_dropout->count()) c.dropout = dropout;
        if (o_wd->count()) c.weight_decay = wd;
        if (o_seed->count()) c.seed = seed;
    }
};

// Loads either a bare model checkpoint (.stc file) or a run directory holding
// config.json plus adapter.stc.
sara::Model load_model_any(const std::string& path) {
    if (fs::is_directory(path)) {
        if (fs::exists(fs::path(path) / "model.stc")) {
            // full/frozen runs store the whole model
            return sara::model_from_checkpoint(
                sara::Checkpoint::read((fs::path(path) / "model.stc").string()));
        }
        const json cfg = read_json_file((fs::path(path) / "config.json").string());
        const std::string base = cfg.at("base").get<std::string>();
        sara::Model m = sara::model_from_checkpoint(sara::Checkpoint::read(base));
        sara::adapters_from_checkpoint(
            m, sara::Checkpoint::read((fs::path(path) / "adapter.stc").string()));
        return m;
    }
    return sara::model_from_checkpoint(sara::Checkpoint::read(path));
}

json metrics_json(const sara::Metrics& m) {
    return {{"accuracy", m.accuracy}, {"mean_loss", m.mean_loss}, {"tokens", m.tokens}};
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_analyze_ranks(const std::string& checkpoint, const std::string& kinds_csv,
                      const std::string& thresholds_csv, const std::string& out) {
    const sara::Checkpoint cp = sara::Checkpoint::read(checkpoint);
    const sara::RankProfile profile =
        sara::rank_profile(cp, parse_names(kinds_csv), parse_doubles(thresholds_csv));
    const std::string csv = sara::rank_profile_csv(profile);
    if (out.empty()) {
        std::cout << csv;
    } else {
        write_text(out, csv);
        std::cerr << "wrote " << profile.entries.size() << " rows to " << out << "\n";
    }
    return 0;
}

struct ModelFlags {
    std::size_t layers = 2;
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t vocab = 16;
    std::size_t max_len = 64;
    std::size_t ffn_mult = 4;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--layers", layers, "transformer layers")->capture_default_str();
        cmd->add_option("--d-model", d_model, "model width")->capture_default_str();
        cmd->add_option("--attn-heads", heads, "attention heads")->capture_default_str();
        cmd->add_option("--vocab", vocab, "vocabulary size")->capture_default_str();
        cmd->add_option("--max-len", max_len, "maximum sequence length")->capture_default_str();
        cmd->add_option("--ffn-mult", ffn_mult, "FFN width multiplier")->capture_default_str();
    }

    sara::TinyTransformerConfig config() const {
        return {layers, d_model, heads, vocab, max_len, ffn_mult};
    }
};

int cmd_pretrain(const ModelFlags& mf, const TaskFlags& tf, const TrainFlags& trf,
                 const std::string& config_path, const std::string& out) {
    sara::TinyTransformerConfig mc = mf.config();
    sara::TrainConfig tc;
    tc.method = sara::Method::full;
    tc.lr = 3e-3;
    tc.epochs = 25;
    tc.warmup_steps = 50;
    tc.dropout = 0.0;
    if (!config_path.empty()) {
        const json j = read_json_file(config_path);
        if (j.contains("model")) {
            mc = sara::detail::config_from_json(j.at("model"));
        }
        if (j.contains("train")) {
            tc = sara::train_config_from_json(j.at("train"));
        }
    }
    trf.overlay(tc);
    tc.method = sara::Method::full;

    sara::Rng rng(tc.seed);
    sara::Model model = sara::build_model(mc, rng);
    const sara::Dataset data = sara::gen_task(tf.spec(mc.vocab));
    std::cerr << "pretraining " << sara::model_param_count(model) << " params on " << tf.task
              << " (" << data.examples.size() << " examples)\n";
    const sara::TrainLog log = sara::train(model, data, tc);
    if (!log.rows.empty()) {
        std::cerr << "final loss " << log.rows.back().loss << " after " << log.rows.size()
                  << " steps\n";
    }
    sara::model_to_checkpoint(model).write(out);
    std::cerr << "wrote " << out << "\n";
    return 0;
}

int cmd_finetune(const std::string& base, const std::string& method_name,
                 const std::string& recipe, const std::string& config_path,
                 const TaskFlags& tf, const TrainFlags& trf, CLI::Option* o_threshold,
                 double threshold, CLI::Option* o_heads, std::size_t heads, CLI::Option* o_rank,
                 std::size_t rank, CLI::Option* o_scaling, double scaling,
                 CLI::Option* o_layers, const std::string& layers_range,
                 const std::string& sara_init, bool no_lambda, const std::string& v_mode,
                 const std::string& out) {
    const sara::Method method = sara::method_from_name(method_name);
    sara::TrainConfig tc = sara::default_config(method, recipe);
    if (!config_path.empty()) {
        tc = sara::train_config_from_json(read_json_file(config_path));
        tc.method = method;
    }
    trf.overlay(tc);
    if (o_threshold->count()) tc.threshold = threshold;
    if (o_heads->count()) tc.heads = heads;
    if (o_rank->count()) tc.lora_rank = rank;
    if (o_scaling->count()) tc.lora_scaling = scaling;
    if (o_layers->count()) {
        const auto [lo, hi] = parse_layer_range(layers_range);
        tc.layer_lo = lo;
        tc.layer_hi = hi;
    }
    tc.sara_init = sara_init == "random"   ? sara::SaraInitMode::random
                   : sara_init == "v_zero" ? sara::SaraInitMode::v_zero
                                           : sara::SaraInitMode::svd_seeded;
    tc.sara_use_lambda = !no_lambda;
    tc.mosara_v_mode = v_mode == "after"   ? sara::VMode::after
                       : v_mode == "front" ? sara::VMode::front
                                           : sara::VMode::off;

    sara::Model model = sara::model_from_checkpoint(sara::Checkpoint::read(base));
    sara::Rng rng(tc.seed);
    if (method == sara::Method::frozen) {
        sara::set_method_frozen(model);
    } else if (method == sara::Method::full) {
        sara::set_method_full(model);
    } else {
        sara::attach_adapters(model, method, sara::attach_options(tc), rng);
    }
    const sara::Dataset data = sara::gen_task(tf.spec(model.config.vocab));
    std::cerr << "fine-tuning " << method_name << " (" << sara::adapter_param_count(model)
              << " adapter params, " << model.slots.size() << " adapters) on " << tf.task << "\n";
    const sara::TrainLog log = sara::train(model, data, tc);

    fs::create_directories(out);
    if (!model.slots.empty()) {
        sara::adapters_to_checkpoint(model).write((fs::path(out) / "adapter.stc").string());
    } else {
        sara::model_to_checkpoint(model).write((fs::path(out) / "model.stc").string());
    }
    write_text((fs::path(out) / "log.csv").string(), log.csv());
    json run_cfg{{"base", base},
                 {"task",
                  {{"task", tf.task},
                   {"size", tf.size},
                   {"length", tf.length},
                   {"seed", tf.seed}}},
                 {"train", sara::train_config_json(tc)}};
    write_text((fs::path(out) / "config.json").string(), run_cfg.dump(2) + "\n");
    if (!log.rows.empty()) {
        std::cerr << "final loss " << log.rows.back().loss << " after " << log.rows.size()
                  << " steps\n";
    }
    std::cerr << "wrote " << out << "\n";
    return 0;
}

int cmd_merge(const std::string& base, const std::string& adapter, const std::string& out) {
    sara::Model model = sara::model_from_checkpoint(sara::Checkpoint::read(base));
    sara::adapters_from_checkpoint(model, sara::Checkpoint::read(adapter));
    sara::merge_model(model).write(out);
    std::cerr << "wrote " << out << "\n";
    return 0;
}

int cmd_routing(const std::string& run_dir, const std::string& probe_csv,
                const std::string& kind, std::uint64_t probe_seed, std::size_t probe_length,
                const std::string& out_csv) {
    sara::Model model = load_model_any(run_dir);
    std::vector<sara::Example> probe;
    for (const std::string& task : parse_names(probe_csv)) {
        sara::TaskSpec ts;
        ts.kind = sara::task_kind_from_name(task);
        ts.seed = probe_seed;
        ts.length = probe_length;
        ts.size = 1;
        ts.vocab = model.config.vocab;
        probe.push_back(sara::gen_example(ts, 0)); // first example of each probe task
    }
    const sara::RoutingHeatmap hm = sara::routing_heatmap(model, probe, kind);
    const std::vector<std::string> outs = parse_names(out_csv);
    write_text(outs[0], sara::heatmap_csv(hm));
    std::cerr << "wrote " << outs[0] << "\n";
    if (outs.size() > 1) {
        write_text(outs[1], sara::heatmap_pgm(hm));
        std::cerr << "wrote " << outs[1] << "\n";
    }
    return 0;
}

int cmd_sweep(const std::string& kind, const std::string& values_csv, const std::string& base,
              const std::string& method_name, const std::string& recipe, const TaskFlags& tf,
              const TrainFlags& trf, std::size_t jobs, const std::string& out) {
    sara::Experiment exp;
    exp.base = sara::model_from_checkpoint(sara::Checkpoint::read(base));

    sara::Method method;
    if (!method_name.empty()) {
        method = sara::method_from_name(method_name);
    } else {
        method = kind == "heads" ? sara::Method::mosara
                 : kind == "scaling" ? sara::Method::lora
                                     : sara::Method::sara;
    }
    exp.config = sara::default_config(method, recipe);
    trf.overlay(exp.config);
    exp.train_data = sara::gen_task(tf.spec(exp.base.config.vocab));

    sara::SweepReport rep;
    const std::vector<double> values = parse_doubles(values_csv);
    if (kind == "threshold") {
        rep = sara::threshold_sweep(exp, values, jobs);
    } else if (kind == "heads") {
        std::vector<std::size_t> heads;
        for (double v : values) {
            heads.push_back(static_cast<std::size_t>(v));
        }
        rep = sara::heads_sweep(exp, heads, jobs);
    } else if (kind == "scaling") {
        rep = sara::scaling_sweep(exp, values, jobs);
    } else {
        throw std::invalid_argument("unknown sweep kind '" + kind +
                                    "' (known: threshold, heads, scaling)");
    }
    const std::string csv = rep.csv();
    if (out.empty()) {
        std::cout << csv;
    } else {
        write_text(out, csv);
        std::cerr << "wrote " << rep.rows.size() << " rows to " << out << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& model_path, const TaskFlags& tf) {
    sara::Model model = load_model_any(model_path);
    const sara::Dataset data = sara::gen_task(tf.spec(model.config.vocab));
    const sara::Metrics m = sara::evaluate(model, data);
    std::cout << metrics_json(m).dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"singular-value based adaptive low-rank adapters: analysis, training and "
                 "evaluation on a toy transformer testbed"};
    app.name("sara_cli");
    app.require_subcommand(1);
    int rc = 0;

    // analyze-ranks ---------------------------------------------------------
    auto* analyze = app.add_subcommand(
        "analyze-ranks", "per-layer k values from the spectra of checkpoint matrices");
    std::string ar_checkpoint, ar_out;
    std::string ar_kinds = "Q,V";
    std::string ar_thresholds = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    analyze->add_option("--checkpoint", ar_checkpoint, "model checkpoint (.stc)")->required();
    analyze->add_option("--kinds", ar_kinds, "matrix kinds, comma separated")
        ->capture_default_str();
    analyze->add_option("--thresholds", ar_thresholds, "proportion thresholds, comma separated")
        ->capture_default_str();
    analyze->add_option("--out", ar_out, "output CSV path (default: stdout)");
    analyze->callback(
        [&]() { rc = cmd_analyze_ranks(ar_checkpoint, ar_kinds, ar_thresholds, ar_out); });

    // pretrain --------------------------------------------------------------
    auto* pretrain = app.add_subcommand("pretrain", "train a toy transformer from scratch");
    ModelFlags pre_mf;
    TaskFlags pre_tf;
    TrainFlags pre_trf;
    std::string pre_config, pre_out;
    pre_mf.add_to(pretrain);
    pre_tf.add_to(pretrain, "lang_a");
    pre_trf.add_to(pretrain);
    pretrain->add_option("--config", pre_config, "JSON config file");
    pretrain->add_option("--out", pre_out, "output checkpoint (.stc)")->required();
    pretrain->callback([&]() { rc = cmd_pretrain(pre_mf, pre_tf, pre_trf, pre_config, pre_out); });

    // finetune ---------------------------------------------------------------
    auto* finetune = app.add_subcommand("finetune", "fine-tune adapters on a frozen base model");
    std::string ft_base, ft_method, ft_out, ft_config;
    std::string ft_recipe = "math-7b";
    std::string ft_layers;
    std::string ft_sara_init = "random";
    std::string ft_v_mode = "after";
    bool ft_no_lambda = false;
    double ft_threshold = 0;
    std::size_t ft_heads = 0, ft_rank = 0;
    double ft_scaling = 0;
    TaskFlags ft_tf;
    TrainFlags ft_trf;
    finetune->add_option("--base", ft_base, "pretrained checkpoint (.stc)")->required();
    finetune->add_option("--method", ft_method, "lora, sara, mosara, full or frozen")->required();
    auto* o_threshold = finetune->add_option("--threshold", ft_threshold,
                                             "proportion threshold for k (sara/mosara)");
    auto* o_heads = finetune->add_option("--heads", ft_heads, "parallel heads (mosara)");
    auto* o_rank = finetune->add_option("--rank", ft_rank, "rank r (lora)");
    auto* o_scaling = finetune->add_option("--scaling", ft_scaling, "scaling lambda (lora)");
    auto* o_layers = finetune->add_option("--layers", ft_layers,
                                          "adapter layer range A..B (inclusive)");
    finetune->add_option("--sara-init", ft_sara_init, "sara init: random, v_zero, svd_seeded")
        ->capture_default_str();
    finetune->add_flag("--no-lambda", ft_no_lambda, "ablation: drop the sara diagonal");
    finetune->add_option("--v-mode", ft_v_mode, "mosara v position: after, front, off")
        ->capture_default_str();
    finetune->add_option("--recipe", ft_recipe, "hyperparameter recipe")->capture_default_str();
    finetune->add_option("--config", ft_config, "JSON config file");
    ft_tf.add_to(finetune, "lang_b");
    ft_trf.add_to(finetune);
    finetune->add_option("--out", ft_out, "run directory")->required();
    finetune->callback([&]() {
        rc = cmd_finetune(ft_base, ft_method, ft_recipe, ft_config, ft_tf, ft_trf, o_threshold,
                          ft_threshold, o_heads, ft_heads, o_rank, ft_rank, o_scaling, ft_scaling,
                          o_layers, ft_layers, ft_sara_init, ft_no_lambda, ft_v_mode, ft_out);
    });

    // merge -------------------------------------------------------------------
    auto* merge = app.add_subcommand("merge", "fold an adapter into the base weights");
    std::string mg_base, mg_adapter, mg_out;
    merge->add_option("--base", mg_base, "pretrained checkpoint (.stc)")->required();
    merge->add_option("--adapter", mg_adapter, "adapter checkpoint (.stc)")->required();
    merge->add_option("--out", mg_out, "merged checkpoint (.stc)")->required();
    merge->callback([&]() { rc = cmd_merge(mg_base, mg_adapter, mg_out); });

    // routing -----------------------------------------------------------------
    auto* routing = app.add_subcommand("routing", "export Mo-SARA gate heatmaps");
    std::string rt_model, rt_out;
    std::string rt_probe = "lang_b";
    std::string rt_kind = "Q";
    std::uint64_t rt_probe_seed = 300;
    std::size_t rt_probe_length = 12;
    routing->add_option("--model", rt_model, "run directory with a Mo-SARA adapter")->required();
    routing->add_option("--probe", rt_probe, "probe task(s), comma separated")
        ->capture_default_str();
    routing->add_option("--kind", rt_kind, "matrix kind carrying the adapters")
        ->capture_default_str();
    routing->add_option("--probe-seed", rt_probe_seed, "probe sampling seed")
        ->capture_default_str();
    routing->add_option("--probe-length", rt_probe_length, "probe example length")
        ->capture_default_str();
    routing->add_option("--out", rt_out, "output paths: heatmap.csv[,heatmap.pgm]")->required();
    routing->callback([&]() {
        rc = cmd_routing(rt_model, rt_probe, rt_kind, rt_probe_seed, rt_probe_length, rt_out);
    });

    // sweep ---------------------------------------------------------------------
    auto* sweep = app.add_subcommand("sweep", "train one run per setting and tabulate results");
    std::string sw_kind, sw_values, sw_base, sw_method, sw_out;
    std::string sw_recipe = "math-7b";
    std::size_t sw_jobs = 1;
    TaskFlags sw_tf;
    TrainFlags sw_trf;
    sweep->add_option("--kind", sw_kind, "threshold, heads or scaling")->required();
    sweep->add_option("--values", sw_values, "settings, comma separated")->required();
    sweep->add_option("--base", sw_base, "pretrained checkpoint (.stc)")->required();
    sweep->add_option("--method", sw_method, "override method (default depends on kind)");
    sweep->add_option("--recipe", sw_recipe, "hyperparameter recipe")->capture_default_str();
    sweep->add_option("--jobs", sw_jobs, "parallel runs")->capture_default_str();
    sw_tf.add_to(sweep, "lang_b");
    sw_trf.add_to(sweep);
    sweep->add_option("--out", sw_out, "output CSV path (default: stdout)");
    sweep->callback([&]() {
        rc = cmd_sweep(sw_kind, sw_values, sw_base, sw_method, sw_recipe, sw_tf, sw_trf, sw_jobs,
                       sw_out);
    });

    // eval ------------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "metrics of a model on a task, JSON to stdout");
    std::string ev_model;
    TaskFlags ev_tf;
    eval->add_option("--model", ev_model, "checkpoint (.stc) or run directory")->required();
    ev_tf.add_to(eval, "lang_b");
    eval->callback([&]() { rc = cmd_eval(ev_model, ev_tf); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}
