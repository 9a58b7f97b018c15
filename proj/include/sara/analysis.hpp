// analysis.hpp - routing heatmaps, hyperparameter sweeps, and layer-group
// comparisons over the toy testbed.

#ifndef SARA_ANALYSIS_HPP
#define SARA_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sara/format.hpp"
#include "sara/model.hpp"
#include "sara/train.hpp"

namespace sara {

// ============================================================================
// routing heatmap
// ============================================================================

struct RoutingHeatmap {
    Matrix values; // layers x heads; row i belongs to layer_indices[i]
    std::vector<std::size_t> layer_indices;
    std::string source;
};

// Gate weights of the first forward pass over the probe inputs, averaged over
// the batch and token dimensions; one simplex row per adapted layer.
inline RoutingHeatmap routing_heatmap(Model& model, const std::vector<Example>& probe,
                                      const std::string& kind) {
    if (model.method != Method::mosara) {
        throw std::invalid_argument("routing_heatmap: model has no Mo-SARA adapters");
    }
    std::vector<std::size_t> layers;
    for (const AdapterSlot& s : model.slots) {
        if (s.kind == kind) {
            layers.push_back(s.layer);
        }
    }
    if (layers.empty()) {
        throw std::invalid_argument("routing_heatmap: no Mo-SARA adapters on kind '" + kind +
                                    "'");
    }
    std::sort(layers.begin(), layers.end());

    GateRecorder rec;
    for (const Example& ex : probe) {
        Tape tape;
        GraphBuilder gb(tape, model, false, 0.0, nullptr, &rec);
        gb.logits(ex.input);
    }

    RoutingHeatmap hm;
    hm.layer_indices = layers;
    hm.source = kind;
    hm.values = Matrix(layers.size(), model.attach.heads);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& [sum, count] = rec.acc.at({layers[i], kind});
        for (std::size_t j = 0; j < sum.size(); ++j) {
            hm.values(i, j) = sum[j] / static_cast<double>(count);
        }
    }
    return hm;
}

inline std::string heatmap_csv(const RoutingHeatmap& hm) {
    std::string out = "layer,head,weight\n";
    for (std::size_t i = 0; i < hm.values.rows(); ++i) {
        for (std::size_t j = 0; j < hm.values.cols(); ++j) {
            out += std::to_string(hm.layer_indices[i]) + "," + std::to_string(j) + "," +
                   format_double(hm.values(i, j)) + "\n";
        }
    }
    return out;
}

// P5 grayscale, heads wide by layers tall, 8-bit.
inline std::string heatmap_pgm(const RoutingHeatmap& hm) {
    std::string out = "P5\n" + std::to_string(hm.values.cols()) + " " +
                      std::to_string(hm.values.rows()) + "\n255\n";
    for (std::size_t i = 0; i < hm.values.rows(); ++i) {
        for (std::size_t j = 0; j < hm.values.cols(); ++j) {
            const double w = std::clamp(hm.values(i, j), 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(w * 255.0))));
        }
    }
    return out;
}

// ============================================================================
// sweeps
// ============================================================================

struct Experiment {
    Model base; // pretrained weights; copied afresh for every run
    Dataset train_data;
    Dataset eval_data;
    TrainConfig config;
};

struct SweepRow {
    double setting;
    std::size_t params; // trainable adapter parameters
    double loss;
    double accuracy;
};

struct SweepReport {
    std::string setting_name;
    std::vector<SweepRow> rows;

    std::string csv() const {
        std::string out = "setting,params,loss,accuracy\n";
        for (const SweepRow& r : rows) {
            out += format_double(r.setting) + "," + std::to_string(r.params) + "," +
                   format_double(r.loss) + "," + format_double(r.accuracy) + "\n";
        }
        return out;
    }
};

namespace detail {

inline SweepRow run_once(const Experiment& exp, const TrainConfig& cfg, double setting) {
    Model model = exp.base;
    Rng rng(cfg.seed);
    if (cfg.method == Method::frozen) {
        set_method_frozen(model);
    } else if (cfg.method == Method::full) {
        set_method_full(model);
    } else {
        attach_adapters(model, cfg.method, attach_options(cfg), rng);
    }
    train(model, exp.train_data, cfg);
    const Metrics m = evaluate(model, exp.eval_data.examples.empty() ? exp.train_data
                                                                     : exp.eval_data);
    return {setting, adapter_param_count(model), m.mean_loss, m.accuracy};
}

// Runs are independent; rows land in slot order so parallel execution does
// not change the report.
inline std::vector<SweepRow> run_many(const Experiment& exp,
                                      const std::vector<TrainConfig>& configs,
                                      const std::vector<double>& settings, std::size_t jobs) {
    std::vector<SweepRow> rows(configs.size());
    if (jobs <= 1 || configs.size() <= 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) {
            rows[i] = run_once(exp, configs[i], settings[i]);
        }
        return rows;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, configs.size()); ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < configs.size(); i += jobs) {
                rows[i] = run_once(exp, configs[i], settings[i]);
            }
        });
    }
    for (std::thread& th : pool) {
        th.join();
    }
    return rows;
}

} // namespace detail

inline SweepReport threshold_sweep(const Experiment& exp, std::vector<double> thresholds,
                                   std::size_t jobs = 1) {
    if (exp.config.method != Method::sara && exp.config.method != Method::mosara) {
        throw std::invalid_argument("threshold_sweep: method must be sara or mosara");
    }
    std::sort(thresholds.begin(), thresholds.end());
    std::vector<TrainConfig> configs;
    for (double t : thresholds) {
        TrainConfig c = exp.config;
        c.threshold = t;
        configs.push_back(c);
    }
    SweepReport rep;
    rep.setting_name = "threshold";
    rep.rows = detail::run_many(exp, configs, thresholds, jobs);
    return rep;
}

inline SweepReport heads_sweep(const Experiment& exp, std::vector<std::size_t> heads,
                               std::size_t jobs = 1) {
    if (exp.config.method != Method::mosara) {
        throw std::invalid_argument("heads_sweep: method must be mosara");
    }
    std::sort(heads.begin(), heads.end());
    std::vector<TrainConfig> configs;
    std::vector<double> settings;
    for (std::size_t h : heads) {
        TrainConfig c = exp.config;
        c.heads = h;
        configs.push_back(c);
        settings.push_back(static_cast<double>(h));
    }
    SweepReport rep;
    rep.setting_name = "heads";
    rep.rows = detail::run_many(exp, configs, settings, jobs);
    return rep;
}

inline SweepReport scaling_sweep(const Experiment& exp, std::vector<double> scalings,
                                 std::size_t jobs = 1) {
    if (exp.config.method != Method::lora) {
        throw std::invalid_argument("scaling_sweep: method must be lora");
    }
    std::sort(scalings.begin(), scalings.end());
    std::vector<TrainConfig> configs;
    for (double s : scalings) {
        TrainConfig c = exp.config;
        c.lora_scaling = s;
        configs.push_back(c);
    }
    SweepReport rep;
    rep.setting_name = "scaling";
    rep.rows = detail::run_many(exp, configs, scalings, jobs);
    return rep;
}

// ============================================================================
// layer groups
// ============================================================================

struct LayerGroupReport {
    SweepReport report; // setting = group index
    double accuracy_variance = 0.0;
};

inline LayerGroupReport layer_group_report(const Experiment& exp,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& groups,
                                           std::size_t jobs = 1) {
    if (groups.empty()) {
        throw std::invalid_argument("layer_group_report: no groups");
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].first > groups[i].second) {
            throw std::invalid_argument("layer_group_report: group " + std::to_string(i) +
                                        " has lo > hi");
        }
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            if (groups[i].first <= groups[j].second && groups[j].first <= groups[i].second) {
                throw std::invalid_argument("layer_group_report: groups " + std::to_string(i) +
                                            " and " + std::to_string(j) + " overlap");
            }
        }
    }
    std::vector<TrainConfig> configs;
    std::vector<double> settings;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        TrainConfig c = exp.config;
        c.layer_lo = groups[i].first;
        c.layer_hi = groups[i].second;
        configs.push_back(c);
        settings.push_back(static_cast<double>(i));
    }
    LayerGroupReport rep;
    rep.report.setting_name = "group";
    rep.report.rows = detail::run_many(exp, configs, settings, jobs);

    double mean = 0.0;
    for (const SweepRow& r : rep.report.rows) {
        mean += r.accuracy;
    }
    mean /= static_cast<double>(rep.report.rows.size());
    for (const SweepRow& r : rep.report.rows) {
        rep.accuracy_variance += (r.accuracy - mean) * (r.accuracy - mean);
    }
    rep.accuracy_variance /= static_cast<double>(rep.report.rows.size());
    return rep;
}

} // namespace sara

#endif // SARA_ANALYSIS_HPP
