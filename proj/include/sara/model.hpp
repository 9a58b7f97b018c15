// model.hpp - a deterministic tiny pre-norm transformer decoder with adapters
// attachable to the Q and V projections of every layer.
//
// All tensors live in a named ParamStore; the tape forward reads them through
// cached leaves, so training, evaluation and the routing hooks share one
// graph builder.

#ifndef SARA_MODEL_HPP
#define SARA_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sara/adapters.hpp"
#include "sara/autograd.hpp"
#include "sara/checkpoint.hpp"
#include "sara/matrix.hpp"
#include "sara/optim.hpp"
#include "sara/rng.hpp"
#include "sara/tasks.hpp"

namespace sara {

enum class Method { lora, sara, mosara, full, frozen };

inline const char* method_name(Method m) {
    switch (m) {
    case Method::lora: return "lora";
    case Method::sara: return "sara";
    case Method::mosara: return "mosara";
    case Method::full: return "full";
    case Method::frozen: return "frozen";
    }
    return "?";
}

inline Method method_from_name(const std::string& name) {
    if (name == "lora") return Method::lora;
    if (name == "sara") return Method::sara;
    if (name == "mosara") return Method::mosara;
    if (name == "full") return Method::full;
    if (name == "frozen") return Method::frozen;
    throw std::invalid_argument("unknown method '" + name +
                                "' (known: lora, sara, mosara, full, frozen)");
}

struct TinyTransformerConfig {
    std::size_t layers = 2;
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t vocab = 16;
    std::size_t max_len = 64;
    std::size_t ffn_mult = 4;
};

inline void validate(const TinyTransformerConfig& c) {
    if (c.layers < 1 || c.d_model < 1 || c.heads < 1 || c.vocab < 2 || c.max_len < 2 ||
        c.ffn_mult < 1) {
        throw std::invalid_argument("model config: all dimensions must be positive");
    }
    if (c.d_model % c.heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(c.d_model) +
                                    " not divisible by heads " + std::to_string(c.heads));
    }
}

// Adapter attachment options; only the fields for the chosen method matter.
struct AttachOptions {
    double threshold = 0.5;
    std::size_t heads = 5;
    VMode v_mode = VMode::after;
    SaraInitMode sara_init = SaraInitMode::random;
    bool sara_use_lambda = true;
    std::size_t lora_rank = 10;
    double lora_scaling = 2.0;
    std::size_t layer_lo = 0;                  // inclusive adapter layer range
    std::size_t layer_hi = SIZE_MAX;           // inclusive
    std::vector<std::string> kinds = {"Q", "V"};
};

struct AdapterSlot {
    std::size_t layer;
    std::string kind;
    std::size_t k = 0; // rank in use (k for sara/mosara, r for lora)
};

struct Model {
    TinyTransformerConfig config;
    ParamStore params;
    Method method = Method::full;
    AttachOptions attach;
    std::vector<AdapterSlot> slots; // empty unless method is an adapter method
};

// ============================================================================
// construction
// ============================================================================

namespace detail {

inline void put_param(Model& m, const std::string& name, Matrix value, bool trainable) {
    m.params.emplace(name, Param(std::move(value), trainable));
}

} // namespace detail

inline std::string layer_tensor(std::size_t layer, const std::string& field) {
    return "layer." + std::to_string(layer) + "." + field;
}

inline std::string adapter_tensor_prefix(std::size_t layer, const std::string& kind) {
    return "adapter." + std::to_string(layer) + "." + kind;
}

inline Model build_model(const TinyTransformerConfig& config, Rng& rng) {
    validate(config);
    Model m;
    m.config = config;
    const std::size_t d = config.d_model;
    const std::size_t f = config.ffn_mult * d;

    auto init = [&](const std::string& name, std::size_t rows, std::size_t cols,
                    std::size_t fan_in) {
        Rng child = rng.child(std::string("init.") + name);
        detail::put_param(m, name, kaiming_uniform(child, rows, cols, fan_in), true);
    };

    init("embed.tok", config.vocab, d, d);
    init("embed.pos", config.max_len, d, d);
    for (std::size_t i = 0; i < config.layers; ++i) {
        init(layer_tensor(i, "Q"), d, d, d);
        init(layer_tensor(i, "K"), d, d, d);
        init(layer_tensor(i, "V"), d, d, d);
        init(layer_tensor(i, "O"), d, d, d);
        init(layer_tensor(i, "W1"), d, f, d);
        init(layer_tensor(i, "W2"), f, d, f);
        detail::put_param(m, layer_tensor(i, "ln1"), Matrix(1, d, 1.0), true);
        detail::put_param(m, layer_tensor(i, "ln2"), Matrix(1, d, 1.0), true);
    }
    detail::put_param(m, "final_ln", Matrix(1, d, 1.0), true);
    init("unembed", d, config.vocab, d);
    return m;
}

inline std::size_t model_param_count(const Model& m) {
    std::size_t n = 0;
    for (const auto& [name, p] : m.params) {
        if (name.rfind("adapter.", 0) == 0) {
            continue;
        }
        n += p.value.size();
    }
    return n;
}

inline std::size_t trainable_param_count(const Model& m) {
    std::size_t n = 0;
    for (const auto& [name, p] : m.params) {
        if (p.trainable) {
            n += p.value.size();
        }
    }
    return n;
}

// ============================================================================
// adapter attachment
// ============================================================================

namespace detail {

inline Matrix row_matrix(const std::vector<double>& v) {
    return Matrix(1, v.size(), v);
}

} // namespace detail

inline void set_method_frozen(Model& m) {
    m.method = Method::frozen;
    m.slots.clear();
    for (auto& [name, p] : m.params) {
        p.trainable = false;
    }
}

inline void set_method_full(Model& m) {
    m.method = Method::full;
    m.slots.clear();
    for (auto& [name, p] : m.params) {
        p.trainable = true;
    }
}

// One adapter per (layer in range, kind); base weights frozen. Adapter
// tensors join the param store under `adapter.{layer}.{kind}.{field}`.
inline void attach_adapters(Model& m, Method method, const AttachOptions& opts, Rng& rng) {
    if (method != Method::lora && method != Method::sara && method != Method::mosara) {
        throw std::invalid_argument("attach_adapters: method must be lora, sara or mosara");
    }
    m.method = method;
    m.attach = opts;
    m.slots.clear();
    for (auto& [name, p] : m.params) {
        p.trainable = false;
    }

    const std::size_t hi = std::min(opts.layer_hi, m.config.layers - 1);
    for (std::size_t layer = opts.layer_lo; layer <= hi && layer < m.config.layers; ++layer) {
        for (const std::string& kind : opts.kinds) {
            const std::string weight_name = layer_tensor(layer, kind);
            auto it = m.params.find(weight_name);
            if (it == m.params.end()) {
                throw std::out_of_range("attach_adapters: unknown matrix '" + weight_name + "'");
            }
            const Matrix& w = it->second.value;
            const std::string prefix = adapter_tensor_prefix(layer, kind);
            Rng child = rng.child("adapter." + std::to_string(layer) + "." + kind);
            AdapterSlot slot{layer, kind, 0};

            switch (method) {
            case Method::lora: {
                LoraAdapter ad = lora_init(child, w.rows(), w.cols(), opts.lora_rank,
                                           opts.lora_scaling);
                slot.k = ad.rank;
                detail::put_param(m, prefix + ".a", ad.a, true);
                detail::put_param(m, prefix + ".b", ad.b, true);
                break;
            }
            case Method::sara: {
                SaraAdapter ad = sara_init(child, w, opts.threshold, opts.sara_init);
                ad.use_lambda = opts.sara_use_lambda;
                slot.k = ad.k;
                detail::put_param(m, prefix + ".u", ad.u, true);
                detail::put_param(m, prefix + ".lambda", detail::row_matrix(ad.lambda),
                                  opts.sara_use_lambda);
                detail::put_param(m, prefix + ".vt", ad.vt, true);
                break;
            }
            case Method::mosara: {
                MoSaraAdapter ad = mosara_init(child, w, opts.threshold, opts.heads, opts.v_mode);
                slot.k = ad.k();
                detail::put_param(m, prefix + ".u_frozen", ad.u_frozen, false);
                detail::put_param(m, prefix + ".vt_frozen", ad.vt_frozen, false);
                for (std::size_t h = 0; h < ad.heads; ++h) {
                    detail::put_param(m, prefix + ".lambda" + std::to_string(h),
                                      detail::row_matrix(ad.lambdas[h]), true);
                }
                detail::put_param(m, prefix + ".wg1", ad.wg1, true);
                detail::put_param(m, prefix + ".wg2", ad.wg2, true);
                if (opts.v_mode != VMode::off) {
                    detail::put_param(m, prefix + ".v", detail::row_matrix(ad.v), true);
                }
                break;
            }
            default:
                break;
            }
            m.slots.push_back(slot);
        }
    }
}

inline const AdapterSlot* find_slot(const Model& m, std::size_t layer, const std::string& kind) {
    for (const AdapterSlot& s : m.slots) {
        if (s.layer == layer && s.kind == kind) {
            return &s;
        }
    }
    return nullptr;
}

// Typed views over the stored adapter tensors, for merge and analysis paths.
inline LoraAdapter slot_lora(const Model& m, const AdapterSlot& slot) {
    const std::string p = adapter_tensor_prefix(slot.layer, slot.kind);
    LoraAdapter ad;
    ad.a = m.params.at(p + ".a").value;
    ad.b = m.params.at(p + ".b").value;
    ad.scaling = m.attach.lora_scaling;
    ad.rank = ad.a.cols();
    return ad;
}

inline SaraAdapter slot_sara(const Model& m, const AdapterSlot& slot) {
    const std::string p = adapter_tensor_prefix(slot.layer, slot.kind);
    SaraAdapter ad;
    ad.u = m.params.at(p + ".u").value;
    ad.lambda = m.params.at(p + ".lambda").value.data();
    ad.vt = m.params.at(p + ".vt").value;
    ad.k = ad.lambda.size();
    ad.init_mode = m.attach.sara_init;
    ad.use_lambda = m.attach.sara_use_lambda;
    return ad;
}

inline MoSaraAdapter slot_mosara(const Model& m, const AdapterSlot& slot) {
    const std::string p = adapter_tensor_prefix(slot.layer, slot.kind);
    MoSaraAdapter ad;
    ad.u_frozen = m.params.at(p + ".u_frozen").value;
    ad.vt_frozen = m.params.at(p + ".vt_frozen").value;
    ad.wg1 = m.params.at(p + ".wg1").value;
    ad.wg2 = m.params.at(p + ".wg2").value;
    ad.heads = ad.wg2.cols();
    for (std::size_t h = 0; h < ad.heads; ++h) {
        ad.lambdas.push_back(m.params.at(p + ".lambda" + std::to_string(h)).value.data());
    }
    ad.v_mode = m.attach.v_mode;
    if (ad.v_mode != VMode::off) {
        ad.v = m.params.at(p + ".v").value.data();
    }
    return ad;
}

inline std::size_t adapter_param_count(const Model& m) {
    std::size_t n = 0;
    for (const AdapterSlot& slot : m.slots) {
        switch (m.method) {
        case Method::lora: n += param_count(slot_lora(m, slot)); break;
        case Method::sara: n += param_count(slot_sara(m, slot)); break;
        case Method::mosara: n += param_count(slot_mosara(m, slot)); break;
        default: break;
        }
    }
    return n;
}

// ============================================================================
// forward graph
// ============================================================================

// Collects gate matrices during Mo-SARA forwards: per (layer, kind) the sum
// of gate rows over all tokens seen, plus the token count.
struct GateRecorder {
    std::map<std::pair<std::size_t, std::string>, std::pair<std::vector<double>, std::size_t>> acc;

    void add(std::size_t layer, const std::string& kind, const Matrix& gate) {
        auto& [sum, count] = acc[{layer, kind}];
        sum.resize(gate.cols(), 0.0);
        for (std::size_t i = 0; i < gate.rows(); ++i) {
            for (std::size_t j = 0; j < gate.cols(); ++j) {
                sum[j] += gate(i, j);
            }
        }
        count += gate.rows();
    }
};

class GraphBuilder {
public:
    GraphBuilder(Tape& tape, Model& model, bool training = false, double dropout = 0.0,
                 Rng* dropout_rng = nullptr, GateRecorder* gates = nullptr)
        : tape_(tape),
          model_(model),
          training_(training),
          dropout_(dropout),
          dropout_rng_(dropout_rng),
          gates_(gates) {
        if (training_ && dropout_ > 0.0 && dropout_rng_ == nullptr) {
            throw std::invalid_argument("GraphBuilder: dropout requires an rng");
        }
    }

    // leaf ids for every param touched so far, keyed by name
    const std::map<std::string, int>& leaves() const { return leaves_; }

    int logits(const std::vector<int>& tokens) {
        const std::size_t l = tokens.size();
        if (l == 0) {
            throw std::invalid_argument("forward: empty token sequence");
        }
        if (l > model_.config.max_len) {
            throw std::invalid_argument("forward: sequence length " + std::to_string(l) +
                                        " exceeds max_len " +
                                        std::to_string(model_.config.max_len));
        }
        std::vector<std::size_t> tok_idx(l), pos_idx(l);
        for (std::size_t i = 0; i < l; ++i) {
            if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= model_.config.vocab) {
                throw std::out_of_range("forward: token " + std::to_string(tokens[i]) +
                                        " outside vocab " + std::to_string(model_.config.vocab));
            }
            tok_idx[i] = static_cast<std::size_t>(tokens[i]);
            pos_idx[i] = i;
        }

        int x = tape_.add(tape_.gather_rows(param("embed.tok"), tok_idx),
                          tape_.gather_rows(param("embed.pos"), pos_idx));

        const std::size_t nh = model_.config.heads;
        const std::size_t dh = model_.config.d_model / nh;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        const int mask = causal_mask(l);

        for (std::size_t layer = 0; layer < model_.config.layers; ++layer) {
            const int xn = tape_.rms_norm(x, param(layer_tensor(layer, "ln1")));
            const int q = projected(xn, layer, "Q");
            const int k = projected(xn, layer, "K");
            const int v = projected(xn, layer, "V");

            std::vector<int> head_outs;
            head_outs.reserve(nh);
            for (std::size_t h = 0; h < nh; ++h) {
                const int qh = tape_.slice_cols(q, h * dh, (h + 1) * dh);
                const int kh = tape_.slice_cols(k, h * dh, (h + 1) * dh);
                const int vh = tape_.slice_cols(v, h * dh, (h + 1) * dh);
                int scores = tape_.scale(tape_.matmul(qh, tape_.transpose(kh)), inv_sqrt_dh);
                scores = tape_.add(scores, mask);
                head_outs.push_back(tape_.matmul(tape_.softmax_rows(scores), vh));
            }
            const int att = tape_.matmul(tape_.concat_cols(head_outs),
                                         param(layer_tensor(layer, "O")));
            x = tape_.add(x, att);

            const int xn2 = tape_.rms_norm(x, param(layer_tensor(layer, "ln2")));
            const int ffn = tape_.matmul(
                tape_.silu(tape_.matmul(xn2, param(layer_tensor(layer, "W1")))),
                param(layer_tensor(layer, "W2")));
            x = tape_.add(x, ffn);
        }
        x = tape_.rms_norm(x, param("final_ln"));
        return tape_.matmul(x, param("unembed"));
    }

    int episode_loss(const Episode& ep) { return tape_.cross_entropy(logits(ep.tokens), ep.next); }

private:
    int param(const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) {
            return it->second;
        }
        auto pit = model_.params.find(name);
        if (pit == model_.params.end()) {
            throw std::out_of_range("forward: missing tensor '" + name + "'");
        }
        const int id = tape_.leaf(pit->second.value, pit->second.trainable);
        leaves_.emplace(name, id);
        return id;
    }

    int causal_mask(std::size_t l) {
        auto it = masks_.find(l);
        if (it != masks_.end()) {
            return it->second;
        }
        Matrix mask(l, l);
        for (std::size_t i = 0; i < l; ++i) {
            for (std::size_t j = i + 1; j < l; ++j) {
                mask(i, j) = -1e30;
            }
        }
        const int id = tape_.leaf(std::move(mask), false);
        masks_.emplace(l, id);
        return id;
    }

    // adapter-branch input; dropout masks are drawn fresh per use
    int branch_input(int x) {
        if (!training_ || dropout_ <= 0.0) {
            return x;
        }
        const Matrix& xv = tape_.value(x);
        Matrix mask(xv.rows(), xv.cols());
        const double keep = 1.0 - dropout_;
        for (double& v : mask.data()) {
            v = dropout_rng_->uniform() < dropout_ ? 0.0 : 1.0 / keep;
        }
        return tape_.mul(x, tape_.leaf(std::move(mask), false));
    }

    int projected(int x, std::size_t layer, const std::string& kind) {
        const int base = tape_.matmul(x, param(layer_tensor(layer, kind)));
        const AdapterSlot* slot = find_slot(model_, layer, kind);
        if (slot == nullptr) {
            return base;
        }
        const std::string p = adapter_tensor_prefix(layer, kind);
        switch (model_.method) {
        case Method::lora: {
            const int xa = branch_input(x);
            const int delta = tape_.scale(
                tape_.matmul(tape_.matmul(xa, param(p + ".a")), param(p + ".b")),
                model_.attach.lora_scaling);
            return tape_.add(base, delta);
        }
        case Method::sara: {
            const int xa = branch_input(x);
            int t = tape_.matmul(xa, param(p + ".u"));
            if (model_.attach.sara_use_lambda) {
                t = tape_.scale_cols(t, param(p + ".lambda"));
            }
            return tape_.add(base, tape_.matmul(t, param(p + ".vt")));
        }
        case Method::mosara: {
            const int xa = branch_input(x);
            const int xu = tape_.matmul(xa, param(p + ".u_frozen"));
            const int gate_logits =
                tape_.matmul(xu, tape_.matmul(param(p + ".wg1"), param(p + ".wg2")));
            const int g = tape_.softmax_rows(gate_logits);
            if (gates_ != nullptr) {
                gates_->add(layer, kind, tape_.value(g));
            }
            std::vector<int> lam_rows;
            lam_rows.reserve(model_.attach.heads);
            for (std::size_t h = 0; h < model_.attach.heads; ++h) {
                lam_rows.push_back(param(p + ".lambda" + std::to_string(h)));
            }
            const int mixed = tape_.matmul(g, tape_.concat_rows(lam_rows));
            int xs = xu;
            if (model_.attach.v_mode == VMode::front) {
                xs = tape_.scale_cols(xu, param(p + ".v"));
            }
            int branch = tape_.matmul(tape_.mul(xs, mixed), param(p + ".vt_frozen"));
            if (model_.attach.v_mode == VMode::after) {
                branch = tape_.scale_cols(branch, param(p + ".v"));
            }
            return tape_.add(base, branch);
        }
        default:
            return base;
        }
    }

    Tape& tape_;
    Model& model_;
    bool training_;
    double dropout_;
    Rng* dropout_rng_;
    GateRecorder* gates_;
    std::map<std::string, int> leaves_;
    std::map<std::size_t, int> masks_;
};

// ============================================================================
// evaluation
// ============================================================================

struct Metrics {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t tokens = 0;
};

// Teacher-forced greedy decode over the target positions of every example.
inline Metrics evaluate(Model& model, const Dataset& data) {
    std::size_t correct = 0;
    std::size_t total = 0;
    double nll = 0.0;
    for (const Example& ex : data.examples) {
        const Episode ep = to_episode(ex);
        Tape tape;
        GraphBuilder gb(tape, model);
        const int lg = gb.logits(ep.tokens);
        const Matrix probs = softmax_rows(tape.value(lg));
        for (std::size_t i = 0; i < ep.next.size(); ++i) {
            if (ep.next[i] < 0) {
                continue;
            }
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < probs.cols(); ++j) {
                if (probs(i, j) > probs(i, argmax)) {
                    argmax = j;
                }
            }
            correct += argmax == static_cast<std::size_t>(ep.next[i]) ? 1 : 0;
            nll += -std::log(std::max(probs(i, static_cast<std::size_t>(ep.next[i])), 1e-300));
            ++total;
        }
    }
    Metrics m;
    m.tokens = total;
    if (total > 0) {
        m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
        m.mean_loss = nll / static_cast<double>(total);
    }
    return m;
}

// ============================================================================
// checkpoint io
// ============================================================================

namespace detail {

inline bool is_vector_tensor(const std::string& name) {
    if (name == "final_ln") {
        return true;
    }
    auto ends_with = [&](const std::string& suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".ln1") || ends_with(".ln2") || ends_with(".v") || ends_with(".scaling")) {
        return true;
    }
    const std::size_t pos = name.rfind(".lambda");
    return pos != std::string::npos && pos + 7 <= name.size() &&
           name.find('.', pos + 1) == std::string::npos;
}

inline nlohmann::json config_json(const TinyTransformerConfig& c) {
    return {{"layers", c.layers}, {"d_model", c.d_model}, {"heads", c.heads},
            {"vocab", c.vocab},   {"max_len", c.max_len}, {"ffn_mult", c.ffn_mult}};
}

inline TinyTransformerConfig config_from_json(const nlohmann::json& j) {
    TinyTransformerConfig c;
    c.layers = j.at("layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.vocab = j.at("vocab").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    return c;
}

inline void put_store_tensor(Checkpoint& cp, const std::string& name, const Param& p) {
    if (is_vector_tensor(name) && p.value.rows() == 1) {
        cp.put_vector(name, p.value.data());
    } else {
        cp.put_matrix(name, p.value);
    }
}

} // namespace detail

// Base model tensors only, adapter tensors excluded.
inline Checkpoint model_to_checkpoint(const Model& m) {
    Checkpoint cp;
    cp.meta["format"] = "1";
    cp.meta["model_config"] = detail::config_json(m.config).dump();
    cp.put_matrix("embed.tok", m.params.at("embed.tok").value);
    cp.put_matrix("embed.pos", m.params.at("embed.pos").value);
    for (std::size_t i = 0; i < m.config.layers; ++i) {
        for (const char* f : {"Q", "K", "V", "O", "W1", "W2"}) {
            const std::string name = layer_tensor(i, f);
            cp.put_matrix(name, m.params.at(name).value);
        }
        for (const char* f : {"ln1", "ln2"}) {
            const std::string name = layer_tensor(i, f);
            cp.put_vector(name, m.params.at(name).value.data());
        }
    }
    cp.put_vector("final_ln", m.params.at("final_ln").value.data());
    cp.put_matrix("unembed", m.params.at("unembed").value);
    return cp;
}

inline Model model_from_checkpoint(const Checkpoint& cp) {
    auto it = cp.meta.find("model_config");
    if (it == cp.meta.end()) {
        throw std::invalid_argument("model checkpoint: missing model_config meta");
    }
    Model m;
    m.config = detail::config_from_json(nlohmann::json::parse(it->second));
    validate(m.config);
    const std::size_t d = m.config.d_model;
    detail::put_param(m, "embed.tok", cp.matrix("embed.tok"), true);
    detail::put_param(m, "embed.pos", cp.matrix("embed.pos"), true);
    for (std::size_t i = 0; i < m.config.layers; ++i) {
        for (const char* f : {"Q", "K", "V", "O", "W1", "W2"}) {
            const std::string name = layer_tensor(i, f);
            detail::put_param(m, name, cp.matrix(name), true);
        }
        for (const char* f : {"ln1", "ln2"}) {
            const std::string name = layer_tensor(i, f);
            detail::put_param(m, name, Matrix(1, d, cp.vec(name)), true);
        }
    }
    detail::put_param(m, "final_ln", Matrix(1, d, cp.vec("final_ln")), true);
    detail::put_param(m, "unembed", cp.matrix("unembed"), true);
    return m;
}

// Adapter tensors only, with enough meta to reattach onto a base model.
inline Checkpoint adapters_to_checkpoint(const Model& m) {
    if (m.slots.empty()) {
        throw std::invalid_argument("adapters_to_checkpoint: model has no adapters");
    }
    Checkpoint cp;
    cp.meta["format"] = "1";
    nlohmann::json cfg{{"method", method_name(m.method)},
                       {"threshold", m.attach.threshold},
                       {"heads", m.attach.heads},
                       {"v_mode", m.attach.v_mode == VMode::after   ? "after"
                                  : m.attach.v_mode == VMode::front ? "front"
                                                                    : "off"},
                       {"sara_init", m.attach.sara_init == SaraInitMode::random   ? "random"
                                     : m.attach.sara_init == SaraInitMode::v_zero ? "v_zero"
                                                                                  : "svd_seeded"},
                       {"sara_use_lambda", m.attach.sara_use_lambda},
                       {"lora_rank", m.attach.lora_rank},
                       {"lora_scaling", m.attach.lora_scaling},
                       {"layer_lo", m.attach.layer_lo},
                       {"layer_hi", std::min(m.attach.layer_hi, m.config.layers - 1)},
                       {"kinds", m.attach.kinds}};
    cp.meta["adapter_config"] = cfg.dump();
    for (const AdapterSlot& slot : m.slots) {
        const std::string p = adapter_tensor_prefix(slot.layer, slot.kind);
        for (const auto& [name, param] : m.params) {
            if (name.rfind(p + ".", 0) == 0) {
                detail::put_store_tensor(cp, name, param);
            }
        }
    }
    return cp;
}

// Reattaches serialized adapters onto a freshly loaded base model.
inline void adapters_from_checkpoint(Model& m, const Checkpoint& cp) {
    auto it = cp.meta.find("adapter_config");
    if (it == cp.meta.end()) {
        throw std::invalid_argument("adapter checkpoint: missing adapter_config meta");
    }
    const nlohmann::json cfg = nlohmann::json::parse(it->second);
    AttachOptions opts;
    opts.threshold = cfg.at("threshold").get<double>();
    opts.heads = cfg.at("heads").get<std::size_t>();
    const std::string vm = cfg.at("v_mode").get<std::string>();
    opts.v_mode = vm == "after" ? VMode::after : vm == "front" ? VMode::front : VMode::off;
    const std::string si = cfg.at("sara_init").get<std::string>();
    opts.sara_init = si == "random"   ? SaraInitMode::random
                     : si == "v_zero" ? SaraInitMode::v_zero
                                      : SaraInitMode::svd_seeded;
    opts.sara_use_lambda = cfg.at("sara_use_lambda").get<bool>();
    opts.lora_rank = cfg.at("lora_rank").get<std::size_t>();
    opts.lora_scaling = cfg.at("lora_scaling").get<double>();
    opts.layer_lo = cfg.at("layer_lo").get<std::size_t>();
    opts.layer_hi = cfg.at("layer_hi").get<std::size_t>();
    opts.kinds = cfg.at("kinds").get<std::vector<std::string>>();
    const Method method = method_from_name(cfg.at("method").get<std::string>());

    m.method = method;
    m.attach = opts;
    m.slots.clear();
    for (auto& [name, p] : m.params) {
        p.trainable = false;
    }
    for (std::size_t layer = opts.layer_lo;
         layer <= opts.layer_hi && layer < m.config.layers; ++layer) {
        for (const std::string& kind : opts.kinds) {
            const std::string p = adapter_tensor_prefix(layer, kind);
            AdapterSlot slot{layer, kind, 0};
            switch (method) {
            case Method::lora: {
                detail::put_param(m, p + ".a", cp.matrix(p + ".a"), true);
                detail::put_param(m, p + ".b", cp.matrix(p + ".b"), true);
                slot.k = cp.matrix(p + ".a").cols();
                break;
            }
            case Method::sara: {
                detail::put_param(m, p + ".u", cp.matrix(p + ".u"), true);
                const std::vector<double> lam = cp.vec(p + ".lambda");
                slot.k = lam.size();
                detail::put_param(m, p + ".lambda", detail::row_matrix(lam),
                                  opts.sara_use_lambda);
                detail::put_param(m, p + ".vt", cp.matrix(p + ".vt"), true);
                break;
            }
            case Method::mosara: {
                detail::put_param(m, p + ".u_frozen", cp.matrix(p + ".u_frozen"), false);
                detail::put_param(m, p + ".vt_frozen", cp.matrix(p + ".vt_frozen"), false);
                for (std::size_t h = 0; h < opts.heads; ++h) {
                    const std::string lname = p + ".lambda" + std::to_string(h);
                    detail::put_param(m, lname, detail::row_matrix(cp.vec(lname)), true);
                }
                detail::put_param(m, p + ".wg1", cp.matrix(p + ".wg1"), true);
                detail::put_param(m, p + ".wg2", cp.matrix(p + ".wg2"), true);
                slot.k = cp.matrix(p + ".wg1").rows();
                if (opts.v_mode != VMode::off) {
                    detail::put_param(m, p + ".v", detail::row_matrix(cp.vec(p + ".v")), true);
                }
                break;
            }
            default:
                throw std::invalid_argument("adapter checkpoint: method must be an adapter method");
            }
            m.slots.push_back(slot);
        }
    }
}

// Folds adapters into the base weights; only input-independent deltas merge.
inline Checkpoint merge_model(const Model& m) {
    Checkpoint cp = model_to_checkpoint(m);
    Checkpoint merged;
    merged.meta = cp.meta;
    for (const TensorEntry& e : cp.entries()) {
        Matrix value;
        bool replaced = false;
        for (const AdapterSlot& slot : m.slots) {
            if (e.name != layer_tensor(slot.layer, slot.kind)) {
                continue;
            }
            const Matrix& base = m.params.at(e.name).value;
            switch (m.method) {
            case Method::lora:
                value = merge_lora(slot_lora(m, slot), base);
                break;
            case Method::sara:
                value = merge_sara(slot_sara(m, slot), base);
                break;
            case Method::mosara: {
                const MoSaraAdapter ad = slot_mosara(m, slot);
                if (ad.heads != 1) {
                    throw std::invalid_argument(
                        "merge: Mo-SARA with " + std::to_string(ad.heads) +
                        " heads has an input-dependent gate and cannot be merged "
                        "(only the single-head configuration folds)");
                }
                // singleton softmax gate is identically 1, so the delta is
                // U diag(lambda0) Vt with v folded in
                Matrix lam_scaled = scale_cols(ad.u_frozen, ad.lambdas[0]);
                Matrix delta = matmul(lam_scaled, ad.vt_frozen);
                if (ad.v_mode == VMode::after) {
                    delta = scale_cols(delta, ad.v);
                } else if (ad.v_mode == VMode::front) {
                    delta = matmul(scale_cols(lam_scaled, ad.v), ad.vt_frozen);
                }
                value = add(base, delta);
                break;
            }
            default:
                break;
            }
            replaced = true;
            break;
        }
        if (replaced) {
            merged.put(e.name, e.dtype, e.shape, value.data());
        } else {
            merged.put(e.name, e.dtype, e.shape, e.values);
        }
    }
    return merged;
}

} // namespace sara

#endif // SARA_MODEL_HPP
