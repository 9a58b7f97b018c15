// tasks.hpp - deterministic synthetic sequence tasks for the toy testbed.
//
// copy/reverse are exactly solvable attention tasks; modular_add sums the
// input tokens mod the base; lang_a and lang_b are two mode-tagged
// deterministic bigram languages playing the roles of "pretrain domain" and
// "fine-tune domain". Language structure is fixed per kind; the dataset seed
// only controls sampling.

#ifndef SARA_TASKS_HPP
#define SARA_TASKS_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sara/checkpoint.hpp"
#include "sara/format.hpp"
#include "sara/rng.hpp"

namespace sara {

enum class TaskKind { copy, reverse, modular_add, lang_a, lang_b };

inline const char* task_kind_name(TaskKind k) {
    switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::modular_add: return "modular_add";
    case TaskKind::lang_a: return "lang_a";
    case TaskKind::lang_b: return "lang_b";
    }
    return "?";
}

inline TaskKind task_kind_from_name(const std::string& name) {
    if (name == "copy") return TaskKind::copy;
    if (name == "reverse") return TaskKind::reverse;
    if (name == "modular_add") return TaskKind::modular_add;
    if (name == "lang_a") return TaskKind::lang_a;
    if (name == "lang_b") return TaskKind::lang_b;
    throw std::invalid_argument("unknown task '" + name +
                                "' (known: copy, reverse, modular_add, lang_a, lang_b)");
}

struct TaskSpec {
    TaskKind kind = TaskKind::copy;
    std::size_t length = 8;  // content tokens per example
    std::uint64_t seed = 0;
    std::size_t size = 64;   // number of examples
    std::size_t vocab = 16;  // token space shared with the model; id 0 is the separator
};

struct Example {
    std::vector<int> input;
    std::vector<int> target;
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t vocab = 16;
};

constexpr int kSepToken = 0;
constexpr std::size_t kLangModes = 2;

namespace detail {

// Deterministic permutation of the content-token range for (kind, mode).
// Derived from fixed constants so every dataset of a kind speaks the same
// language regardless of its sampling seed.
inline std::vector<int> lang_permutation(TaskKind kind, std::size_t mode, std::size_t vocab) {
    const std::size_t first_content = 1 + kLangModes;
    if (vocab <= first_content + 1) {
        throw std::invalid_argument("lang task: vocab too small, need > " +
                                    std::to_string(first_content + 1));
    }
    const std::size_t n = vocab - first_content;
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = static_cast<int>(first_content + i);
    }
    Rng rng(kind == TaskKind::lang_a ? 0x5a3aa001ULL + mode : 0x5a3ab001ULL + mode * 7919ULL);
    // Fisher-Yates; a derangement is not required, distinctness between the
    // two languages is checked by tests
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_int(i + 1);
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

} // namespace detail

// Example i is a pure function of (kind, seed, i).
inline Example gen_example(const TaskSpec& spec, std::size_t index) {
    Rng rng = Rng(spec.seed).child(std::string("task.") + task_kind_name(spec.kind), index);
    Example ex;
    switch (spec.kind) {
    case TaskKind::copy:
    case TaskKind::reverse: {
        ex.input.resize(spec.length);
        for (auto& t : ex.input) {
            t = 1 + static_cast<int>(rng.uniform_int(spec.vocab - 1));
        }
        ex.target = ex.input;
        if (spec.kind == TaskKind::reverse) {
            std::reverse(ex.target.begin(), ex.target.end());
        }
        break;
    }
    case TaskKind::modular_add: {
        const int base = static_cast<int>(spec.vocab);
        ex.input.resize(spec.length);
        int sum = 0;
        for (auto& t : ex.input) {
            t = static_cast<int>(rng.uniform_int(spec.vocab));
            sum = (sum + t) % base;
        }
        ex.target = {sum};
        break;
    }
    case TaskKind::lang_a:
    case TaskKind::lang_b: {
        const std::size_t mode = rng.uniform_int(kLangModes);
        const std::vector<int> perm = detail::lang_permutation(spec.kind, mode, spec.vocab);
        const std::size_t first_content = 1 + kLangModes;
        std::vector<int> seq(spec.length);
        seq[0] = 1 + static_cast<int>(mode);
        int tok = static_cast<int>(first_content + rng.uniform_int(perm.size()));
        for (std::size_t i = 1; i < spec.length; ++i) {
            seq[i] = tok;
            tok = perm[static_cast<std::size_t>(tok) - first_content];
        }
        const std::size_t split = spec.length / 2;
        ex.input.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(split));
        ex.target.assign(seq.begin() + static_cast<std::ptrdiff_t>(split), seq.end());
        break;
    }
    }
    return ex;
}

inline Dataset gen_task(const TaskSpec& spec) {
    if (spec.length < 2) {
        throw std::invalid_argument("gen_task: length must be >= 2");
    }
    if (spec.vocab < 4) {
        throw std::invalid_argument("gen_task: vocab must be >= 4");
    }
    Dataset ds;
    ds.vocab = spec.vocab;
    ds.examples.reserve(spec.size);
    for (std::size_t i = 0; i < spec.size; ++i) {
        ds.examples.push_back(gen_example(spec, i));
    }
    return ds;
}

// ============================================================================
// episodes: the LM view of an example
// ============================================================================

// tokens = input ++ [SEP] ++ target; next[i] is the token position i must
// predict, -1 where the prediction is not scored (the prompt region).
struct Episode {
    std::vector<int> tokens;
    std::vector<int> next;
};

inline Episode to_episode(const Example& ex) {
    Episode ep;
    ep.tokens = ex.input;
    ep.tokens.push_back(kSepToken);
    ep.tokens.insert(ep.tokens.end(), ex.target.begin(), ex.target.end());
    ep.next.assign(ep.tokens.size(), -1);
    const std::size_t sep_pos = ex.input.size();
    for (std::size_t j = 0; j < ex.target.size(); ++j) {
        ep.next[sep_pos + j] = ex.target[j];
    }
    return ep;
}

// ============================================================================
// serialization
// ============================================================================

inline Checkpoint dataset_to_checkpoint(const Dataset& ds) {
    Checkpoint cp;
    cp.meta["format"] = "1";
    cp.meta["vocab"] = std::to_string(ds.vocab);
    cp.meta["examples"] = std::to_string(ds.examples.size());
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const Example& ex = ds.examples[i];
        std::vector<double> in(ex.input.begin(), ex.input.end());
        std::vector<double> tg(ex.target.begin(), ex.target.end());
        cp.put_vector("example." + std::to_string(i) + ".input", in);
        cp.put_vector("example." + std::to_string(i) + ".target", tg);
    }
    return cp;
}

inline Dataset dataset_from_checkpoint(const Checkpoint& cp) {
    Dataset ds;
    ds.vocab = std::stoul(cp.meta.at("vocab"));
    const std::size_t n = std::stoul(cp.meta.at("examples"));
    ds.examples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (double v : cp.vec("example." + std::to_string(i) + ".input")) {
            ds.examples[i].input.push_back(static_cast<int>(v));
        }
        for (double v : cp.vec("example." + std::to_string(i) + ".target")) {
            ds.examples[i].target.push_back(static_cast<int>(v));
        }
    }
    return ds;
}

inline std::string dataset_csv(const Dataset& ds) {
    std::string out = "index,input,target\n";
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        out += std::to_string(i) + ",\"";
        const Example& ex = ds.examples[i];
        for (std::size_t j = 0; j < ex.input.size(); ++j) {
            out += (j ? " " : "") + std::to_string(ex.input[j]);
        }
        out += "\",\"";
        for (std::size_t j = 0; j < ex.target.size(); ++j) {
            out += (j ? " " : "") + std::to_string(ex.target[j]);
        }
        out += "\"\n";
    }
    return out;
}

} // namespace sara

#endif // SARA_TASKS_HPP
