#include <doctest.h>

#include <cmath>

#include "sara/analysis.hpp"
#include "sara/model.hpp"
#include "sara/train.hpp"

using namespace sara;

namespace {

Model tiny(std::uint64_t seed = 42) {
    TinyTransformerConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 16;
    cfg.heads = 4;
    cfg.vocab = 16;
    cfg.max_len = 32;
    cfg.ffn_mult = 2;
    Rng rng(seed);
    return build_model(cfg, rng);
}

Dataset small_task(TaskKind kind = TaskKind::lang_a, std::uint64_t seed = 100,
                   std::size_t size = 32) {
    TaskSpec ts;
    ts.kind = kind;
    ts.length = 10;
    ts.seed = seed;
    ts.size = size;
    return gen_task(ts);
}

} // namespace

TEST_CASE("identical seeds give bit-identical logs and parameters") {
    Dataset ds = small_task();
    TrainConfig cfg;
    cfg.method = Method::sara;
    cfg.threshold = 0.3;
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.warmup_steps = 2;
    cfg.seed = 7;

    auto run = [&]() {
        Model m = tiny();
        Rng rng(cfg.seed);
        attach_adapters(m, Method::sara, attach_options(cfg), rng);
        TrainLog log = train(m, ds, cfg);
        return std::pair{log.csv(), m};
    };
    auto [csv_a, model_a] = run();
    auto [csv_b, model_b] = run();
    CHECK(csv_a == csv_b);
    for (const auto& [name, p] : model_a.params) {
        CHECK(p.value == model_b.params.at(name).value);
    }
}

TEST_CASE("frozen method leaves every parameter bit-identical") {
    Dataset ds = small_task();
    Model m = tiny();
    set_method_frozen(m);
    const ParamStore before = m.params;
    TrainConfig cfg;
    cfg.method = Method::frozen;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.warmup_steps = 1;
    TrainLog log = train(m, ds, cfg);
    CHECK(log.rows.size() == 4); // 32 examples / batch 8
    for (const auto& [name, p] : before) {
        CHECK(m.params.at(name).value == p.value);
    }
}

TEST_CASE("frozen tensors stay bit-identical through adapter training") {
    Dataset ds = small_task();
    Model m = tiny();
    Rng rng(3);
    AttachOptions opts;
    opts.threshold = 0.5;
    opts.heads = 3;
    attach_adapters(m, Method::mosara, opts, rng);

    std::map<std::string, Matrix> frozen_before;
    for (const auto& [name, p] : m.params) {
        if (!p.trainable) {
            frozen_before.emplace(name, p.value);
        }
    }
    REQUIRE(frozen_before.count("layer.0.Q"));
    REQUIRE(frozen_before.count("adapter.0.Q.u_frozen"));
    REQUIRE(frozen_before.count("adapter.0.Q.vt_frozen"));

    TrainConfig cfg;
    cfg.method = Method::mosara;
    cfg.lr = 1e-2;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.warmup_steps = 1;
    train(m, ds, cfg);

    for (const auto& [name, value] : frozen_before) {
        CHECK(m.params.at(name).value == value);
    }
    // and the grads of frozen tensors never accumulate
    for (const auto& [name, p] : m.params) {
        if (!p.trainable) {
            CHECK(max_abs(p.grad) == 0.0);
        }
    }
}

namespace {

// single adapted layer, quadratic loss, planted realizable target; returns
// (initial loss, loss after `steps`)
std::pair<double, double> sara_regression_toy(std::uint64_t seed, int steps) {
    Rng rng(seed);
    const std::size_t d = 8;
    Matrix w0 = Matrix::identity(d);
    Matrix x = kaiming_uniform(rng, 16, d, d);
    Matrix delta = matmul(kaiming_uniform(rng, d, 2, d), kaiming_uniform(rng, 2, d, 2));
    Matrix y = matmul(x, add(w0, delta)); // rank-2 planted target, optimum 0

    SaraAdapter ad = sara_init(rng, w0, 0.9); // k >= 2 on the identity spectrum
    REQUIRE(ad.k >= 2);

    ParamStore ps;
    ps.emplace("u", Param(ad.u));
    ps.emplace("lambda", Param(Matrix(1, ad.k, ad.lambda)));
    ps.emplace("vt", Param(ad.vt));

    double first_loss = 0.0, final_loss = 0.0;
    for (int step = 0; step < steps; ++step) {
        Tape tape;
        const int xn = tape.leaf(x, false);
        const int w0n = tape.leaf(w0, false);
        const int un = tape.leaf(ps.at("u").value, true);
        const int lamn = tape.leaf(ps.at("lambda").value, true);
        const int vtn = tape.leaf(ps.at("vt").value, true);
        const int pred = tape.add(tape.matmul(xn, w0n),
                                  tape.matmul(tape.scale_cols(tape.matmul(xn, un), lamn), vtn));
        const int loss =
            tape.scale(tape.half_sum_squares(tape.sub(pred, tape.leaf(y, false))),
                       1.0 / static_cast<double>(x.rows()));
        tape.backward(loss);
        ps.at("u").grad = tape.grad(un);
        ps.at("lambda").grad = tape.grad(lamn);
        ps.at("vt").grad = tape.grad(vtn);
        adamw_step(ps, 0.05, 0.0);
        if (step == 0) {
            first_loss = tape.value(loss)(0, 0);
        }
        final_loss = tape.value(loss)(0, 0);
    }
    return {first_loss, final_loss};
}

} // namespace

TEST_CASE("the regression toy converges below 1e-3 within 500 steps") {
    const auto [first, final_loss] = sara_regression_toy(12, 500);
    CHECK(final_loss < 1e-3); // optimum is zero (planted target is realizable)
    CHECK(final_loss < first);
}

TEST_CASE("the regression toy improves for every seed in a 10-seed suite") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [first, final_loss] = sara_regression_toy(seed, 500);
        CHECK(final_loss < first);
    }
}

TEST_CASE("ten seeds all improve on the initial loss") {
    Dataset ds = small_task(TaskKind::lang_b, 11, 32);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model m = tiny(1000 + seed);
        set_method_full(m);
        TrainConfig cfg;
        cfg.method = Method::full;
        cfg.lr = 3e-3;
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.warmup_steps = 2;
        cfg.dropout = 0.0;
        cfg.seed = seed;
        TrainLog log = train(m, ds, cfg);
        REQUIRE(!log.rows.empty());
        CHECK(log.rows.back().loss < log.rows.front().loss);
    }
}

TEST_CASE("nan abort names the first non-finite tensor") {
    Dataset ds = small_task();
    Model m = tiny();
    set_method_full(m);
    m.params.at("embed.tok").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.method = Method::full;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    CHECK_THROWS_WITH_AS(train(m, ds, cfg), doctest::Contains("embed.tok"), std::runtime_error);
}

TEST_CASE("log rows carry the schedule") {
    Dataset ds = small_task();
    Model m = tiny();
    Rng rng(2);
    attach_adapters(m, Method::lora, AttachOptions{}, rng);
    TrainConfig cfg;
    cfg.method = Method::lora;
    cfg.lr = 1e-3;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.warmup_steps = 3;
    TrainLog log = train(m, ds, cfg);
    const std::uint64_t total = log.rows.size();
    REQUIRE(total == 12);
    for (const TrainLogRow& r : log.rows) {
        CHECK(r.lr == lr_at(r.step, cfg.lr, cfg.warmup_steps, total));
        CHECK(std::isfinite(r.loss));
        CHECK(std::isfinite(r.grad_norm));
    }
    const std::string csv = log.csv();
    CHECK(csv.rfind("step,lr,loss,grad_norm\n", 0) == 0);
}

TEST_CASE("explicit total_steps truncates training") {
    Dataset ds = small_task();
    Model m = tiny();
    Rng rng(2);
    attach_adapters(m, Method::sara, AttachOptions{}, rng);
    TrainConfig cfg;
    cfg.method = Method::sara;
    cfg.total_steps = 5;
    cfg.warmup_steps = 2;
    cfg.batch_size = 8;
    TrainLog log = train(m, ds, cfg);
    CHECK(log.rows.size() == 5);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.total_steps = 10;
    cfg.warmup_steps = 20;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    Model m = tiny();
    CHECK_THROWS_AS(train(m, Dataset{}, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("ablation switches train end to end") {
    Dataset ds = small_task(TaskKind::lang_b, 44, 16);

    SUBCASE("sara without the diagonal keeps lambda frozen") {
        Model m = tiny();
        TrainConfig cfg;
        cfg.method = Method::sara;
        cfg.threshold = 0.4;
        cfg.sara_use_lambda = false;
        cfg.lr = 1e-3;
        cfg.epochs = 1;
        cfg.batch_size = 16;
        cfg.warmup_steps = 0;
        Rng rng(1);
        attach_adapters(m, Method::sara, attach_options(cfg), rng);
        const Matrix lambda_before = m.params.at("adapter.0.Q.lambda").value;
        const Matrix u_before = m.params.at("adapter.0.Q.u").value;
        train(m, ds, cfg);
        CHECK(m.params.at("adapter.0.Q.lambda").value == lambda_before);
        CHECK(m.params.at("adapter.0.Q.u").value != u_before);
        // counts drop by k per adapter
        std::size_t expect = 0;
        for (const AdapterSlot& s : m.slots) {
            expect += s.k * 2 * m.config.d_model;
        }
        CHECK(adapter_param_count(m) == expect);
    }

    SUBCASE("mosara with v off still trains the mixture") {
        Model m = tiny();
        TrainConfig cfg;
        cfg.method = Method::mosara;
        cfg.threshold = 0.5;
        cfg.heads = 3;
        cfg.mosara_v_mode = VMode::off;
        cfg.lr = 1e-2;
        cfg.epochs = 1;
        cfg.batch_size = 16;
        cfg.warmup_steps = 0;
        Rng rng(2);
        attach_adapters(m, Method::mosara, attach_options(cfg), rng);
        CHECK_FALSE(m.params.count("adapter.0.Q.v"));
        const Matrix lam_before = m.params.at("adapter.0.Q.lambda0").value;
        train(m, ds, cfg);
        CHECK(m.params.at("adapter.0.Q.lambda0").value != lam_before);
    }

    SUBCASE("mosara with v in front trains a k-length diagonal") {
        Model m = tiny();
        TrainConfig cfg;
        cfg.method = Method::mosara;
        cfg.threshold = 0.5;
        cfg.heads = 3;
        cfg.mosara_v_mode = VMode::front;
        cfg.lr = 1e-2;
        cfg.epochs = 1;
        cfg.batch_size = 16;
        cfg.warmup_steps = 0;
        Rng rng(3);
        attach_adapters(m, Method::mosara, attach_options(cfg), rng);
        const AdapterSlot* slot = find_slot(m, 0, "Q");
        REQUIRE(slot != nullptr);
        CHECK(m.params.at("adapter.0.Q.v").value.cols() == slot->k);
        const Matrix v_before = m.params.at("adapter.0.Q.v").value;
        train(m, ds, cfg);
        CHECK(m.params.at("adapter.0.Q.v").value != v_before);
    }
}

// ============================================================================
// recipes
// ============================================================================

TEST_CASE("published defaults per method and recipe") {
    TrainConfig mo = default_config(Method::mosara, "math-7b");
    CHECK(mo.heads == 5);
    CHECK(mo.threshold == 0.5);
    CHECK(mo.lr == 3e-2);
    CHECK(mo.dropout == 0.05);
    CHECK(mo.warmup_steps == 100);
    CHECK(mo.epochs == 3);
    CHECK(mo.batch_size == 16);
    CHECK(mo.seed == 42);

    TrainConfig sa = default_config(Method::sara, "math-7b");
    CHECK(sa.threshold == 0.01);
    CHECK(sa.lr == 3e-3);

    TrainConfig lo = default_config(Method::lora, "math-7b");
    CHECK(lo.lora_rank == 10);
    CHECK(lo.lora_scaling == 2.0);
    CHECK(lo.lr == 3e-4);
    CHECK(lo.weight_decay == 0.0);

    TrainConfig e2e = default_config(Method::sara, "e2e-gpt2");
    CHECK(e2e.weight_decay == 0.01);
    CHECK(e2e.warmup_steps == 500);
    CHECK(e2e.epochs == 5);
    CHECK(e2e.threshold == 0.012);
    CHECK(e2e.lr == 8e-3);

    TrainConfig mo13 = default_config(Method::sara, "math-13b");
    CHECK(mo13.threshold == 0.009);
    CHECK(mo13.lr == 1e-2);
}

TEST_CASE("unknown recipe error lists the known ones") {
    CHECK_THROWS_WITH_AS(default_config(Method::sara, "nope"), doctest::Contains("math-7b"),
                         std::invalid_argument);
}

TEST_CASE("train config json round trip") {
    TrainConfig cfg = default_config(Method::mosara, "math-7b");
    cfg.mosara_v_mode = VMode::front;
    cfg.layer_lo = 1;
    cfg.layer_hi = 2;
    TrainConfig back = train_config_from_json(train_config_json(cfg));
    CHECK(back.method == cfg.method);
    CHECK(back.lr == cfg.lr);
    CHECK(back.threshold == cfg.threshold);
    CHECK(back.heads == cfg.heads);
    CHECK(back.mosara_v_mode == VMode::front);
    CHECK(back.layer_lo == 1);
    CHECK(back.layer_hi == 2);
    CHECK(train_config_json(back) == train_config_json(cfg));
}
