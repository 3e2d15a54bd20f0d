#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "schedlab/dsl.hpp"

using namespace schedlab;

namespace {

TaskRuntimeState state_with(Micros arrival = 0, Micros expected = 0, double vruntime = 0,
                            Micros wait = 0) {
    TaskRuntimeState s;
    s.arrival_time = arrival;
    s.expected_runtime = expected;
    s.vruntime = vruntime;
    s.wait_time = wait;
    s.enqueue_time = 0;
    s.now = wait;
    return s;
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::IoError;  // sentinel: no error thrown
}

// random expression trees for the round-trip property
Expr random_expr(std::mt19937_64& rng, const ParamMap& params, int depth) {
    auto pick = rng() % (depth <= 1 ? 3 : 10);
    switch (pick) {
        case 0: {
            // constants from a mix of integers and awkward reals
            switch (rng() % 4) {
                case 0: return Expr::constant(static_cast<double>(rng() % 1000));
                case 1: return Expr::constant(0.01 * static_cast<double>(rng() % 10000));
                case 2: return Expr::constant(1e-9 * static_cast<double>(rng() % 1000000));
                default: return Expr::constant(0.1 + 0.2 + static_cast<double>(rng() % 7));
            }
        }
        case 1:
            return Expr::feature(feature_table()[rng() % feature_table().size()].second);
        case 2: {
            if (params.empty()) return Expr::feature(Feature::WaitTime);
            auto it = params.begin();
            std::advance(it, static_cast<long>(rng() % params.size()));
            return Expr::param_ref(it->first);
        }
        case 3: return Expr::unary(Expr::Kind::Neg, random_expr(rng, params, depth - 1));
        case 4:
        case 5:
        case 6:
        case 7: {
            Expr::Kind k = pick == 4   ? Expr::Kind::Add
                           : pick == 5 ? Expr::Kind::Sub
                           : pick == 6 ? Expr::Kind::Mul
                                       : Expr::Kind::Div;
            return Expr::binary(k, random_expr(rng, params, depth - 1),
                                random_expr(rng, params, depth - 1));
        }
        case 8: {
            auto k = rng() % 2 == 0 ? Expr::Kind::Min : Expr::Kind::Max;
            return Expr::call(k, {random_expr(rng, params, depth - 1),
                                  random_expr(rng, params, depth - 1)});
        }
        default:
            return Expr::call(Expr::Kind::Clamp,
                              {random_expr(rng, params, depth - 1),
                               random_expr(rng, params, depth - 1),
                               random_expr(rng, params, depth - 1)});
    }
}

}  // namespace

TEST_CASE("parse fifo priority: -arrival_time") {
    auto p = parse_policy("priority = -arrival_time\n");
    REQUIRE(p.priority_expr.kind == Expr::Kind::Neg);
    REQUIRE(p.priority_expr.kids[0].kind == Expr::Kind::Feat);
    CHECK(p.priority_expr.kids[0].feat == Feature::ArrivalTime);
    CHECK_FALSE(p.preemptive);
}

TEST_CASE("parse ljf priority: expected_runtime") {
    auto p = parse_policy("priority = expected_runtime\n");
    REQUIRE(p.priority_expr.kind == Expr::Kind::Feat);
    CHECK(p.priority_expr.feat == Feature::ExpectedRuntime);
}

TEST_CASE("unknown identifiers are rejected with the name") {
    auto run = [] { parse_policy("priority = -vruntime + 0.5 * wait_tim\n"); };
    CHECK(code_of(run) == Errc::UnknownIdentifier);
    try {
        run();
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("wait_tim") != std::string::npos);
    }
}

TEST_CASE("syntax errors carry line and column") {
    try {
        parse_policy("name = x\npriority = 1 + + 2\n");
        FAIL("expected SyntaxError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SyntaxError);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("duplicate params rejected") {
    auto run = [] {
        parse_policy(
            "param a = 1 in [0, 2]\n"
            "param a = 2 in [0, 4]\n"
            "priority = a\n");
    };
    CHECK(code_of(run) == Errc::DuplicateParam);
}

TEST_CASE("param out of range rejected") {
    auto run = [] { parse_policy("param a = 5 in [0, 2]\npriority = a\n"); };
    CHECK(code_of(run) == Errc::InvalidSpec);
}

TEST_CASE("evaluation of canonical examples") {
    auto fifo = builtin("fifo");
    CHECK(eval_priority(fifo, state_with(5)) == doctest::Approx(-5.0));

    auto ljf = builtin("ljf");
    CHECK(eval_priority(ljf, state_with(0, 30'000'000)) == doctest::Approx(3e7));

    auto fair = builtin("fair_vruntime");
    CHECK(eval_priority(fair, state_with(0, 0, 1024.0)) == doctest::Approx(-1024.0));
}

TEST_CASE("division by zero surfaces as a typed error") {
    auto p = parse_policy("priority = 1 / exec_runtime\n");
    TaskRuntimeState s;
    s.exec_runtime = 0;
    CHECK(code_of([&] { evaluate(p.priority_expr, s, p.params); }) == Errc::DivisionByZero);
}

TEST_CASE("builtins: full set constructs and validates") {
    for (const auto& name : builtin_names()) {
        auto p = builtin(name);
        CHECK(p.name == name);
        CHECK_NOTHROW(validate_policy(p));
    }
    CHECK(code_of([] { builtin("nope"); }) == Errc::UnknownBuiltin);

    auto fifo = builtin("fifo");
    CHECK_FALSE(fifo.preemptive);

    auto fair = builtin("fair_vruntime");
    CHECK(fair.preemptive);
    CHECK(fair.params.at("slice_base").value == doctest::Approx(3000.0));

    auto ljf = builtin("ljf");
    CHECK_FALSE(ljf.preemptive);

    auto layered = builtin("layered_weight");
    // weight-major: any weight step dominates any feasible vruntime
    auto lo = state_with(0, 0, 1e9);
    lo.weight = 2;
    auto hi = state_with(0, 0, 0.0);
    hi.weight = 1;
    CHECK(eval_priority(layered, lo) > eval_priority(layered, hi));
}

TEST_CASE("slice evaluation clamps into [100us, 100ms]") {
    auto p = parse_policy("priority = 0\nslice = 7\npreemptive = true\n");
    CHECK(eval_slice_us(p, state_with()) == kSliceMinUs);
    auto q = parse_policy("priority = 0\nslice = 5000000\npreemptive = true\n");
    CHECK(eval_slice_us(q, state_with()) == kSliceMaxUs);
}

TEST_CASE("compose: singleton equals the fair priority tree") {
    auto composed = compose({{"fair_order", Expr::unary(Expr::Kind::Neg,
                                                        Expr::feature(Feature::Vruntime))}},
                            {1.0});
    CHECK(composed.priority_expr == builtin("fair_vruntime").priority_expr);
    CHECK(composed.description.find("fair_order") != std::string::npos);
}

TEST_CASE("compose: ljf with aging and empty composition") {
    auto aged = compose({{"long_first", Expr::feature(Feature::ExpectedRuntime)},
                         {"aging", Expr::feature(Feature::WaitTime)}},
                        {1.0, 0.01});
    auto s = state_with(0, 1000, 0, 500'000);
    CHECK(eval_priority(aged, s) == doctest::Approx(1000.0 + 0.01 * 500'000));

    CHECK(code_of([] { compose({}, {}); }) == Errc::EmptyComposition);
}

TEST_CASE("apply_patch updates params and stays atomic on failure") {
    auto fair = builtin("fair_vruntime");

    PolicyEdit edit;
    edit.target = PolicyEdit::Target::Param;
    edit.param_name = "slice_base";
    edit.param_value = 1000;
    auto patched = apply_patch(fair, {edit});
    CHECK(patched.params.at("slice_base").value == doctest::Approx(1000.0));
    CHECK(patched.name == "fair_vruntime_patched");
    CHECK(fair.params.at("slice_base").value == doctest::Approx(3000.0));  // base untouched

    PolicyEdit bad;
    bad.target = PolicyEdit::Target::Priority;
    bad.expr_source = "foo + 1";
    CHECK(code_of([&] { apply_patch(fair, {bad}); }) == Errc::UnknownIdentifier);
    CHECK(fair.priority_expr == builtin("fair_vruntime").priority_expr);

    PolicyEdit missing;
    missing.target = PolicyEdit::Target::Param;
    missing.param_name = "nope";
    CHECK(code_of([&] { apply_patch(fair, {missing}); }) == Errc::InvalidEdit);
}

TEST_CASE("aging helper appends a wait_time term") {
    auto aged = with_aging_term(builtin("ljf"), 0.01);
    auto s = state_with(0, 140'000, 0, 2'000'000);
    CHECK(eval_priority(aged, s) == doctest::Approx(140'000 + 0.01 * 2'000'000));
}

TEST_CASE("property: render/parse round-trip on random trees") {
    std::mt19937_64 rng(20250808);
    ParamMap params{{"alpha", {0.5, 0.0, 1.0}}, {"beta", {2.0, 0.0, 10.0}}};
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
        PolicySpec p;
        p.name = "rt";
        p.params = params;
        p.priority_expr = random_expr(rng, params, 1 + static_cast<int>(rng() % 6));
        p.slice_expr = random_expr(rng, params, 1 + static_cast<int>(rng() % 3));
        auto text = render_policy(p);
        auto back = parse_policy(text);
        REQUIRE_MESSAGE(back.priority_expr == p.priority_expr, "source was:\n" << text);
        REQUIRE(back.slice_expr == p.slice_expr);
        REQUIRE(render_policy(back) == text);
        ++checked;
    }
    CHECK(checked == 500);
}

TEST_CASE("property: induced order is a strict total order") {
    auto p = parse_policy("priority = expected_runtime\n");
    std::mt19937_64 rng(77);
    std::vector<TaskRuntimeState> states(20);
    std::vector<double> pri(20);
    for (int i = 0; i < 20; ++i) {
        states[i] = state_with(0, static_cast<Micros>(rng() % 5));  // force many ties
        states[i].enqueue_time = static_cast<Micros>(rng() % 3);
        pri[i] = eval_priority(p, states[i]);
    }
    auto before = [&](int a, int b) {
        if (pri[a] != pri[b]) return pri[a] > pri[b];
        if (states[a].enqueue_time != states[b].enqueue_time)
            return states[a].enqueue_time < states[b].enqueue_time;
        return a < b;
    };
    for (int a = 0; a < 20; ++a) {
        CHECK_FALSE(before(a, a));  // irreflexive
        for (int b = 0; b < 20; ++b) {
            if (a == b) continue;
            CHECK(before(a, b) != before(b, a));  // antisymmetric and total
            for (int c = 0; c < 20; ++c) {
                if (before(a, b) && before(b, c)) CHECK(before(a, c));  // transitive
            }
        }
    }
}

TEST_CASE("property: positive scaling preserves the induced order") {
    std::mt19937_64 rng(31337);
    ParamMap no_params;
    for (int round = 0; round < 50; ++round) {
        Expr e = random_expr(rng, no_params, 4);
        double scale = 0.25 + static_cast<double>(rng() % 100);
        Expr scaled = Expr::binary(Expr::Kind::Mul, Expr::constant(scale), e);

        std::vector<TaskRuntimeState> states(8);
        std::vector<double> base(8), mult(8);
        bool eval_ok = true;
        for (int i = 0; i < 8; ++i) {
            states[i] = state_with(static_cast<Micros>(rng() % 1000),
                                   static_cast<Micros>(rng() % 1000),
                                   static_cast<double>(rng() % 1000),
                                   static_cast<Micros>(rng() % 1000));
            states[i].exec_runtime = static_cast<Micros>(rng() % 1000);
            states[i].weight = 1 + static_cast<int>(rng() % 100);
            try {
                base[i] = evaluate(e, states[i], no_params);
                mult[i] = evaluate(scaled, states[i], no_params);
            } catch (const Error&) {
                eval_ok = false;  // random /0 trees are fine to skip
                break;
            }
        }
        if (!eval_ok) continue;
        auto order_of = [&](const std::vector<double>& pri) {
            std::vector<int> idx(8);
            for (int i = 0; i < 8; ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](int a, int b) {
                if (pri[a] != pri[b]) return pri[a] > pri[b];
                if (states[a].enqueue_time != states[b].enqueue_time)
                    return states[a].enqueue_time < states[b].enqueue_time;
                return a < b;
            });
            return idx;
        };
        CHECK(order_of(base) == order_of(mult));
    }
}

TEST_CASE("policy canonical json is stable and hashes distinctly") {
    auto ljf = builtin("ljf");
    auto fair = builtin("fair_vruntime");
    CHECK(ljf.content_id() == builtin("ljf").content_id());
    CHECK(ljf.content_id() != fair.content_id());
    CHECK(ljf.content_id().size() == 64);

    auto variant = with_aging_term(ljf, 0.01);
    CHECK(variant.content_id() != ljf.content_id());
}
