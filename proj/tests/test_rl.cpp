#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "voxrl/rl.hpp"

using namespace voxrl;
using namespace voxrl::rl;

namespace {

// Random volumes stand in for phantoms; RL code only needs tensors+labels.
Dataset toy_dataset(int train_n, int test_n, std::array<int, 3> dims, std::uint64_t seed,
                    int test_normals = -1) {
    Dataset ds;
    ds.dims = dims;
    Rng rng(seed);
    for (int i = 0; i < train_n; ++i) {
        nn::Tensor t({1, dims[2], dims[1], dims[0]});
        testsup::fill_uniform(t, rng, 0.0, 1.0);
        ds.train.push_back(DatasetItem{"train-" + std::to_string(i), i % 2, std::move(t)});
    }
    for (int i = 0; i < test_n; ++i) {
        nn::Tensor t({1, dims[2], dims[1], dims[0]});
        testsup::fill_uniform(t, rng, 0.0, 1.0);
        const int label = test_normals < 0 ? i % 2 : (i < test_normals ? 0 : 1);
        ds.test.push_back(DatasetItem{"test-" + std::to_string(i), label, std::move(t)});
    }
    return ds;
}

// Pin the head so the network always emits the given pair regardless of the
// volume: zero every parameter, then set the head bias.
void rig_constant_q(DqnNetwork& net, float q0, float q1) {
    for (auto& [name, t] : net.parameters()) {
        std::fill(t->data.begin(), t->data.end(), 0.0f);
        if (name == "head.bias") t->data = {q0, q1};
    }
}

}  // namespace

TEST_CASE("env_step equals the Kronecker delta on all four cases") {
    CHECK(env_step(1, 1).reward == 1);
    CHECK(env_step(1, 1).pred_corr_new == 1);
    CHECK(env_step(1, 0).reward == -1);
    CHECK(env_step(1, 0).pred_corr_new == 0);
    for (int label = 0; label < 2; ++label)
        for (int action = 0; action < 2; ++action) {
            const auto out = env_step(label, action);
            const int delta = label == action ? 1 : 0;
            CHECK(out.pred_corr_new == delta);
            CHECK(out.reward == (delta == 1 ? 1 : -1));
            CHECK(out.reward == 2 * out.pred_corr_new - 1);
        }
    CHECK_THROWS_AS(env_step(2, 0), std::invalid_argument);
    CHECK_THROWS_AS(env_step(0, -1), std::invalid_argument);
}

TEST_CASE("epsilon schedule decays linearly to its floor") {
    EpsilonSchedule s;
    CHECK(s.value_at(0) == 0.7);
    CHECK(s.value_at(1000) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(s.value_at(7000) == 1e-4);  // raw value 0.0 clamps up to the floor
    double prev = s.value_at(0);
    for (int k = 1; k < 10000; k += 7) {
        const double e = s.value_at(k);
        CHECK(e <= prev);
        CHECK(e >= 1e-4);
        prev = e;
    }
}

TEST_CASE("select_action is greedy at eps 0 with ties toward action 0") {
    Rng rng(1);
    CHECK(select_action({0.2, 0.9}, 0.0, rng) == 1);
    CHECK(select_action({0.4, 0.4}, 0.0, rng) == 0);
    CHECK(select_action({0.9, 0.2}, 0.0, rng) == 0);
}

TEST_CASE("select_action at eps 1 is uniform over 1e4 draws") {
    Rng rng(42);
    int ones = 0;
    for (int i = 0; i < 10000; ++i) ones += select_action({5.0, -5.0}, 1.0, rng);
    const double freq = ones / 10000.0;
    CHECK(freq > 0.48);
    CHECK(freq < 0.52);
}

TEST_CASE("replay buffer caps at capacity with exact FIFO eviction") {
    ReplayBuffer buf;  // default 15000
    CHECK(buf.capacity() == 15000);
    for (int i = 0; i < 15001; ++i) {
        Transition t;
        t.image_index = i;
        buf.push(t);
    }
    CHECK(buf.size() == 15000);
    CHECK(buf.at(0).image_index == 1);  // first push evicted
    CHECK(buf.at(14999).image_index == 15000);

    ReplayBuffer one;
    one.push(Transition{});
    CHECK(one.size() == 1);
}

TEST_CASE("eviction order equals insertion order under random workloads") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t cap = 1 + std::size_t(rng.uniform_int(40));
        ReplayBuffer buf(cap);
        const int pushes = rng.uniform_int(120);
        for (int i = 0; i < pushes; ++i) {
            Transition t;
            t.image_index = i;
            buf.push(t);
        }
        const int expect_size = std::min<int>(pushes, int(cap));
        CHECK(buf.size() == std::size_t(expect_size));
        for (int i = 0; i < expect_size; ++i)
            CHECK(buf.at(std::size_t(i)).image_index == pushes - expect_size + i);
    }
}

TEST_CASE("buffer sampling draws distinct indices deterministically") {
    ReplayBuffer buf(200);
    Rng rng(5);
    CHECK(!buf.sample(24, rng).has_value());  // not ready

    for (int i = 0; i < 24; ++i) {
        Transition t;
        t.image_index = i;
        buf.push(t);
    }
    Rng r1(77);
    const auto all = buf.sample(24, r1);
    REQUIRE(all.has_value());
    std::set<int> ids;
    for (const auto& t : *all) ids.insert(t.image_index);
    CHECK(ids.size() == 24);  // a permutation of the whole buffer

    for (int i = 24; i < 100; ++i) {
        Transition t;
        t.image_index = i;
        buf.push(t);
    }
    Rng r2(77), r3(77);
    const auto s2 = buf.sample(24, r2);
    const auto s3 = buf.sample(24, r3);
    REQUIRE(s2.has_value());
    std::set<int> distinct;
    for (const auto& t : *s2) distinct.insert(t.image_index);
    CHECK(distinct.size() == 24);
    for (std::size_t i = 0; i < 24; ++i)
        CHECK((*s2)[i].image_index == (*s3)[i].image_index);  // same seed, same sample
}

TEST_CASE("tabular TD(0) converges to the geometric-sum optimum") {
    // Independent oracle for the 5-step MDP: a lookup table over
    // (step, pred_corr) replaces the network; the same td-target update rule
    // with alpha=0.1 must converge to Q*(step k) = sum_{i=0..4-k} gamma^i.
    constexpr double gamma = 0.99;
    constexpr double alpha = 0.1;
    constexpr int steps = 5;
    const int label = 1;  // fixed tumor image; action 1 is always correct

    double q[steps][2][2] = {};
    Rng rng(2025);
    for (int sweep = 0; sweep < 10000; ++sweep) {
        int pc = 0;
        for (int step = 0; step < steps; ++step) {
            const int action = rng.uniform_int(2);  // pure exploration
            const auto out = env_step(label, action);
            double target = double(out.reward);
            if (step + 1 < steps) {
                const auto& qn = q[step + 1][out.pred_corr_new];
                target += gamma * std::max(qn[0], qn[1]);
            }
            double& cell = q[step][pc][action];
            cell += alpha * (target - cell);
            pc = out.pred_corr_new;
        }
    }

    // geometric sums, both from the loop oracle and the frozen literals
    double expect[steps];
    for (int k = 0; k < steps; ++k) {
        double acc = 0.0;
        for (int i = 0; i <= 4 - k; ++i) acc += std::pow(gamma, i);
        expect[k] = acc;
    }
    CHECK(expect[0] == doctest::Approx(4.90099501).epsilon(1e-9));
    CHECK(expect[1] == doctest::Approx(3.940399).epsilon(1e-9));
    CHECK(expect[2] == doctest::Approx(2.9701).epsilon(1e-9));
    CHECK(expect[3] == doctest::Approx(1.99).epsilon(1e-9));
    CHECK(expect[4] == doctest::Approx(1.0).epsilon(1e-12));

    for (int k = 0; k < steps; ++k)
        for (int pc = 0; pc < 2; ++pc) {
            if (k == 0 && pc == 1) continue;  // unreachable: episodes start at pc=0
            CAPTURE(k);
            CAPTURE(pc);
            CHECK(std::fabs(q[k][pc][label] - expect[k]) < 1e-3);
        }
}

TEST_CASE("td_target honors terminal transitions and the bootstrap formula") {
    auto ds = toy_dataset(4, 0, {12, 12, 12}, 3);
    DqnNetwork net(ds.dims, 11);
    QLearningSpec spec;

    Transition terminal{0, 2, 1, 1, 1, true};
    CHECK(td_target(terminal, net, spec, ds) == 1.0);
    Transition terminal_neg{1, 0, 0, -1, 0, true};
    CHECK(td_target(terminal_neg, net, spec, ds) == -1.0);

    // non-terminal: recompute r + gamma * max_a Q(s') independently
    Transition t{0, 1, 1, 1, 1, false};
    const auto q = net.forward(ds.train[1].tensor, 1);
    const double expect = 1.0 + spec.gamma * std::max(q[0], q[1]);
    CHECK(td_target(t, net, spec, ds) == expect);
    CHECK(1.0 + 0.99 * 4.0 == doctest::Approx(4.96));

    Transition bad{0, 99, 1, 1, 1, false};
    CHECK_THROWS_AS(td_target(bad, net, spec, ds), std::out_of_range);
}

TEST_CASE("split trunk/head forward equals the single-shot forward") {
    auto ds = toy_dataset(1, 0, {12, 12, 12}, 8);
    DqnNetwork net(ds.dims, 21);
    const auto full0 = net.forward(ds.train[0].tensor, 0);
    const auto full1 = net.forward(ds.train[0].tensor, 1);
    net.forward_trunk(ds.train[0].tensor);
    const auto h1 = net.forward_head(1);
    const auto h0 = net.forward_head(0);
    CHECK(h0 == full0);
    CHECK(h1 == full1);
}

TEST_CASE("an oracle policy collects +5, an inverted one -5") {
    auto ds = toy_dataset(1, 0, {12, 12, 12}, 4);
    ds.train[0].label = 1;
    QLearningSpec spec;
    ReplayBuffer buffer;
    nn::Adam<float> opt;
    EpsilonSchedule greedy{0.0, 0.0, 0.0, 0};
    Rng rng(55);

    DqnNetwork net(ds.dims, 5);
    rig_constant_q(net, 0.0f, 1.0f);  // always predicts tumor = true label
    auto log = run_episode(net, ds, greedy, spec, buffer, opt, rng);
    CHECK(log.reward_sum == 5);
    CHECK(log.transitions.size() == 5);

    rig_constant_q(net, 1.0f, 0.0f);  // inverted oracle
    EpsilonSchedule greedy2{0.0, 0.0, 0.0, 0};
    log = run_episode(net, ds, greedy2, spec, buffer, opt, rng);
    CHECK(log.reward_sum == -5);

    // exactly 5 transitions per episode, only the last terminal
    for (std::size_t i = 0; i < log.transitions.size(); ++i)
        CHECK(log.transitions[i].terminal == (i == 4));
}

TEST_CASE("episodes decay epsilon per step and store transitions that obey the reward identity") {
    auto ds = toy_dataset(6, 0, {12, 12, 12}, 6);
    QLearningSpec spec;
    spec.batch = 4;
    ReplayBuffer buffer(100);
    nn::Adam<float> opt(spec.adam);
    DqnNetwork net(ds.dims, 7);
    for (auto& [name, t] : net.parameters()) opt.attach(*t, name);
    EpsilonSchedule schedule;
    Rng rng(66);

    for (int ep = 0; ep < 4; ++ep) run_episode(net, ds, schedule, spec, buffer, opt, rng);
    CHECK(schedule.steps == 20);  // one decay per environment step
    CHECK(buffer.size() == 20);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const auto& t = buffer.at(i);
        CHECK(t.reward == 2 * t.pred_corr_new - 1);
    }
    CHECK(opt.step_count() > 0);  // updates began once the buffer reached batch size
}

TEST_CASE("evaluate_testset matches the all-normal baseline on a 40/21 split") {
    auto ds = toy_dataset(2, 61, {12, 12, 12}, 10, 40);
    DqnNetwork net(ds.dims, 3);
    rig_constant_q(net, 1.0f, 0.0f);  // constant class 0
    const auto eval = evaluate_testset(net, ds);
    CHECK(eval.predictions.size() == 61);
    CHECK(eval.accuracy == doctest::Approx(40.0 / 61.0).epsilon(1e-12));
    CHECK(40.0 / 61.0 == doctest::Approx(0.6557).epsilon(1e-3));
}

TEST_CASE("evaluation is side-effect free") {
    auto ds = toy_dataset(2, 4, {12, 12, 12}, 12);
    DqnNetwork net(ds.dims, 9);
    auto params_before = [&]() {
        std::vector<std::vector<float>> snap;
        for (auto& [name, t] : net.parameters()) snap.push_back(t->data);
        return snap;
    }();

    const auto e1 = evaluate_testset(net, ds);
    const auto e2 = evaluate_testset(net, ds);
    CHECK(e1.predictions == e2.predictions);
    CHECK(e1.accuracy == e2.accuracy);

    std::size_t i = 0;
    for (auto& [name, t] : net.parameters()) CHECK(t->data == params_before[i++]);
}

TEST_CASE("train_rl evaluates on schedule and is deterministic per seed") {
    testsup::TempDir tmp("rlmetrics");
    auto ds = toy_dataset(6, 4, {12, 12, 12}, 20);
    QLearningSpec spec;
    spec.episodes = 12;
    spec.test_every = 5;
    spec.batch = 6;

    const auto r1 = train_rl(ds, spec, 31);
    REQUIRE(r1.metrics.size() == 12);
    int with_test = 0;
    for (const auto& row : r1.metrics) with_test += row.has_test ? 1 : 0;
    CHECK(with_test == 3);  // episodes 5, 10 and the final 12
    CHECK(r1.metrics.back().has_test);
    for (const auto& row : r1.metrics) {
        CHECK(row.mean_train_reward >= -1.0);
        CHECK(row.mean_train_reward <= 1.0);
    }

    const auto r2 = train_rl(ds, spec, 31);
    const auto pa = r1.net.parameters();
    const auto pb = r2.net.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);

    write_metrics_csv(tmp.file("a.csv"), r1.metrics);
    write_metrics_csv(tmp.file("b.csv"), r2.metrics);
    std::ifstream fa(tmp.file("a.csv")), fb(tmp.file("b.csv"));
    const std::string ca((std::istreambuf_iterator<char>(fa)), {});
    const std::string cb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ca == cb);
    CHECK(ca.find("episode,epsilon,mean_train_reward,test_accuracy") == 0);
}
