#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxrl/adam.hpp"
#include "voxrl/network.hpp"
#include "voxrl/rng.hpp"
#include "voxrl/volume.hpp"

namespace voxrl::rl {

// State of the classification MDP: which training image, and whether the
// previous prediction was correct. Every episode starts with pred_corr = 0.
struct State {
    int image_index = 0;
    int pred_corr = 0;
};

// Actions: 0 = predict normal, 1 = predict tumor.

struct Transition {
    int pred_corr_prev = 0;
    int image_index = 0;
    int action = 0;
    int reward = 0;  // +1 or -1
    int pred_corr_new = 0;
    bool terminal = false;
};

struct StepOutcome {
    int reward;
    int pred_corr_new;
};

// pred_corr_new = Kronecker delta(action, label); reward = +1 if correct,
// -1 otherwise.
StepOutcome env_step(int label, int action);

// FIFO ring of the most recent transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 15000);

    void push(const Transition& t);
    // n distinct indices drawn uniformly without replacement; std::nullopt
    // while the buffer holds fewer than n transitions.
    std::optional<std::vector<Transition>> sample(std::size_t n, Rng& rng) const;

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const;  // 0 = oldest surviving

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // next slot to overwrite
    std::size_t size_ = 0;
    std::vector<Transition> ring_;
};

struct EpsilonSchedule {
    double eps0 = 0.7;
    double delta = 1e-4;
    double eps_min = 1e-4;
    std::int64_t steps = 0;

    double value_at(std::int64_t k) const {
        const double e = eps0 - double(k) * delta;
        return e < eps_min ? eps_min : e;
    }
    double value() const { return value_at(steps); }
    void decay() { ++steps; }
};

struct QLearningSpec {
    double gamma = 0.99;
    int steps_per_episode = 5;
    int episodes = 145;
    int batch = 24;
    int test_every = 10;
    nn::AdamConfig adam{};  // lr defaults to 1e-4
};

// With probability eps a uniform random action, otherwise argmax with ties
// broken toward action 0. Always consumes exactly one uniform draw plus one
// more when exploring.
int select_action(const std::array<double, 2>& q, double eps, Rng& rng);

// TD(0) target: r for terminal transitions, else r + gamma * max_a Q(s',a)
// with s' = (same image, pred_corr_new), bootstrapped from the live network.
double td_target(const Transition& t, DqnNetwork& net, const QLearningSpec& spec,
                 const Dataset& data);

struct EpisodeLog {
    std::vector<Transition> transitions;
    int reward_sum = 0;
};

// One episode: a uniformly sampled training image, pred_corr = 0, exactly
// steps_per_episode steps. Each step runs forward, epsilon-greedy selection,
// env_step, pushes the transition (last step terminal), then one batch
// update if the buffer has reached batch size, and decays epsilon.
EpisodeLog run_episode(DqnNetwork& net, const Dataset& data, EpsilonSchedule& schedule,
                       const QLearningSpec& spec, ReplayBuffer& buffer, nn::Adam<float>& opt,
                       Rng& rng);

struct EvalResult {
    std::vector<int> predictions;  // aligned with data.test
    double accuracy = 0.0;
};

// One forward per test image with pred_corr = 0, prediction = argmax_a Q.
// No buffer writes, no updates, no epsilon decay.
EvalResult evaluate_testset(DqnNetwork& net, const Dataset& data);

struct MetricsRow {
    int episode = 0;
    double epsilon = 0.0;
    double mean_train_reward = 0.0;
    bool has_test = false;
    double test_accuracy = 0.0;
};

struct TrainRlResult {
    DqnNetwork net;
    std::vector<MetricsRow> metrics;
};

TrainRlResult train_rl(const Dataset& data, const QLearningSpec& spec, std::uint64_t seed);

// "episode,epsilon,mean_train_reward,test_accuracy"; the accuracy column is
// empty on non-evaluation rows.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace voxrl::rl
