#include "voxrl/rl.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "voxrl/losses.hpp"

namespace voxrl::rl {

namespace {

void require_binary(int v, const char* what) {
    if (v != 0 && v != 1)
        throw std::invalid_argument(std::string(what) + " must be 0 or 1, got " +
                                    std::to_string(v));
}

const DatasetItem& train_item(const Dataset& data, int index) {
    if (index < 0 || std::size_t(index) >= data.train.size())
        throw std::out_of_range("image index " + std::to_string(index) +
                                " outside the training manifest (size " +
                                std::to_string(data.train.size()) + ")");
    return data.train[std::size_t(index)];
}

// One batch update: per-transition TD targets from the live network, masked
// MSE averaged over the batch, a single Adam step. The trunk pass is shared
// between the bootstrap and training heads since both see the same image.
void batch_update(DqnNetwork& net, const Dataset& data, const QLearningSpec& spec,
                  const std::vector<Transition>& batch, nn::Adam<float>& opt) {
    opt.zero_grad();
    const double inv_b = 1.0 / double(batch.size());
    double batch_loss = 0.0;
    for (const auto& t : batch) {
        const auto& item = train_item(data, t.image_index);
        net.forward_trunk(item.tensor);
        double target = double(t.reward);
        if (!t.terminal) {
            const auto qn = net.forward_head(t.pred_corr_new);
            target += spec.gamma * std::max(qn[0], qn[1]);
        }
        const auto q = net.forward_head(t.pred_corr_prev);
        nn::TensorT<float> qt({2});
        qt.data = {float(q[0]), float(q[1])};
        const auto loss = nn::masked_mse_loss(qt, t.action, float(target));
        batch_loss += double(loss.loss) * inv_b;
        net.backward(t.action, double(loss.grad.data[std::size_t(t.action)]) * inv_b);
    }
    if (!std::isfinite(batch_loss))
        throw DivergenceError("non-finite batch loss at adam step " +
                              std::to_string(opt.step_count() + 1));
    opt.step();
}

}  // namespace

StepOutcome env_step(int label, int action) {
    require_binary(label, "label");
    require_binary(action, "action");
    const int pred_corr = action == label ? 1 : 0;
    return StepOutcome{pred_corr == 1 ? 1 : -1, pred_corr};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity), ring_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
    ring_[head_] = t;
    head_ = (head_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay buffer index");
    const std::size_t oldest = size_ < capacity_ ? 0 : head_;
    return ring_[(oldest + i) % capacity_];
}

std::optional<std::vector<Transition>> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    if (size_ < n) return std::nullopt;
    // partial Fisher-Yates over the index range
    std::vector<std::uint32_t> idx(size_);
    for (std::size_t i = 0; i < size_; ++i) idx[i] = std::uint32_t(i);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + std::size_t(rng.uniform_int(int(size_ - i)));
        std::swap(idx[i], idx[j]);
        out.push_back(at(idx[i]));
    }
    return out;
}

int select_action(const std::array<double, 2>& q, double eps, Rng& rng) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("epsilon must be in [0,1]");
    if (rng.uniform01() < eps) return rng.uniform_int(2);
    return q[1] > q[0] ? 1 : 0;  // tie goes to action 0
}

double td_target(const Transition& t, DqnNetwork& net, const QLearningSpec& spec,
                 const Dataset& data) {
    if (t.terminal) return double(t.reward);
    const auto& item = train_item(data, t.image_index);
    const auto q = net.forward(item.tensor, t.pred_corr_new);
    return double(t.reward) + spec.gamma * std::max(q[0], q[1]);
}

EpisodeLog run_episode(DqnNetwork& net, const Dataset& data, EpsilonSchedule& schedule,
                       const QLearningSpec& spec, ReplayBuffer& buffer, nn::Adam<float>& opt,
                       Rng& rng) {
    if (data.train.empty()) throw std::invalid_argument("run_episode: empty training split");
    EpisodeLog log;
    const int image_index = rng.uniform_int(int(data.train.size()));
    const auto& item = data.train[std::size_t(image_index)];
    int pred_corr = 0;

    for (int step = 0; step < spec.steps_per_episode; ++step) {
        const auto q = net.forward(item.tensor, pred_corr);
        const int action = select_action(q, schedule.value(), rng);
        const auto outcome = env_step(item.label, action);
        Transition t{pred_corr, image_index, action, outcome.reward, outcome.pred_corr_new,
                     step == spec.steps_per_episode - 1};
        buffer.push(t);
        log.transitions.push_back(t);
        log.reward_sum += outcome.reward;
        pred_corr = outcome.pred_corr_new;

        if (auto batch = buffer.sample(std::size_t(spec.batch), rng))
            batch_update(net, data, spec, *batch, opt);
        schedule.decay();
    }
    return log;
}

EvalResult evaluate_testset(DqnNetwork& net, const Dataset& data) {
    if (data.test.empty()) throw std::invalid_argument("evaluate_testset: empty test split");
    EvalResult r;
    int correct = 0;
    for (const auto& item : data.test) {
        const auto q = net.forward(item.tensor, 0);
        const int pred = q[1] > q[0] ? 1 : 0;
        r.predictions.push_back(pred);
        if (pred == item.label) ++correct;
    }
    r.accuracy = double(correct) / double(data.test.size());
    return r;
}

TrainRlResult train_rl(const Dataset& data, const QLearningSpec& spec, std::uint64_t seed) {
    if (data.train.empty()) throw std::invalid_argument("train_rl: empty training split");
    TrainRlResult result{DqnNetwork(data.dims, mix64(seed, hash64("dqn-init"))), {}};
    nn::Adam<float> opt(spec.adam);
    for (auto& [name, t] : result.net.parameters()) opt.attach(*t, name);

    ReplayBuffer buffer;
    EpsilonSchedule schedule;
    Rng rng = Rng(seed).fork("train-rl");

    for (int ep = 1; ep <= spec.episodes; ++ep) {
        const auto log = run_episode(result.net, data, schedule, spec, buffer, opt, rng);
        MetricsRow row{ep, schedule.value(),
                       double(log.reward_sum) / double(spec.steps_per_episode), false, 0.0};
        const bool eval_now =
            (spec.test_every > 0 && ep % spec.test_every == 0) || ep == spec.episodes;
        if (eval_now && !data.test.empty()) {
            row.has_test = true;
            row.test_accuracy = evaluate_testset(result.net, data).accuracy;
        }
        result.metrics.push_back(row);
    }
    return result;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "episode,epsilon,mean_train_reward,test_accuracy\n";
    char buf[160];
    for (const auto& r : rows) {
        if (r.has_test)
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.episode, r.epsilon,
                          r.mean_train_reward, r.test_accuracy);
        else
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,\n", r.episode, r.epsilon,
                          r.mean_train_reward);
        os << buf;
    }
}

}  // namespace voxrl::rl
