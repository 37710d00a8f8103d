#include "voxrl/sdl.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "voxrl/adam.hpp"
#include "voxrl/losses.hpp"

namespace voxrl::sdl {

TrainSdlResult train_sdl(const Dataset& data, const SdlTrainConfig& config) {
    if (data.train.empty()) throw std::invalid_argument("train_sdl: empty training split");
    if (config.epochs < 1) throw std::invalid_argument("train_sdl: epochs must be >= 1");

    TrainSdlResult result{SdlNetwork(data.dims, mix64(config.seed, hash64("sdl-init"))), {}};
    nn::Adam<float> opt({config.lr});
    for (auto& [name, t] : result.net.parameters()) opt.attach(*t, name);

    Rng rng = Rng(config.seed).fork("train-sdl");
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t(0));

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // fresh shuffle each epoch from the run seed
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + std::size_t(rng.uniform_int(int(order.size() - i)));
            std::swap(order[i], order[j]);
        }

        double epoch_loss = 0.0;
        int correct = 0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t take = std::min<std::size_t>(std::size_t(config.batch),
                                                           order.size() - done);
            opt.zero_grad();
            const double inv_b = 1.0 / double(take);
            for (std::size_t k = 0; k < take; ++k) {
                const auto& item = data.train[order[done + k]];
                const double p = result.net.forward(item.tensor);
                const auto loss = nn::bce_loss(p, item.label);
                epoch_loss += loss.loss;
                if (SdlNetwork::decide(p) == item.label) ++correct;
                result.net.backward(double(loss.grad) * inv_b);
            }
            if (!std::isfinite(epoch_loss))
                throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch));
            opt.step();
            done += take;
        }
        result.history.push_back(EpochRow{epoch, epoch_loss / double(order.size()),
                                          double(correct) / double(order.size())});
    }
    return result;
}

SdlEval predict_sdl(SdlNetwork& net, const std::vector<DatasetItem>& items) {
    if (items.empty()) throw std::invalid_argument("predict_sdl: empty split");
    SdlEval eval;
    int correct = 0;
    for (const auto& item : items) {
        const int pred = SdlNetwork::decide(net.forward(item.tensor));
        eval.predictions.push_back(pred);
        if (pred == item.label) ++correct;
    }
    eval.accuracy = double(correct) / double(items.size());
    return eval;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "epoch,loss,train_accuracy\n";
    char buf[120];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", r.epoch, r.loss, r.train_accuracy);
        os << buf;
    }
}

}  // namespace voxrl::sdl
