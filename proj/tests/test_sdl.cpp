#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "voxrl/sdl.hpp"

using namespace voxrl;
using namespace voxrl::sdl;

namespace {

// Classes separated by mean intensity; trivially learnable.
Dataset separable_dataset(int per_class_train, int per_class_test, std::uint64_t seed) {
    Dataset ds;
    ds.dims = {12, 12, 12};
    Rng rng(seed);
    const auto make = [&](int label) {
        nn::Tensor t({1, 12, 12, 12});
        const double lo = label == 0 ? 0.0 : 0.6;
        testsup::fill_uniform(t, rng, lo, lo + 0.4);
        return t;
    };
    for (int i = 0; i < per_class_train; ++i) {
        ds.train.push_back(DatasetItem{"tr0-" + std::to_string(i), 0, make(0)});
        ds.train.push_back(DatasetItem{"tr1-" + std::to_string(i), 1, make(1)});
    }
    for (int i = 0; i < per_class_test; ++i) {
        ds.test.push_back(DatasetItem{"te0-" + std::to_string(i), 0, make(0)});
        ds.test.push_back(DatasetItem{"te1-" + std::to_string(i), 1, make(1)});
    }
    return ds;
}

void rig_output(SdlNetwork& net, float bias) {
    for (auto& [name, t] : net.parameters())
        if (name.rfind("out.", 0) == 0) {
            std::fill(t->data.begin(), t->data.end(), 0.0f);
            if (name == "out.bias") t->data[0] = bias;
        }
}

}  // namespace

TEST_CASE("loss is finite and recorded for every epoch") {
    auto ds = separable_dataset(3, 0, 1);
    SdlTrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch = 4;
    cfg.seed = 5;
    const auto r = train_sdl(ds, cfg);
    REQUIRE(r.history.size() == 8);
    for (const auto& row : r.history) {
        CHECK(std::isfinite(row.loss));
        CHECK(row.loss >= 0.0);
        CHECK(row.train_accuracy >= 0.0);
        CHECK(row.train_accuracy <= 1.0);
    }
    for (std::size_t i = 0; i < r.history.size(); ++i)
        CHECK(r.history[i].epoch == int(i) + 1);
}

TEST_CASE("identical seeds give identical loss series") {
    auto ds = separable_dataset(3, 0, 2);
    SdlTrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 9;
    const auto a = train_sdl(ds, cfg);
    const auto b = train_sdl(ds, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(a.history[i].train_accuracy == b.history[i].train_accuracy);
    }
}

TEST_CASE("a separable set is overfit quickly") {
    auto ds = separable_dataset(6, 3, 3);
    SdlTrainConfig cfg;
    cfg.epochs = 40;
    cfg.lr = 1e-3;
    cfg.seed = 17;
    auto r = train_sdl(ds, cfg);
    CHECK(r.history.back().train_accuracy == 1.0);
    CHECK(r.history.back().loss < r.history.front().loss);

    // an oracle-fit net scores perfectly on its own training split
    const auto train_eval = predict_sdl(r.net, ds.train);
    CHECK(train_eval.accuracy == 1.0);
}

TEST_CASE("degenerate constant-half output predicts class 1 everywhere") {
    auto ds = separable_dataset(2, 2, 4);
    SdlNetwork net(ds.dims, 7);
    rig_output(net, 0.0f);  // p = sigmoid(0) = 0.5 exactly, tie goes to 1
    const auto eval = predict_sdl(net, ds.test);
    for (int p : eval.predictions) CHECK(p == 1);
}

TEST_CASE("all-normal predictions on a 40/21 split score 40/61") {
    Dataset ds;
    ds.dims = {12, 12, 12};
    Rng rng(11);
    for (int i = 0; i < 61; ++i) {
        nn::Tensor t({1, 12, 12, 12});
        testsup::fill_uniform(t, rng, 0.0, 1.0);
        ds.test.push_back(DatasetItem{"t" + std::to_string(i), i < 40 ? 0 : 1, std::move(t)});
    }
    SdlNetwork net(ds.dims, 8);
    rig_output(net, -30.0f);  // p ~ 0, every prediction normal
    const auto eval = predict_sdl(net, ds.test);
    CHECK(eval.accuracy == doctest::Approx(40.0 / 61.0).epsilon(1e-12));
}

TEST_CASE("prediction is pure and training needs no test split") {
    auto ds = separable_dataset(2, 2, 5);
    ds.test.clear();
    SdlTrainConfig cfg;
    cfg.epochs = 2;
    const auto r = train_sdl(ds, cfg);  // must not touch the test split
    CHECK(r.history.size() == 2);

    auto ds2 = separable_dataset(2, 2, 6);
    SdlNetwork net(ds2.dims, 9);
    const auto e1 = predict_sdl(net, ds2.test);
    const auto e2 = predict_sdl(net, ds2.test);
    CHECK(e1.predictions == e2.predictions);
}

TEST_CASE("history csv has the documented header") {
    testsup::TempDir tmp("sdlcsv");
    std::vector<EpochRow> rows{{1, 0.5, 0.75}, {2, 0.25, 1.0}};
    write_history_csv(tmp.file("h.csv"), rows);
    std::ifstream is(tmp.file("h.csv"));
    std::string line;
    std::getline(is, line);
    CHECK(line == "epoch,loss,train_accuracy");
    std::getline(is, line);
    CHECK(line == "1,0.5,0.75");
}
