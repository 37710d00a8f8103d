// voxrl: phantom data generation, RL and supervised training, report label
// extraction, and paired evaluation, glued together through files so every
// stage is reproducible from its artifacts.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "voxrl/labeler.hpp"
#include "voxrl/rl.hpp"
#include "voxrl/sdl.hpp"
#include "voxrl/stats.hpp"
#include "voxrl/version.hpp"
#include "voxrl/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxrl;

namespace {

struct PredictionRow {
    std::string id;
    int truth = 0;
    int pred = 0;
};

void write_predictions(const std::string& path, const std::vector<DatasetItem>& items,
                       const std::vector<int>& preds) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < items.size(); ++i) {
        json j{{"id", items[i].id}, {"truth", items[i].label}, {"pred", preds[i]}};
        os << j.dump() << "\n";
    }
}

std::vector<PredictionRow> read_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open predictions: " + path);
    std::vector<PredictionRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        rows.push_back(PredictionRow{j.at("id").get<std::string>(), j.at("truth").get<int>(),
                                     j.at("pred").get<int>()});
    }
    return rows;
}

// Resolved config + run metadata, written into every run directory. The
// config echo comes from the root app so it carries the [subcommand]
// sections and reloads through --config as-is.
CLI::App* g_root = nullptr;

void write_run_artifacts(CLI::App* sub, const std::string& out_dir, std::uint64_t seed) {
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "config.toml");
        os << g_root->config_to_str(true, true);
    }
    json info{{"version", kVersion}, {"command", sub->get_name()}, {"seed", seed}};
    std::ofstream os(fs::path(out_dir) / "run-info.json");
    os << info.dump(2) << "\n";
}

std::map<std::string, int> load_label_override(const std::string& labels_path) {
    return nlp::read_label_map(labels_path);
}

// ---- gen-data ------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    std::string preset = "desk";
    std::uint64_t seed = 0;
    SplitCounts counts;
    double noise_sigma = -1.0;     // <0 keeps the preset value
    double lesion_contrast = -1.0;
    int threads = 0;
};

int cmd_gen_data(CLI::App* sub, const GenDataArgs& args) {
    if (args.threads > 0) nn::set_num_threads(args.threads);
    PhantomConfig cfg = args.preset == "paper" ? PhantomConfig::paper() : PhantomConfig::desk();
    cfg.rng_seed = args.seed;
    if (args.noise_sigma >= 0) cfg.noise_sigma = args.noise_sigma;
    if (args.lesion_contrast >= 0) cfg.lesion_contrast = args.lesion_contrast;
    cfg.validate();

    write_run_artifacts(sub, args.out, args.seed);
    fs::create_directories(fs::path(args.out) / "volumes");

    std::vector<LabeledVolume> volumes;
    const auto make = [&](const char* split, int label, int count) {
        for (int i = 0; i < count; ++i) {
            char id[64];
            std::snprintf(id, sizeof id, "%s-%s-%03d", split, label == 0 ? "normal" : "tumor",
                          i);
            auto lv = generate_phantom(cfg, label, id);
            lv.split = split;
            lv.volume = pad_z(lv.volume, cfg.out_dims[2]);
            write_volume((fs::path(args.out) / "volumes" / (lv.id + ".volb")).string(),
                         lv.volume);
            volumes.push_back(std::move(lv));
        }
    };
    make("train", 0, args.counts.train_normal);
    make("train", 1, args.counts.train_tumor);
    make("test", 0, args.counts.test_normal);
    make("test", 1, args.counts.test_tumor);

    const auto rows = build_manifest(volumes, args.counts, "volumes/");
    write_manifest((fs::path(args.out) / "manifest.jsonl").string(), rows);
    std::printf("wrote %zu volumes (%dx%dx%d) and manifest to %s\n", volumes.size(),
                cfg.out_dims[0], cfg.out_dims[1], cfg.out_dims[2], args.out.c_str());
    return 0;
}

// ---- train-rl ------------------------------------------------------------

struct TrainRlArgs {
    std::string manifest;
    std::string out;
    std::string labels;
    std::uint64_t seed = 0;
    rl::QLearningSpec spec;
    int threads = 0;
};

int cmd_train_rl(CLI::App* sub, const TrainRlArgs& args) {
    if (args.threads > 0) nn::set_num_threads(args.threads);
    write_run_artifacts(sub, args.out, args.seed);

    std::map<std::string, int> override;
    const Dataset data = args.labels.empty()
                             ? Dataset::load(args.manifest)
                             : (override = load_label_override(args.labels),
                                Dataset::load(args.manifest, &override));

    auto result = rl::train_rl(data, args.spec, args.seed);
    rl::write_metrics_csv((fs::path(args.out) / "metrics.csv").string(), result.metrics);
    result.net.save((fs::path(args.out) / "dqn.ckpt").string());
    if (!data.test.empty()) {
        const auto eval = rl::evaluate_testset(result.net, data);
        write_predictions((fs::path(args.out) / "test_predictions.jsonl").string(), data.test,
                          eval.predictions);
        std::printf("final test accuracy %.4f over %zu images\n", eval.accuracy,
                    data.test.size());
    }
    return 0;
}

// ---- train-sdl -----------------------------------------------------------

struct TrainSdlArgs {
    std::string manifest;
    std::string out;
    std::string labels;
    sdl::SdlTrainConfig config;
    int threads = 0;
};

int cmd_train_sdl(CLI::App* sub, const TrainSdlArgs& args) {
    if (args.threads > 0) nn::set_num_threads(args.threads);
    write_run_artifacts(sub, args.out, args.config.seed);

    std::map<std::string, int> override;
    const Dataset data = args.labels.empty()
                             ? Dataset::load(args.manifest)
                             : (override = load_label_override(args.labels),
                                Dataset::load(args.manifest, &override));

    auto result = sdl::train_sdl(data, args.config);
    sdl::write_history_csv((fs::path(args.out) / "sdl_metrics.csv").string(), result.history);
    result.net.save((fs::path(args.out) / "sdl.ckpt").string());
    std::printf("final train accuracy %.4f after %d epochs\n",
                result.history.back().train_accuracy, args.config.epochs);
    if (!data.test.empty()) {
        const auto eval = sdl::predict_sdl(result.net, data.test);
        write_predictions((fs::path(args.out) / "test_predictions.jsonl").string(), data.test,
                          eval.predictions);
        std::printf("test accuracy %.4f over %zu images\n", eval.accuracy, data.test.size());
    }
    return 0;
}

// ---- labels-train ----------------------------------------------------------

struct LabelsTrainArgs {
    std::string reports;
    std::string out;
    int epochs = 12;
    double margin = 0.5;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    int buckets = 512;
    int dim = 64;
};

int cmd_labels_train(CLI::App* sub, const LabelsTrainArgs& args) {
    write_run_artifacts(sub, args.out, args.seed);
    const auto reports = nlp::read_reports(args.reports);
    std::vector<nlp::LabeledImpression> impressions;
    for (const auto& r : reports) {
        if (!r.label)
            throw std::runtime_error("labels-train: report '" + r.id + "' has no label");
        impressions.push_back(nlp::LabeledImpression{r.id, r.impression, *r.label});
    }
    const auto pairs = nlp::generate_pairs(impressions);
    std::printf("generated %zu pairs from %zu labeled impressions\n", pairs.size(),
                impressions.size());

    nlp::HashingEncoder encoder(args.buckets, args.dim, args.seed);
    const auto losses =
        encoder.train(impressions, pairs, args.epochs, args.margin, args.lr, args.seed);
    encoder.save((fs::path(args.out) / "encoder.ckpt").string());

    std::ofstream os(fs::path(args.out) / "encoder_loss.csv");
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, losses[i]);
        os << buf;
    }
    return 0;
}

// ---- labels-predict --------------------------------------------------------

struct LabelsPredictArgs {
    std::string encoder;
    std::string refs;
    std::string reports;
    std::string manifest;
    std::string out;
    int buckets = 512;
    int dim = 64;
};

int cmd_labels_predict(CLI::App* sub, const LabelsPredictArgs& args) {
    write_run_artifacts(sub, args.out, 0);
    if (!fs::exists(args.encoder))
        throw std::runtime_error("encoder checkpoint not found: " + args.encoder);

    nlp::HashingEncoder encoder(args.buckets, args.dim, 0);
    encoder.load(args.encoder);

    const auto ref_reports = nlp::read_reports(args.refs);
    std::vector<nlp::LabeledImpression> refs;
    for (const auto& r : ref_reports) {
        if (!r.label)
            throw std::runtime_error("labels-predict: reference '" + r.id + "' has no label");
        refs.push_back(nlp::LabeledImpression{r.id, r.impression, *r.label});
    }

    const auto reports = nlp::read_reports(args.reports);
    std::set<std::string> manifest_ids;
    for (const auto& row : read_manifest(args.manifest)) manifest_ids.insert(row.id);

    const auto rows = nlp::label_manifest(encoder, refs, reports, manifest_ids);
    nlp::write_label_map((fs::path(args.out) / "labels.jsonl").string(), rows);
    std::printf("predicted labels for %zu reports\n", rows.size());
    return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string pred_a;
    std::string pred_b;
    std::string out;
    std::string method = "exact";
    std::string curve;  // optional RL metrics csv
};

int cmd_eval(CLI::App* sub, const EvalArgs& args) {
    write_run_artifacts(sub, args.out, 0);
    auto a = read_predictions(args.pred_a);
    auto b = read_predictions(args.pred_b);
    const auto by_id = [](const PredictionRow& x, const PredictionRow& y) {
        return x.id < y.id;
    };
    std::sort(a.begin(), a.end(), by_id);
    std::sort(b.begin(), b.end(), by_id);

    std::string diff;
    {
        std::set<std::string> ids_a, ids_b;
        for (const auto& r : a) ids_a.insert(r.id);
        for (const auto& r : b) ids_b.insert(r.id);
        for (const auto& id : ids_a)
            if (!ids_b.count(id)) diff += " -" + id;
        for (const auto& id : ids_b)
            if (!ids_a.count(id)) diff += " +" + id;
    }
    if (!diff.empty())
        throw std::runtime_error("prediction files cover different image ids:" + diff);

    stats::PairedPredictions paired;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].truth != b[i].truth)
            throw std::runtime_error("truth disagrees between files for id " + a[i].id);
        paired.truth.push_back(a[i].truth);
        paired.pred_a.push_back(a[i].pred);
        paired.pred_b.push_back(b[i].pred);
    }

    std::vector<int> truths = paired.truth;
    const auto acc_a = stats::accuracy_confusion(paired.pred_a, truths);
    const auto acc_b = stats::accuracy_confusion(paired.pred_b, truths);
    const auto method = args.method == "chi2_corrected" ? stats::McNemarMethod::chi2_corrected
                                                        : stats::McNemarMethod::exact;
    const auto mc = stats::mcnemar(paired, method);

    json report{{"accuracy_a", acc_a.accuracy}, {"accuracy_b", acc_b.accuracy},
                {"b", mc.b},                    {"c", mc.c},
                {"statistic", mc.statistic},    {"p_value", mc.p_value},
                {"method", stats::method_name(mc.method)}};
    {
        std::ofstream os(fs::path(args.out) / "report.json");
        os << report.dump(2) << "\n";
    }
    std::printf("accuracy_a %.4f accuracy_b %.4f b %d c %d p %.6g (%s)\n", acc_a.accuracy,
                acc_b.accuracy, mc.b, mc.c, mc.p_value, stats::method_name(mc.method));

    if (!args.curve.empty()) {
        std::ifstream is(args.curve);
        if (!is) throw std::runtime_error("cannot open metrics csv: " + args.curve);
        std::ofstream os(fs::path(args.out) / "curve.csv");
        os << "episode,test_accuracy\n";
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            // episode,epsilon,mean_train_reward,test_accuracy
            const auto last_comma = line.rfind(',');
            const auto first_comma = line.find(',');
            if (last_comma == std::string::npos || last_comma + 1 >= line.size()) continue;
            os << line.substr(0, first_comma) << "," << line.substr(last_comma + 1) << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale RL volume classification with automated report labels"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default(true);
    app.set_config("--config", "", "Read options from a TOML file ([subcommand] sections)");

    GenDataArgs gen;
    auto* sub_gen = app.add_subcommand("gen-data", "generate labeled phantom volumes");
    sub_gen->add_option("--out", gen.out, "run directory")->required();
    sub_gen->add_option("--preset", gen.preset, "desk (32x32x16) or paper (64x64x36)")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub_gen->add_option("--seed", gen.seed, "rng seed");
    sub_gen->add_option("--train-normal", gen.counts.train_normal, "train normal count");
    sub_gen->add_option("--train-tumor", gen.counts.train_tumor, "train tumor count");
    sub_gen->add_option("--test-normal", gen.counts.test_normal, "test normal count");
    sub_gen->add_option("--test-tumor", gen.counts.test_tumor, "test tumor count");
    sub_gen->add_option("--noise-sigma", gen.noise_sigma, "override preset noise sigma");
    sub_gen->add_option("--lesion-contrast", gen.lesion_contrast,
                        "override preset lesion contrast");
    sub_gen->add_option("--threads", gen.threads, "worker threads");

    TrainRlArgs trl;
    auto* sub_trl = app.add_subcommand("train-rl", "train the Q-learning classifier");
    sub_trl->add_option("--manifest", trl.manifest, "manifest jsonl")->required();
    sub_trl->add_option("--out", trl.out, "run directory")->required();
    sub_trl->add_option("--labels", trl.labels, "label map jsonl replacing manifest labels");
    sub_trl->add_option("--seed", trl.seed, "rng seed");
    sub_trl->add_option("--episodes", trl.spec.episodes, "training episodes");
    sub_trl->add_option("--test-every", trl.spec.test_every, "episodes between evaluations");
    sub_trl->add_option("--batch", trl.spec.batch, "replay batch size");
    sub_trl->add_option("--lr", trl.spec.adam.lr, "adam learning rate");
    sub_trl->add_option("--gamma", trl.spec.gamma, "discount factor");
    sub_trl->add_option("--threads", trl.threads, "worker threads");

    TrainSdlArgs tsdl;
    auto* sub_tsdl = app.add_subcommand("train-sdl", "train the supervised baseline");
    sub_tsdl->add_option("--manifest", tsdl.manifest, "manifest jsonl")->required();
    sub_tsdl->add_option("--out", tsdl.out, "run directory")->required();
    sub_tsdl->add_option("--labels", tsdl.labels, "label map jsonl replacing manifest labels");
    sub_tsdl->add_option("--seed", tsdl.config.seed, "rng seed");
    sub_tsdl->add_option("--epochs", tsdl.config.epochs, "training epochs");
    sub_tsdl->add_option("--batch", tsdl.config.batch, "batch size");
    sub_tsdl->add_option("--lr", tsdl.config.lr, "adam learning rate");
    sub_tsdl->add_option("--threads", tsdl.threads, "worker threads");

    LabelsTrainArgs ltrain;
    auto* sub_ltrain = app.add_subcommand("labels-train", "train the sentence encoder on "
                                                          "labeled report impressions");
    sub_ltrain->add_option("--reports", ltrain.reports, "labeled reports jsonl")->required();
    sub_ltrain->add_option("--out", ltrain.out, "run directory")->required();
    sub_ltrain->add_option("--epochs", ltrain.epochs, "training epochs");
    sub_ltrain->add_option("--margin", ltrain.margin, "contrastive margin");
    sub_ltrain->add_option("--lr", ltrain.lr, "adam learning rate");
    sub_ltrain->add_option("--seed", ltrain.seed, "rng seed");
    sub_ltrain->add_option("--buckets", ltrain.buckets, "token hash buckets");
    sub_ltrain->add_option("--dim", ltrain.dim, "embedding dimension");

    LabelsPredictArgs lpred;
    auto* sub_lpred = app.add_subcommand("labels-predict", "predict labels for reports");
    sub_lpred->add_option("--encoder", lpred.encoder, "encoder checkpoint")->required();
    sub_lpred->add_option("--refs", lpred.refs, "labeled reference reports jsonl")->required();
    sub_lpred->add_option("--reports", lpred.reports, "reports jsonl to label")->required();
    sub_lpred->add_option("--manifest", lpred.manifest, "volume manifest the labels feed")
        ->required();
    sub_lpred->add_option("--out", lpred.out, "run directory")->required();
    sub_lpred->add_option("--buckets", lpred.buckets, "token hash buckets");
    sub_lpred->add_option("--dim", lpred.dim, "embedding dimension");

    EvalArgs ev;
    auto* sub_eval = app.add_subcommand("eval", "compare two prediction files");
    sub_eval->add_option("--pred-a", ev.pred_a, "predictions jsonl A")->required();
    sub_eval->add_option("--pred-b", ev.pred_b, "predictions jsonl B")->required();
    sub_eval->add_option("--out", ev.out, "run directory")->required();
    sub_eval->add_option("--method", ev.method, "exact or chi2_corrected")
        ->check(CLI::IsMember({"exact", "chi2_corrected"}));
    sub_eval->add_option("--curve", ev.curve, "RL metrics csv to emit an accuracy curve from");

    g_root = &app;
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1
    }

    try {
        if (sub_gen->parsed()) return cmd_gen_data(sub_gen, gen);
        if (sub_trl->parsed()) return cmd_train_rl(sub_trl, trl);
        if (sub_tsdl->parsed()) return cmd_train_sdl(sub_tsdl, tsdl);
        if (sub_ltrain->parsed()) return cmd_labels_train(sub_ltrain, ltrain);
        if (sub_lpred->parsed()) return cmd_labels_predict(sub_lpred, lpred);
        if (sub_eval->parsed()) return cmd_eval(sub_eval, ev);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
