#include "voxrl/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "voxrl/adam.hpp"
#include "voxrl/checkpoint.hpp"
#include "voxrl/errors.hpp"
#include "voxrl/layers.hpp"
#include "voxrl/rng.hpp"

namespace voxrl::nlp {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        const char lc = (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c;
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
            cur.push_back(lc);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::vector<ImpressionPair> generate_pairs(const std::vector<LabeledImpression>& impressions) {
    if (impressions.size() < 2)
        return {};
    std::vector<const LabeledImpression*> sorted;
    sorted.reserve(impressions.size());
    for (const auto& imp : impressions) sorted.push_back(&imp);
    std::sort(sorted.begin(), sorted.end(),
              [](const LabeledImpression* a, const LabeledImpression* b) { return a->id < b->id; });
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        if (sorted[i]->id == sorted[i + 1]->id)
            throw std::invalid_argument("generate_pairs: duplicate id '" + sorted[i]->id + "'");

    std::vector<ImpressionPair> pairs;
    pairs.reserve(impressions.size() * (impressions.size() - 1) / 2);
    for (std::size_t i = 0; i < sorted.size(); ++i)
        for (std::size_t j = i + 1; j < sorted.size(); ++j)
            pairs.push_back(ImpressionPair{sorted[i]->id, sorted[j]->id,
                                           sorted[i]->label == sorted[j]->label});
    return pairs;
}

HashingEncoder::HashingEncoder(int buckets, int out_dim, std::uint64_t seed)
    : buckets_(buckets), out_dim_(out_dim) {
    if (buckets < 1 || out_dim < 1)
        throw std::invalid_argument("encoder: buckets and out_dim must be >= 1");
    Rng rng = Rng(seed).fork("hash-encoder");
    weight_ = nn::glorot_init<double>({out_dim, buckets}, buckets, out_dim, rng);
    bias_ = nn::TensorD({out_dim});
}

std::vector<std::pair<int, double>> HashingEncoder::bag(std::string_view text) const {
    const auto tokens = tokenize(text);
    std::map<int, double> hist;
    for (const auto& t : tokens) hist[int(hash64(t) % std::uint64_t(buckets_))] += 1.0;
    std::vector<std::pair<int, double>> out(hist.begin(), hist.end());
    if (!tokens.empty())
        for (auto& [b, w] : out) w /= double(tokens.size());
    return out;
}

std::vector<double> HashingEncoder::project(
    const std::vector<std::pair<int, double>>& bag) const {
    std::vector<double> u(bias_.data.begin(), bias_.data.end());
    for (const auto& [b, w] : bag)
        for (int i = 0; i < out_dim_; ++i)
            u[std::size_t(i)] += w * weight_.data[std::size_t(i) * buckets_ + b];
    return u;
}

namespace {

// Normalizes in place; falls back to e0 for a vanishing vector so the output
// always has unit norm.
double normalize(std::vector<double>& v) {
    double n2 = 0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n < 1e-12) {
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = 1.0;
        return 0.0;
    }
    for (double& x : v) x /= n;
    return n;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

std::vector<double> HashingEncoder::encode(std::string_view text) const {
    auto u = project(bag(text));
    normalize(u);
    return u;
}

std::vector<double> HashingEncoder::train(const std::vector<LabeledImpression>& impressions,
                                          const std::vector<ImpressionPair>& pairs, int epochs,
                                          double margin, double lr, std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("train: no pairs");
    if (epochs < 0) throw std::invalid_argument("train: negative epochs");

    std::map<std::string, const LabeledImpression*> by_id;
    for (const auto& imp : impressions) by_id[imp.id] = &imp;
    for (const auto& p : pairs)
        if (!by_id.count(p.id_a) || !by_id.count(p.id_b))
            throw std::invalid_argument("train: pair references unknown impression id");

    nn::Adam<double> opt({lr});
    opt.attach(weight_, "encoder.weight");
    opt.attach(bias_, "encoder.bias");
    Rng rng = Rng(seed).fork("encoder-train");

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> losses;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + std::size_t(rng.uniform_int(int(order.size() - i)));
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0;
        for (const std::size_t pi : order) {
            const auto& pair = pairs[pi];
            const auto bag_a = bag(by_id[pair.id_a]->text);
            const auto bag_b = bag(by_id[pair.id_b]->text);
            auto u = project(bag_a);
            auto v = project(bag_b);
            auto uh = u, vh = v;
            const double nu = normalize(uh);
            const double nv = normalize(vh);
            const double s = dot(uh, vh);

            double loss, dl_ds;
            if (pair.same_class) {
                loss = (1.0 - s) * (1.0 - s);
                dl_ds = -2.0 * (1.0 - s);
            } else if (s > margin) {
                loss = (s - margin) * (s - margin);
                dl_ds = 2.0 * (s - margin);
            } else {
                loss = 0.0;
                dl_ds = 0.0;
            }
            epoch_loss += loss;

            opt.zero_grad();
            if (dl_ds != 0.0 && nu > 0.0 && nv > 0.0) {
                // ds/du = (vh - s*uh)/|u|, ds/dv = (uh - s*vh)/|v|
                std::vector<double> du(static_cast<std::size_t>(out_dim_), 0.0);
                std::vector<double> dv(static_cast<std::size_t>(out_dim_), 0.0);
                for (int i = 0; i < out_dim_; ++i) {
                    du[std::size_t(i)] =
                        dl_ds * (vh[std::size_t(i)] - s * uh[std::size_t(i)]) / nu;
                    dv[std::size_t(i)] =
                        dl_ds * (uh[std::size_t(i)] - s * vh[std::size_t(i)]) / nv;
                }
                for (int i = 0; i < out_dim_; ++i) {
                    bias_.grad[std::size_t(i)] += du[std::size_t(i)] + dv[std::size_t(i)];
                    for (const auto& [b, w] : bag_a)
                        weight_.grad[std::size_t(i) * buckets_ + b] += du[std::size_t(i)] * w;
                    for (const auto& [b, w] : bag_b)
                        weight_.grad[std::size_t(i) * buckets_ + b] += dv[std::size_t(i)] * w;
                }
            }
            opt.step();
        }
        losses.push_back(epoch_loss / double(pairs.size()));
        if (!std::isfinite(losses.back()))
            throw DivergenceError("non-finite encoder loss in epoch " + std::to_string(epoch + 1));
    }
    return losses;
}

namespace {
constexpr char kEncoderMagic[4] = {'E', 'N', 'C', 'W'};
}

void HashingEncoder::save(const std::string& path) const {
    nn::Tensor w({out_dim_, buckets_}), b({out_dim_});
    for (std::size_t i = 0; i < weight_.data.size(); ++i) w.data[i] = float(weight_.data[i]);
    for (std::size_t i = 0; i < bias_.data.size(); ++i) b.data[i] = float(bias_.data[i]);
    save_checkpoint(path, kEncoderMagic, {{"dense.weight", &w}, {"dense.bias", &b}});
}

void HashingEncoder::load(const std::string& path) {
    nn::Tensor w({out_dim_, buckets_}), b({out_dim_});
    std::vector<std::pair<std::string, nn::Tensor*>> groups{{"dense.weight", &w},
                                                            {"dense.bias", &b}};
    load_checkpoint(path, kEncoderMagic, groups);
    for (std::size_t i = 0; i < w.data.size(); ++i) weight_.data[i] = double(w.data[i]);
    for (std::size_t i = 0; i < b.data.size(); ++i) bias_.data[i] = double(b.data[i]);
}

LabelPrediction predict_label(const SentenceEncoder& encoder,
                              const std::vector<LabeledImpression>& labeled_refs,
                              std::string_view query) {
    std::vector<double> centroid[2];
    int counts[2] = {0, 0};
    centroid[0].assign(std::size_t(encoder.dim()), 0.0);
    centroid[1].assign(std::size_t(encoder.dim()), 0.0);
    for (const auto& ref : labeled_refs) {
        if (ref.label != 0 && ref.label != 1)
            throw std::invalid_argument("predict_label: labels must be 0 or 1");
        const auto e = encoder.encode(ref.text);
        for (std::size_t i = 0; i < e.size(); ++i) centroid[ref.label][i] += e[i];
        ++counts[ref.label];
    }
    if (counts[0] == 0 || counts[1] == 0)
        throw std::invalid_argument("predict_label: both classes must be represented in refs");
    normalize(centroid[0]);
    normalize(centroid[1]);

    const auto q = encoder.encode(query);
    const double cos0 = dot(q, centroid[0]);
    const double cos1 = dot(q, centroid[1]);
    if (cos1 > cos0) return LabelPrediction{1, cos1 - cos0};
    return LabelPrediction{0, cos0 - cos1};  // tie lands here with zero confidence
}

std::vector<Report> read_reports(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open reports: " + path);
    std::vector<Report> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("reports line " + std::to_string(lineno) + ": " + e.what());
        }
        Report r;
        r.id = j.at("id").get<std::string>();
        r.impression = j.at("impression").get<std::string>();
        if (j.contains("label")) r.label = j.at("label").get<int>();
        const auto trimmed_empty =
            r.impression.find_first_not_of(" \t\r\n") == std::string::npos;
        if (trimmed_empty)
            throw std::runtime_error("reports line " + std::to_string(lineno) +
                                     ": empty impression");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<LabeledId> label_manifest(const SentenceEncoder& encoder,
                                      const std::vector<LabeledImpression>& labeled_refs,
                                      const std::vector<Report>& reports,
                                      const std::set<std::string>& manifest_ids) {
    std::string orphans;
    for (const auto& r : reports)
        if (!manifest_ids.count(r.id)) orphans += " " + r.id;
    if (!orphans.empty())
        throw std::invalid_argument("reports with no matching manifest volume:" + orphans);

    std::vector<LabeledId> rows;
    rows.reserve(reports.size());
    for (const auto& r : reports) {
        const auto pred = predict_label(encoder, labeled_refs, r.impression);
        rows.push_back(LabeledId{r.id, pred.label, pred.confidence});
    }
    return rows;
}

void write_label_map(const std::string& path, const std::vector<LabeledId>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : rows) {
        json j{{"id", r.id}, {"label", r.label}, {"confidence", r.confidence}};
        os << j.dump() << "\n";
    }
}

std::map<std::string, int> read_label_map(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open label map: " + path);
    std::map<std::string, int> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        const int label = j.at("label").get<int>();
        if (label != 0 && label != 1)
            throw std::runtime_error("label map: labels must be 0 or 1");
        out[j.at("id").get<std::string>()] = label;
    }
    return out;
}

}  // namespace voxrl::nlp
