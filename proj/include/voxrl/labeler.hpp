#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "voxrl/tensor.hpp"

namespace voxrl::nlp {

struct LabeledImpression {
    std::string id;
    std::string text;
    int label = 0;  // 0 = normal, 1 = tumor
};

// Unordered pair of distinct impression ids, canonically id_a < id_b.
struct ImpressionPair {
    std::string id_a;
    std::string id_b;
    bool same_class = false;
};

// All C(N,2) unordered pairs in lexicographic order; same_class when the two
// labels agree.
std::vector<ImpressionPair> generate_pairs(const std::vector<LabeledImpression>& impressions);

// Maps a text to a unit-norm embedding. Implementations carry their own
// trainable parameters; a transformer-backed encoder can be swapped in
// behind this interface.
class SentenceEncoder {
public:
    virtual ~SentenceEncoder() = default;

    virtual int dim() const = 0;
    virtual std::vector<double> encode(std::string_view text) const = 0;

    // Cosine-contrastive training over labeled pairs: same-class pairs pull
    // toward cosine 1, different-class pairs push below the margin. Returns
    // the per-epoch mean loss.
    virtual std::vector<double> train(const std::vector<LabeledImpression>& impressions,
                                      const std::vector<ImpressionPair>& pairs, int epochs,
                                      double margin, double lr, std::uint64_t seed) = 0;

    virtual void save(const std::string& path) const = 0;
    virtual void load(const std::string& path) = 0;
};

// Bundled toy encoder: tokens hashed into buckets, mean-pooled, one trainable
// dense layer (identity activation), L2 normalization.
class HashingEncoder final : public SentenceEncoder {
public:
    explicit HashingEncoder(int buckets = 512, int out_dim = 64, std::uint64_t seed = 0);

    int dim() const override { return out_dim_; }
    std::vector<double> encode(std::string_view text) const override;
    std::vector<double> train(const std::vector<LabeledImpression>& impressions,
                              const std::vector<ImpressionPair>& pairs, int epochs,
                              double margin, double lr, std::uint64_t seed) override;
    void save(const std::string& path) const override;
    void load(const std::string& path) override;

    int buckets() const { return buckets_; }

private:
    // token-bucket histogram normalized by token count
    std::vector<std::pair<int, double>> bag(std::string_view text) const;
    std::vector<double> project(const std::vector<std::pair<int, double>>& bag) const;

    int buckets_;
    int out_dim_;
    nn::TensorD weight_;  // [out_dim, buckets]
    nn::TensorD bias_;    // [out_dim]
};

// Lowercased runs of [a-z0-9].
std::vector<std::string> tokenize(std::string_view text);

struct LabelPrediction {
    int label = 0;
    double confidence = 0.0;  // cosine gap between the two class centroids
};

// Nearest class centroid by cosine; ties go to class 0 with zero confidence.
LabelPrediction predict_label(const SentenceEncoder& encoder,
                              const std::vector<LabeledImpression>& labeled_refs,
                              std::string_view query);

struct Report {
    std::string id;
    std::string impression;
    std::optional<int> label;
};

// JSON-lines {"id":..., "impression":..., "label":0|1 optional}
std::vector<Report> read_reports(const std::string& path);

struct LabeledId {
    std::string id;
    int label = 0;
    double confidence = 0.0;
};

// Predicts a label for every report; every report id must appear in
// manifest_ids (the volumes the labels will feed).
std::vector<LabeledId> label_manifest(const SentenceEncoder& encoder,
                                      const std::vector<LabeledImpression>& labeled_refs,
                                      const std::vector<Report>& reports,
                                      const std::set<std::string>& manifest_ids);

// JSON-lines {"id":..., "label":0|1, "confidence":float}
void write_label_map(const std::string& path, const std::vector<LabeledId>& rows);
std::map<std::string, int> read_label_map(const std::string& path);

}  // namespace voxrl::nlp
