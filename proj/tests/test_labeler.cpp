#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "voxrl/labeler.hpp"

using namespace voxrl;
using namespace voxrl::nlp;

namespace {

double norm_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Canned-vector encoder for geometry tests of the centroid rule.
class StubEncoder final : public SentenceEncoder {
public:
    explicit StubEncoder(std::map<std::string, std::vector<double>> table)
        : table_(std::move(table)) {}
    int dim() const override { return 4; }
    std::vector<double> encode(std::string_view text) const override {
        return table_.at(std::string(text));
    }
    std::vector<double> train(const std::vector<LabeledImpression>&,
                              const std::vector<ImpressionPair>&, int, double, double,
                              std::uint64_t) override {
        return {};
    }
    void save(const std::string&) const override {}
    void load(const std::string&) override {}

private:
    std::map<std::string, std::vector<double>> table_;
};

}  // namespace

TEST_CASE("tokenizer lowercases and splits on non-alphanumerics") {
    const auto t = tokenize("No acute--findings!!  T1-weighted, 5mm.");
    CHECK(t == std::vector<std::string>{"no", "acute", "findings", "t1", "weighted", "5mm"});
    CHECK(tokenize("...").empty());
}

TEST_CASE("pair counts follow N choose 2") {
    const auto corpus90 = testsup::synth_corpus(45, 1, "r");
    REQUIRE(corpus90.size() == 90);
    const auto pairs = generate_pairs(corpus90);
    CHECK(pairs.size() == 4005);

    int same = 0, diff = 0;
    for (const auto& p : pairs) (p.same_class ? same : diff)++;
    CHECK(same == 1980);  // 2 * C(45,2)
    CHECK(diff == 2025);  // 45 * 45
    CHECK(same + diff == 4005);
}

TEST_CASE("four impressions give exactly the six unordered pairs") {
    std::vector<LabeledImpression> imps{
        {"a", "normal study", 0}, {"b", "lesion found", 1},
        {"c", "clear scan", 0},   {"d", "mass effect", 1}};
    const auto pairs = generate_pairs(imps);
    REQUIRE(pairs.size() == 6);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : pairs) {
        CHECK(p.id_a < p.id_b);  // canonical order, no self pairs
        seen.insert({p.id_a, p.id_b});
    }
    CHECK(seen.size() == 6);
    for (const auto& p : pairs) {
        const bool same_expected = (p.id_a == "a" && p.id_b == "c") ||
                                   (p.id_a == "b" && p.id_b == "d");
        CHECK(p.same_class == same_expected);
    }
}

TEST_CASE("degenerate corpora and duplicate ids") {
    CHECK(generate_pairs({}).empty());
    CHECK(generate_pairs({{"only", "text", 0}}).empty());
    std::vector<LabeledImpression> dup{{"x", "a", 0}, {"x", "b", 1}};
    CHECK_THROWS_AS(generate_pairs(dup), std::invalid_argument);
}

TEST_CASE("pair count property over random corpus sizes") {
    Rng rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 2 + rng.uniform_int(40);
        std::vector<LabeledImpression> imps;
        for (int i = 0; i < n; ++i)
            imps.push_back({"id-" + std::to_string(i), "text " + std::to_string(i),
                            rng.uniform_int(2)});
        CHECK(generate_pairs(imps).size() == std::size_t(n) * (n - 1) / 2);
    }
}

TEST_CASE("encoder outputs unit vectors of fixed dimension") {
    HashingEncoder enc(512, 64, 3);
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        const auto text = testsup::synth_impression(rng.uniform_int(2), rng);
        const auto e = enc.encode(text);
        CHECK(e.size() == 64);
        CHECK(norm_of(e) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(norm_of(enc.encode("!!!")) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(enc.encode("same text") == enc.encode("same text"));
}

TEST_CASE("identical texts encode identically so the same-class loss vanishes") {
    HashingEncoder enc(512, 64, 4);
    const auto a = enc.encode("stable appearance without new findings");
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((1.0 - cosine(a, a)) * (1.0 - cosine(a, a)) == doctest::Approx(0.0));
}

TEST_CASE("zero training epochs leave the encoder untouched") {
    const auto corpus = testsup::synth_corpus(4, 11, "z");
    const auto pairs = generate_pairs(corpus);
    HashingEncoder enc(512, 64, 5);
    const auto before = enc.encode(corpus[0].text);
    const auto losses = enc.train(corpus, pairs, 0, 0.5, 1e-2, 13);
    CHECK(losses.empty());
    CHECK(enc.encode(corpus[0].text) == before);
}

TEST_CASE("contrastive training separates disjoint-phrase classes") {
    const auto corpus = testsup::synth_corpus(10, 21, "c");
    const auto pairs = generate_pairs(corpus);
    HashingEncoder enc(512, 64, 6);

    const auto mean_cosines = [&]() {
        double same = 0, diff = 0;
        int ns = 0, nd = 0;
        std::map<std::string, std::vector<double>> cache;
        for (const auto& imp : corpus) cache[imp.id] = enc.encode(imp.text);
        std::map<std::string, int> labels;
        for (const auto& imp : corpus) labels[imp.id] = imp.label;
        for (const auto& p : pairs) {
            const double c = cosine(cache[p.id_a], cache[p.id_b]);
            if (labels[p.id_a] == labels[p.id_b]) {
                same += c;
                ++ns;
            } else {
                diff += c;
                ++nd;
            }
        }
        return std::pair{same / ns, diff / nd};
    };

    const auto losses = enc.train(corpus, pairs, 6, 0.5, 1e-2, 7);
    REQUIRE(losses.size() == 6);
    CHECK(losses.back() < losses.front());
    const auto [same_cos, diff_cos] = mean_cosines();
    CHECK(same_cos > diff_cos);
    CHECK(same_cos > 0.8);
}

TEST_CASE("trained encoder labels held-out impressions perfectly") {
    const auto corpus = testsup::synth_corpus(10, 33, "train");
    const auto pairs = generate_pairs(corpus);
    HashingEncoder enc(512, 64, 8);
    enc.train(corpus, pairs, 6, 0.5, 1e-2, 9);

    const auto holdout = testsup::synth_corpus(4, 99, "held");
    for (const auto& h : holdout) {
        const auto pred = predict_label(enc, corpus, h.text);
        CHECK(pred.label == h.label);
        CHECK(pred.confidence > 0.0);
    }
}

TEST_CASE("centroid rule follows the geometry of the references") {
    const std::vector<double> e0{1, 0, 0, 0}, e1{0, 1, 0, 0};
    std::vector<double> q{0.9, 0.1, 0, 0};
    const double n = norm_of(q);
    for (auto& x : q) x /= n;
    StubEncoder enc({{"ref0", e0}, {"ref1", e1}, {"query", q}});
    std::vector<LabeledImpression> refs{{"a", "ref0", 0}, {"b", "ref1", 1}};
    const auto pred = predict_label(enc, refs, "query");
    CHECK(pred.label == 0);
    CHECK(pred.confidence > 0.0);

    // exact tie falls to class 0 with zero confidence
    std::vector<double> mid{1, 1, 0, 0};
    const double nm = norm_of(mid);
    for (auto& x : mid) x /= nm;
    StubEncoder enc2({{"ref0", e0}, {"ref1", e1}, {"query", mid}});
    const auto tie = predict_label(enc2, refs, "query");
    CHECK(tie.label == 0);
    CHECK(tie.confidence == doctest::Approx(0.0));
}

TEST_CASE("query identical to a reference lands in its own class") {
    const auto corpus = testsup::synth_corpus(6, 44, "own");
    const auto pairs = generate_pairs(corpus);
    HashingEncoder enc(512, 64, 10);
    enc.train(corpus, pairs, 4, 0.5, 1e-2, 11);
    const auto pred = predict_label(enc, corpus, corpus[0].text);
    CHECK(pred.label == corpus[0].label);
}

TEST_CASE("prediction is invariant to reference order") {
    auto corpus = testsup::synth_corpus(6, 55, "ord");
    HashingEncoder enc(512, 64, 12);
    const auto query = testsup::synth_impression(1, *std::make_unique<Rng>(77));
    const auto p1 = predict_label(enc, corpus, query);
    std::reverse(corpus.begin(), corpus.end());
    const auto p2 = predict_label(enc, corpus, query);
    CHECK(p1.label == p2.label);
    CHECK(p1.confidence == doctest::Approx(p2.confidence).epsilon(1e-12));
}

TEST_CASE("references must cover both classes") {
    HashingEncoder enc(512, 64, 13);
    std::vector<LabeledImpression> only0{{"a", "normal", 0}, {"b", "clear", 0}};
    CHECK_THROWS_AS(predict_label(enc, only0, "query"), std::invalid_argument);
}

TEST_CASE("label_manifest covers matched ids and rejects orphans") {
    const auto refs = testsup::synth_corpus(5, 66, "refs");
    HashingEncoder enc(512, 64, 14);
    enc.train(refs, generate_pairs(refs), 4, 0.5, 1e-2, 15);

    Rng rng(88);
    std::vector<Report> reports;
    std::set<std::string> manifest_ids;
    for (int i = 0; i < 6; ++i) {
        const auto id = "vol-" + std::to_string(i);
        manifest_ids.insert(id);
        reports.push_back(Report{id, testsup::synth_impression(i % 2, rng), {}});
    }
    const auto rows = label_manifest(enc, refs, reports, manifest_ids);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) CHECK((r.label == 0 || r.label == 1));

    reports.push_back(Report{"orphan-id", "some text", {}});
    try {
        label_manifest(enc, refs, reports, manifest_ids);
        FAIL("expected orphan error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("orphan-id") != std::string::npos);
    }
}

TEST_CASE("report and label map files round-trip") {
    testsup::TempDir tmp("nlpio");
    const auto reports_path = tmp.file("reports.jsonl");
    {
        std::ofstream os(reports_path);
        os << R"({"id":"r1","impression":"no acute findings","label":0})" << "\n";
        os << R"({"id":"r2","impression":"enhancing lesion seen"})" << "\n";
    }
    const auto reports = read_reports(reports_path);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].label.has_value());
    CHECK(*reports[0].label == 0);
    CHECK(!reports[1].label.has_value());

    {
        std::ofstream os(reports_path, std::ios::app);
        os << R"({"id":"r3","impression":"   "})" << "\n";
    }
    CHECK_THROWS(read_reports(reports_path));

    const auto map_path = tmp.file("labels.jsonl");
    write_label_map(map_path, {{"v1", 0, 0.8}, {"v2", 1, 0.4}});
    const auto map = read_label_map(map_path);
    CHECK(map.size() == 2);
    CHECK(map.at("v1") == 0);
    CHECK(map.at("v2") == 1);
}

TEST_CASE("encoder checkpoints restore the same embeddings") {
    testsup::TempDir tmp("encckpt");
    const auto corpus = testsup::synth_corpus(5, 77, "ck");
    HashingEncoder enc(512, 64, 16);
    enc.train(corpus, generate_pairs(corpus), 3, 0.5, 1e-2, 17);
    const auto path = tmp.file("encoder.ckpt");
    enc.save(path);

    HashingEncoder other(512, 64, 999);
    other.load(path);
    // float32 storage rounds the doubles, so reload-of-save is the fixture
    other.save(tmp.file("encoder2.ckpt"));
    std::ifstream a(path, std::ios::binary), b(tmp.file("encoder2.ckpt"), std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), {});
    const std::string bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);

    const auto q = testsup::synth_impression(1, *std::make_unique<Rng>(5));
    const auto pred_a = predict_label(other, corpus, q);
    const auto pred_b = predict_label(other, corpus, q);
    CHECK(pred_a.label == pred_b.label);
}
