#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "nhnn/dataio.hpp"
#include "nhnn/synthetic.hpp"

using namespace nhnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("nhnn_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Utterance make_utt(const std::string& id, const std::string& speaker,
                   const std::vector<double>& frame_row) {
    Utterance u;
    u.id = id;
    u.speaker_id = speaker;
    u.annotations = {3};
    u.summary = Tensor({2});
    u.summary.data = {0.5, -0.5};
    u.frames = Tensor({1, static_cast<int>(frame_row.size())});
    u.frames.data = frame_row;
    u.frame_count = static_cast<int>(frame_row.size());
    u.label = LabelBin::Medium;
    return u;
}

}  // namespace

TEST_CASE("bin_annotation on both scales") {
    CHECK(bin_annotation(3, 3) == LabelBin::Medium);
    CHECK(bin_annotation(1, 3) == LabelBin::Low);
    CHECK(bin_annotation(2, 3) == LabelBin::Low);
    CHECK(bin_annotation(4, 3) == LabelBin::High);
    CHECK(bin_annotation(5, 3) == LabelBin::High);
    CHECK(bin_annotation(4, 5) == LabelBin::Low);
    CHECK(bin_annotation(5, 5) == LabelBin::Medium);
    CHECK(bin_annotation(6, 5) == LabelBin::High);
    CHECK_THROWS_AS(bin_annotation(0, 3), std::domain_error);
    CHECK_THROWS_AS(bin_annotation(6, 3), std::domain_error);
    CHECK_THROWS_AS(bin_annotation(10, 5), std::domain_error);
}

TEST_CASE("bin_annotation is monotone in the rating") {
    for (int mid : {3, 5}) {
        int prev = 0;
        for (int r = 1; r <= 2 * mid - 1; ++r) {
            const int b = static_cast<int>(bin_annotation(r, mid));
            CHECK(b >= prev);
            prev = b;
        }
    }
}

TEST_CASE("majority_label examples") {
    CHECK(majority_label({2, 2, 4}, 3) == LabelBin::Low);
    CHECK(majority_label({3, 3}, 3) == LabelBin::Medium);
    CHECK(majority_label({5, 5, 1}, 3) == LabelBin::High);
    CHECK(majority_label({2, 3, 4}, 3) == std::nullopt);  // three-way tie
    CHECK(majority_label({1, 5}, 3) == std::nullopt);     // two-way tie
    CHECK(majority_label({4}, 3) == LabelBin::High);
    CHECK_THROWS_AS(majority_label({}, 3), std::domain_error);
}

TEST_CASE("majority_label is invariant under permutation") {
    std::vector<int> ann{2, 4, 4, 3, 4, 1};
    auto base = majority_label(ann, 3);
    std::sort(ann.begin(), ann.end());
    do {
        CHECK(majority_label(ann, 3) == base);
    } while (std::next_permutation(ann.begin(), ann.end()));
}

TEST_CASE("fit_norm_stats population convention") {
    // frames {0, 2} for one coefficient: mean 1, population std 1
    Utterance u = make_utt("a", "s1", {0.0, 2.0});
    NormStats stats = fit_norm_stats({&u});
    REQUIRE(stats.mean.size() == 1);
    CHECK(stats.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.stddev[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("apply_znorm standardizes and floors constant coefficients") {
    Utterance a = make_utt("a", "s1", {1.0, 3.0});
    Utterance b = make_utt("b", "s1", {5.0, 7.0});
    NormStats stats = fit_norm_stats({&a, &b});
    Tensor za = apply_znorm(a, stats);
    // round trip: z * std + mean returns the original frames
    for (int t = 0; t < 2; ++t)
        CHECK(za.at(0, t) * stats.stddev[0] + stats.mean[0] ==
              doctest::Approx(a.frames.at(0, t)).epsilon(1e-9));

    // a constant coefficient z-scores to exactly zero
    Utterance c = make_utt("c", "s1", {4.0, 4.0, 4.0});
    NormStats flat = fit_norm_stats({&c});
    Tensor zc = apply_znorm(c, flat);
    for (double v : zc.data) CHECK(v == 0.0);
}

TEST_CASE("pad_batch zero pads past each utterance length") {
    Utterance a = make_utt("a", "s1", {1.0, 2.0, 3.0});
    Utterance b = make_utt("b", "s2", {4.0});
    Batch batch = pad_batch({&a, &b});
    REQUIRE(batch.x.shape == std::vector<int>{2, 1, 3});
    CHECK(batch.lengths == std::vector<int>{3, 1});
    CHECK(batch.x.data[0] == 1.0);
    CHECK(batch.x.data[2] == 3.0);
    CHECK(batch.x.data[3] == 4.0);
    CHECK(batch.x.data[4] == 0.0);
    CHECK(batch.x.data[5] == 0.0);
}

TEST_CASE("synthetic generation is deterministic and shaped as specified") {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 2;
    spec.utterances_per_speaker = 4;
    spec.seed = 11;
    Corpus c1 = generate_synthetic(spec);
    Corpus c2 = generate_synthetic(spec);
    REQUIRE(c1.utterances.size() == 16);
    for (std::size_t i = 0; i < c1.utterances.size(); ++i) {
        const Utterance& u = c1.utterances[i];
        const Utterance& v = c2.utterances[i];
        CHECK(u.id == v.id);
        CHECK(u.summary.data == v.summary.data);
        CHECK(u.frames.data == v.frames.data);
        CHECK(u.summary_dim() == spec.d_s);
        CHECK(u.n_mel() == spec.n_mel);
        CHECK(u.frame_count >= spec.T_min);
        CHECK(u.frame_count <= spec.T_max);
        CHECK(u.label.has_value());
        CHECK(u.attrs.count("group") == 1);
        CHECK(u.attrs.count("gender") == 1);
    }
    spec.seed = 12;
    Corpus c3 = generate_synthetic(spec);
    CHECK(c3.utterances[0].summary.data != c1.utterances[0].summary.data);
}

TEST_CASE("group-flipped corpora carry only Low and High labels") {
    SyntheticSpec spec;
    spec.label_map_mode = LabelMapMode::GroupFlipped;
    spec.seed = 3;
    Corpus c = generate_synthetic(spec);
    for (const Utterance& u : c.utterances) {
        REQUIRE(u.label.has_value());
        CHECK(*u.label != LabelBin::Medium);
    }
}

TEST_CASE("zero group separation leaves groups indistinguishable in summaries") {
    // Welch two-sample test on summary coordinate 0 between the two groups;
    // at alpha = 0.01 the rejection rate over seeds must stay near alpha.
    int rejections = 0;
    const int n_seeds = 20;
    for (int seed = 0; seed < n_seeds; ++seed) {
        SyntheticSpec spec;
        spec.group_separation = 0.0;
        spec.utterances_per_speaker = 50;
        spec.seed = 1000 + seed;
        Corpus c = generate_synthetic(spec);
        double m[2] = {0, 0}, m2[2] = {0, 0};
        int n[2] = {0, 0};
        for (const Utterance& u : c.utterances) {
            const int g = u.attrs.at("group") == "g0" ? 0 : 1;
            const double x = u.summary.data[0];
            m[g] += x;
            m2[g] += x * x;
            n[g]++;
        }
        for (int g = 0; g < 2; ++g) {
            m[g] /= n[g];
            m2[g] = (m2[g] / n[g] - m[g] * m[g]) * n[g] / (n[g] - 1.0);
        }
        const double z = (m[0] - m[1]) / std::sqrt(m2[0] / n[0] + m2[1] / n[1]);
        if (std::fabs(z) > 2.576) rejections++;
    }
    CHECK(rejections <= 1);  // >= 95% of seeds fail to reject
}

TEST_CASE("nonzero separation is detectable (generator sanity)") {
    SyntheticSpec spec;
    spec.seed = 5;
    Corpus c = generate_synthetic(spec);
    double m[2] = {0, 0};
    int n[2] = {0, 0};
    for (const Utterance& u : c.utterances) {
        const int g = u.attrs.at("group") == "g0" ? 0 : 1;
        m[g] += u.summary.data[0];
        n[g]++;
    }
    CHECK(std::fabs(m[0] / n[0] - m[1] / n[1]) > 1.0);
}

TEST_CASE("save and load round trip preserves the corpus bit for bit") {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 2;
    spec.utterances_per_speaker = 3;
    spec.T_min = 4;
    spec.T_max = 6;
    spec.seed = 9;
    Corpus original = generate_synthetic(spec);

    const fs::path dir = fresh_dir("roundtrip");
    save_corpus(original, dir.string());
    Corpus loaded = load_corpus((dir / "manifest.json").string());

    CHECK(loaded.name == original.name);
    CHECK(loaded.scale_mid == original.scale_mid);
    REQUIRE(loaded.utterances.size() == original.utterances.size());
    for (std::size_t i = 0; i < original.utterances.size(); ++i) {
        const Utterance& a = original.utterances[i];
        const Utterance& b = loaded.utterances[i];
        CHECK(a.id == b.id);
        CHECK(a.speaker_id == b.speaker_id);
        CHECK(a.attrs == b.attrs);
        CHECK(a.annotations == b.annotations);
        CHECK(a.summary.data == b.summary.data);  // %.17g round trips doubles
        CHECK(a.frames.data == b.frames.data);
        CHECK(a.label == b.label);
    }
    fs::remove_all(dir);
}

TEST_CASE("loader diagnostics name the offending file or utterance") {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 1;
    spec.utterances_per_speaker = 2;
    spec.T_min = 3;
    spec.T_max = 3;
    spec.seed = 21;
    Corpus c = generate_synthetic(spec);

    SUBCASE("missing manifest") {
        CHECK_THROWS_WITH_AS(load_corpus("/nonexistent/manifest.json"),
                             doctest::Contains("missing manifest"), std::runtime_error);
    }
    SUBCASE("missing feature file") {
        const fs::path dir = fresh_dir("missing_frames");
        save_corpus(c, dir.string());
        fs::remove(dir / "frames" / (c.utterances[0].id + ".csv"));
        CHECK_THROWS_WITH_AS(load_corpus((dir / "manifest.json").string()),
                             doctest::Contains("missing feature file"), std::runtime_error);
        fs::remove_all(dir);
    }
    SUBCASE("ragged frame rows") {
        const fs::path dir = fresh_dir("ragged");
        save_corpus(c, dir.string());
        std::ofstream out(dir / "frames" / (c.utterances[0].id + ".csv"), std::ios::app);
        out << "1.0,2.0\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_corpus((dir / "manifest.json").string()),
                             doctest::Contains("ragged frame rows"), std::runtime_error);
        fs::remove_all(dir);
    }
    SUBCASE("non-finite feature values") {
        const fs::path dir = fresh_dir("nonfinite");
        Corpus bad = c;
        bad.utterances[1].frames.data[0] = std::nan("");
        save_corpus(bad, dir.string());
        CHECK_THROWS_WITH_AS(load_corpus((dir / "manifest.json").string()),
                             doctest::Contains("non-finite feature values"), std::runtime_error);
        fs::remove_all(dir);
    }
    SUBCASE("duplicate utterance id") {
        const fs::path dir = fresh_dir("dup");
        Corpus bad = c;
        bad.utterances[1].id = bad.utterances[0].id;
        save_corpus(bad, dir.string());
        CHECK_THROWS_WITH_AS(load_corpus((dir / "manifest.json").string()),
                             doctest::Contains("duplicate utterance id"), std::runtime_error);
        fs::remove_all(dir);
    }
}

TEST_CASE("tied annotations are excluded at load and counted") {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 1;
    spec.utterances_per_speaker = 3;
    spec.T_min = 3;
    spec.T_max = 3;
    spec.seed = 23;
    Corpus c = generate_synthetic(spec);
    c.utterances[0].annotations = {1, 5};  // tie -> no majority bin
    const fs::path dir = fresh_dir("excluded");
    save_corpus(c, dir.string());
    Corpus loaded = load_corpus((dir / "manifest.json").string());
    CHECK(loaded.excluded_count == 1);
    CHECK(loaded.utterances.size() == c.utterances.size() - 1);
    for (const Utterance& u : loaded.utterances) CHECK(u.id != c.utterances[0].id);
    CHECK(labeled_indices(loaded).size() == loaded.utterances.size());
    fs::remove_all(dir);
}
