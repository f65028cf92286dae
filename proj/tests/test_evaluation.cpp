#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "nhnn/evaluation.hpp"
#include "nhnn/rng.hpp"
#include "nhnn/synthetic.hpp"

using namespace nhnn;

namespace {

Utterance attr_utt(const std::string& id, const std::string& speaker, LabelBin label,
                   const std::map<std::string, std::string>& attrs) {
    Utterance u;
    u.id = id;
    u.speaker_id = speaker;
    u.attrs = attrs;
    u.label = label;
    return u;
}

}  // namespace

TEST_CASE("uar basics") {
    ConfusionMatrix perfect(3);
    perfect.at(0, 0) = 5;
    perfect.at(1, 1) = 2;
    perfect.at(2, 2) = 9;
    CHECK(uar(perfect) == doctest::Approx(1.0).epsilon(1e-12));

    // recalls 0.5, 1.0, 0.0 -> mean 0.5
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 1;
    cm.at(0, 1) = 1;
    cm.at(1, 1) = 3;
    cm.at(2, 0) = 2;
    CHECK(uar(cm) == doctest::Approx(0.5).epsilon(1e-12));

    // scaling all counts leaves the UAR unchanged
    ConfusionMatrix scaled(3);
    for (int t = 0; t < 3; ++t)
        for (int p = 0; p < 3; ++p) scaled.at(t, p) = 7 * cm.at(t, p);
    CHECK(uar(scaled) == doctest::Approx(uar(cm)).epsilon(1e-12));
}

TEST_CASE("uar drops classes absent from the test set") {
    ConfusionMatrix cm(3);  // class 1 never occurs
    cm.at(0, 0) = 3;
    cm.at(0, 2) = 1;
    cm.at(2, 2) = 4;
    CHECK(uar(cm) == doctest::Approx(0.5 * (0.75 + 1.0)).epsilon(1e-12));

    ConfusionMatrix empty(3);
    CHECK_THROWS_AS(uar(empty), std::domain_error);
    ConfusionMatrix bad(3);
    CHECK_THROWS_AS(bad.add(3, 0), std::out_of_range);
    CHECK_THROWS_AS(bad.add(0, -1), std::out_of_range);
}

TEST_CASE("paired t-test reference example") {
    // differences (1, 2, 3): mean 2, sd 1, t = 2*sqrt(3) = 3.4641
    const std::vector<double> a{2.0, 4.0, 6.0}, b{1.0, 2.0, 3.0};
    TTestResult r = paired_t_test(a, b);
    CHECK(r.n_pairs == 3);
    CHECK(r.degrees_of_freedom == 2);
    CHECK_FALSE(r.degenerate);
    CHECK(r.t_statistic == doctest::Approx(3.4641).epsilon(1e-3));
    CHECK(r.p_value_two_sided == doctest::Approx(0.0742).epsilon(2e-2));
    CHECK(std::fabs(r.p_value_two_sided - 0.0742) < 1e-3);

    // swapping the arguments negates t and keeps p
    TTestResult s = paired_t_test(b, a);
    CHECK(s.t_statistic == doctest::Approx(-r.t_statistic).epsilon(1e-12));
    CHECK(s.p_value_two_sided == doctest::Approx(r.p_value_two_sided).epsilon(1e-12));
}

TEST_CASE("paired t-test degenerate and invalid cases") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    // identical samples: no evidence either way, t = 0 and p = 1
    TTestResult same = paired_t_test(a, a);
    CHECK_FALSE(same.degenerate);
    CHECK(same.t_statistic == 0.0);
    CHECK(same.p_value_two_sided == 1.0);
    const std::vector<double> shifted{2.0, 3.0, 4.0};
    CHECK(paired_t_test(shifted, a).degenerate);  // constant nonzero difference
    CHECK_THROWS_AS(paired_t_test(a, {1.0, 2.0}), std::domain_error);
    CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::domain_error);
}

TEST_CASE("loso_split partitions the corpus by speaker") {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 3;
    spec.utterances_per_speaker = 4;
    spec.T_min = 3;
    spec.T_max = 4;
    spec.seed = 17;
    Corpus corpus = generate_synthetic(spec);
    LosoPlan plan = loso_split(corpus);
    REQUIRE(plan.folds.size() == 6);  // 2 groups x 3 speakers

    std::set<std::string> seen;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const LosoFold& fold = plan.folds[f];
        if (f > 0) CHECK(plan.folds[f - 1].speaker_id < fold.speaker_id);  // ordered
        seen.insert(fold.speaker_id);
        CHECK(fold.train_ids.size() + fold.test_ids.size() == corpus.utterances.size());
        std::set<int> train(fold.train_ids.begin(), fold.train_ids.end());
        for (int id : fold.test_ids) {
            CHECK(corpus.utterances[id].speaker_id == fold.speaker_id);
            CHECK(train.count(id) == 0);
        }
        for (int id : fold.train_ids)
            CHECK(corpus.utterances[id].speaker_id != fold.speaker_id);
    }
    CHECK(seen.size() == plan.folds.size());
}

TEST_CASE("group_breakdown equals a filtered confusion computation") {
    std::vector<Utterance> storage;
    storage.push_back(attr_utt("a", "s1", LabelBin::Low, {{"gender", "f"}}));
    storage.push_back(attr_utt("b", "s1", LabelBin::High, {{"gender", "f"}}));
    storage.push_back(attr_utt("c", "s2", LabelBin::Low, {{"gender", "m"}}));
    storage.push_back(attr_utt("d", "s2", LabelBin::Low, {{"gender", "m"}}));
    std::vector<const Utterance*> utts;
    for (Utterance& u : storage) utts.push_back(&u);
    const std::vector<int> preds{0, 2, 0, 2};

    GroupBreakdown bd = group_breakdown(utts, preds, "gender");
    REQUIRE(bd.uars.size() == 2);
    CHECK(bd.uars.at("f") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bd.uars.at("m") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(bd.matrices.at("f").total() == 2);
    CHECK(bd.matrices.at("m").at(0, 2) == 1);

    GroupBreakdown delta = group_breakdown(utts, {0, 2, 0, 0}, "gender", &bd);
    CHECK(delta.deltas.at("m") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(delta.deltas.at("f") == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(group_breakdown(utts, preds, "native_language"), std::domain_error);
    CHECK_THROWS_AS(group_breakdown(utts, {0, 1}, "gender"), std::domain_error);
}

TEST_CASE("cluster attribute ratios and subject dispersion") {
    std::vector<Utterance> storage;
    // cluster 0: 65 f vs 100 m; speakers with 9 and 81 segments inside it
    for (int i = 0; i < 65; ++i)
        storage.push_back(attr_utt("f" + std::to_string(i), i < 9 ? "sa" : "sb", LabelBin::Low,
                                   {{"gender", "f"}}));
    for (int i = 0; i < 100; ++i)
        storage.push_back(attr_utt("m" + std::to_string(i), i < 81 ? "sc" : "sb", LabelBin::Low,
                                   {{"gender", "m"}}));
    // cluster 1: single-gender -> infinite ratio marker
    for (int i = 0; i < 4; ++i)
        storage.push_back(attr_utt("x" + std::to_string(i), "sd", LabelBin::Low,
                                   {{"gender", "f"}}));
    std::vector<const Utterance*> utts;
    std::vector<int> assignments;
    for (std::size_t i = 0; i < storage.size(); ++i) {
        utts.push_back(&storage[i]);
        assignments.push_back(i < 165 ? 0 : 1);
    }

    ClusterAttributeReport report = cluster_attribute_ratios(utts, assignments, {"gender"});
    REQUIRE(report.clusters.size() == 3);  // overall + 2 clusters
    CHECK(report.clusters[0].cluster == -1);
    CHECK(report.clusters[0].size == 169);

    const auto& c0 = report.clusters[1];
    CHECK(c0.size == 165);
    const auto& ratio = c0.attr_ratios.at("gender");
    CHECK(ratio.count_a == 65);
    CHECK(ratio.count_b == 100);
    CHECK_FALSE(ratio.infinite);
    CHECK(ratio.value == doctest::Approx(0.65).epsilon(1e-12));
    // speaker segment counts in cluster 0: sa=9, sb=75, sc=81 -> 81/9 = 9
    CHECK_FALSE(c0.dispersion_infinite);
    CHECK(c0.subject_dispersion == doctest::Approx(9.0).epsilon(1e-12));

    const auto& c1 = report.clusters[2];
    CHECK(c1.attr_ratios.at("gender").infinite);
    CHECK(c1.attr_ratios.at("gender").count_a == 4);
    CHECK(c1.subject_dispersion == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(cluster_attribute_ratios(utts, {0, 1}, {"gender"}), std::domain_error);
}

TEST_CASE("adjusted rand index") {
    CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    // label permutation is irrelevant
    CHECK(adjusted_rand_index({0, 0, 1, 1}, {5, 5, 2, 2}) == doctest::Approx(1.0));
    // textbook value: one element moved between clusters
    const double ari = adjusted_rand_index({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 1, 1});
    CHECK(ari > 0.0);
    CHECK(ari < 1.0);
    // independent labelings hover near zero
    Rng rng(5);
    std::vector<int> a(2000), b(2000);
    for (int i = 0; i < 2000; ++i) {
        a[i] = rng.uniform_int(3);
        b[i] = rng.uniform_int(3);
    }
    CHECK(std::fabs(adjusted_rand_index(a, b)) < 0.05);
    CHECK_THROWS_AS(adjusted_rand_index({0, 1}, {0}), std::domain_error);
}
