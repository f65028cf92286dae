#include <doctest.h>

#include <cmath>
#include <vector>

#include "nhnn/experiment.hpp"
#include "nhnn/synthetic.hpp"

using namespace nhnn;

namespace {

Corpus tiny_corpus(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_speakers_per_group = 2;
    spec.utterances_per_speaker = 6;
    spec.T_min = 5;
    spec.T_max = 8;
    spec.seed = seed;
    return generate_synthetic(spec);
}

PipelineConfig tiny_pipeline() {
    PipelineConfig pc;
    pc.training.batch_size = 8;
    pc.training.learning_rate = 1e-3;
    pc.training.max_epochs = 2;
    pc.training.patience = 2;
    pc.Ttrunc = 6;
    return pc;
}

}  // namespace

TEST_CASE("model kind names round-trip") {
    for (ModelKind kind :
         {ModelKind::Dcnn, ModelKind::Mtl, ModelKind::NhnnFc, ModelKind::NhnnFcConv})
        CHECK(parse_model_kind(model_kind_name(kind)) == kind);
    CHECK_THROWS(parse_model_kind("svm"));
}

TEST_CASE("run_within_corpus is deterministic and thread-count independent") {
    const Corpus corpus = tiny_corpus(21);
    const PipelineConfig pc = tiny_pipeline();
    const std::vector<std::uint64_t> seeds{0, 1};

    const WithinCorpusResult serial = run_within_corpus(corpus, ModelKind::Dcnn, pc, seeds, 1);
    REQUIRE(serial.speakers.size() == 4);  // 2 groups x 2 speakers
    REQUIRE(serial.per_seed_uars.size() == seeds.size());
    REQUIRE(serial.per_subject_uar.size() == serial.speakers.size());

    // per-subject averages and the grand mean are consistent
    double grand = 0.0;
    for (std::size_t f = 0; f < serial.speakers.size(); ++f) {
        double mean_f = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) mean_f += serial.per_seed_uars[s][f];
        mean_f /= static_cast<double>(seeds.size());
        CHECK(serial.per_subject_uar[f] == doctest::Approx(mean_f).epsilon(1e-12));
        grand += serial.per_subject_uar[f];
    }
    CHECK(serial.mean_uar ==
          doctest::Approx(grand / static_cast<double>(serial.speakers.size())).epsilon(1e-12));

    // identical rerun, and a threaded run, reproduce the numbers exactly
    const WithinCorpusResult again = run_within_corpus(corpus, ModelKind::Dcnn, pc, seeds, 1);
    const WithinCorpusResult threaded = run_within_corpus(corpus, ModelKind::Dcnn, pc, seeds, 3);
    CHECK(again.per_seed_uars == serial.per_seed_uars);
    CHECK(threaded.per_seed_uars == serial.per_seed_uars);
}

TEST_CASE("multi-kind harness matches the single-kind runs") {
    const Corpus corpus = tiny_corpus(22);
    const PipelineConfig pc = tiny_pipeline();
    const std::vector<std::uint64_t> seeds{0};

    const auto multi =
        run_within_corpus_multi(corpus, {ModelKind::Dcnn, ModelKind::NhnnFc}, pc, seeds, 1);
    REQUIRE(multi.size() == 2);
    const WithinCorpusResult solo = run_within_corpus(corpus, ModelKind::Dcnn, pc, seeds, 1);
    CHECK(multi.at(ModelKind::Dcnn).per_seed_uars == solo.per_seed_uars);
    CHECK(multi.at(ModelKind::Dcnn).speakers == solo.speakers);
}

TEST_CASE("cross-corpus harness scores every seed on the test corpus") {
    const Corpus train = tiny_corpus(23);
    const Corpus test = tiny_corpus(24);
    const std::vector<std::uint64_t> seeds{0, 1};
    const CrossCorpusResult r =
        run_cross_corpus(train, test, ModelKind::Dcnn, tiny_pipeline(), seeds, 2);
    REQUIRE(r.per_seed_uar.size() == seeds.size());
    double mean = 0.0;
    for (double u : r.per_seed_uar) {
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
        mean += u;
    }
    CHECK(r.mean_uar == doctest::Approx(mean / static_cast<double>(seeds.size())).epsilon(1e-12));

    const CrossCorpusResult again =
        run_cross_corpus(train, test, ModelKind::Dcnn, tiny_pipeline(), seeds, 1);
    CHECK(again.per_seed_uar == r.per_seed_uar);
}
