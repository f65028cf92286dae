#ifndef NHNN_EXPERIMENT_HPP
#define NHNN_EXPERIMENT_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nhnn/evaluation.hpp"
#include "nhnn/model.hpp"
#include "nhnn/training.hpp"

namespace nhnn {

enum class ModelKind { Dcnn, Mtl, NhnnFc, NhnnFcConv };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct PipelineConfig {
    TrainingConfig training;
    // Heads train on cached encoder activations, so a larger epoch budget
    // for them is nearly free; unset means "same as `training`".
    std::optional<TrainingConfig> head_training;
    double alpha0 = 1.0;
    int Ttrunc = 10;
    double cavi_tol = 1e-6;
    int cavi_max_iter = 500;
    double prune_threshold = 0.10;
    std::string aux_attr = "gender";
    double mtl_lambda = 1.0;
};

// A fully trained pipeline able to score unseen utterances.
struct TrainedModel {
    ModelKind kind = ModelKind::Dcnn;
    NormStats norm;
    std::optional<DcnnModel> dcnn;
    std::optional<MtlCnnModel> mtl;
    std::optional<NhnnModel> nhnn;

    Tensor predict_probs(const Utterance& utt) const;
    LabelBin predict(const Utterance& utt) const;
};

// Runs the full pipeline for several model kinds on one training set, with
// the given seed driving every random choice. Work common to multiple
// kinds runs once: the trained base feeds both the plain comparator and
// the cluster-head models, and the two head variants share one DP-GMM fit.
std::map<ModelKind, TrainedModel> train_models(const std::vector<ModelKind>& kinds,
                                               const std::vector<const Utterance*>& train_utts,
                                               const PipelineConfig& config, std::uint64_t seed);

TrainedModel train_model(ModelKind kind, const std::vector<const Utterance*>& train_utts,
                         const PipelineConfig& config, std::uint64_t seed);

struct WithinCorpusResult {
    std::vector<std::string> speakers;                  // fold order
    std::vector<std::vector<double>> per_seed_uars;     // [seed][fold]
    std::vector<double> per_subject_uar;                // averaged over seeds
    double mean_uar = 0.0;
};

// LOSO protocol: per fold the full pipeline runs on the train side and is
// scored on the held-out speaker; repeated and averaged over seeds.
// (seed, fold) jobs run in parallel up to `jobs` threads; aggregation is
// index-ordered so results do not depend on the thread count.
WithinCorpusResult run_within_corpus(const Corpus& corpus, ModelKind kind,
                                     const PipelineConfig& config,
                                     const std::vector<std::uint64_t>& seeds, int jobs = 1);

// Same protocol for several model kinds at once; shared training stages
// run a single time per (seed, fold).
std::map<ModelKind, WithinCorpusResult> run_within_corpus_multi(
    const Corpus& corpus, const std::vector<ModelKind>& kinds, const PipelineConfig& config,
    const std::vector<std::uint64_t>& seeds, int jobs = 1);

struct CrossCorpusResult {
    std::vector<double> per_seed_uar;
    double mean_uar = 0.0;
};

CrossCorpusResult run_cross_corpus(const Corpus& train_corpus, const Corpus& test_corpus,
                                   ModelKind kind, const PipelineConfig& config,
                                   const std::vector<std::uint64_t>& seeds, int jobs = 1);

}  // namespace nhnn

#endif
