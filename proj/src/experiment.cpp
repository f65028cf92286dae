#include "nhnn/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <stdexcept>

namespace nhnn {

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Dcnn: return "dcnn";
        case ModelKind::Mtl: return "mtl";
        case ModelKind::NhnnFc: return "nhnn_fc";
        case ModelKind::NhnnFcConv: return "nhnn_fc_conv";
    }
    throw std::logic_error("unreachable");
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "dcnn") return ModelKind::Dcnn;
    if (name == "mtl") return ModelKind::Mtl;
    if (name == "nhnn_fc") return ModelKind::NhnnFc;
    if (name == "nhnn_fc_conv") return ModelKind::NhnnFcConv;
    throw std::domain_error("unknown model kind '" + name + "'");
}

Tensor TrainedModel::predict_probs(const Utterance& utt) const {
    switch (kind) {
        case ModelKind::Dcnn:
            return dcnn_forward(*dcnn, apply_znorm(utt, norm), nullptr);
        case ModelKind::Mtl:
            return mtl_predict_probs(*mtl, apply_znorm(utt, norm));
        case ModelKind::NhnnFc:
        case ModelKind::NhnnFcConv:
            return nhnn_predict_weighted(*nhnn, utt, norm);
    }
    throw std::logic_error("unreachable");
}

LabelBin TrainedModel::predict(const Utterance& utt) const {
    return argmax_label(predict_probs(utt));
}

std::map<ModelKind, TrainedModel> train_models(const std::vector<ModelKind>& kinds,
                                               const std::vector<const Utterance*>& train_utts,
                                               const PipelineConfig& config, std::uint64_t seed) {
    if (train_utts.empty()) throw std::domain_error("train_models: empty training set");
    if (kinds.empty()) throw std::domain_error("train_models: no model kinds requested");
    TrainingConfig tcfg = config.training;
    tcfg.seed = seed;
    TrainingConfig head_tcfg = config.head_training.value_or(config.training);
    head_tcfg.seed = seed;

    const NormStats norm = fit_norm_stats(train_utts);
    const auto wants = [&](ModelKind k) {
        return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
    };

    std::map<ModelKind, TrainedModel> out;
    if (wants(ModelKind::Mtl)) {
        TrainedModel m;
        m.kind = ModelKind::Mtl;
        m.norm = norm;
        m.mtl = train_mtl_cnn(train_utts, norm, config.aux_attr, config.mtl_lambda, tcfg);
        out.emplace(ModelKind::Mtl, std::move(m));
    }

    const bool any_nhnn = wants(ModelKind::NhnnFc) || wants(ModelKind::NhnnFcConv);
    if (!wants(ModelKind::Dcnn) && !any_nhnn) return out;

    DcnnModel base = train_base_dcnn(train_utts, norm, tcfg);
    if (wants(ModelKind::Dcnn)) {
        TrainedModel m;
        m.kind = ModelKind::Dcnn;
        m.norm = norm;
        m.dcnn = base;
        out.emplace(ModelKind::Dcnn, std::move(m));
    }
    if (!any_nhnn) return out;

    // cluster the summary features, prune, clone and fine-tune heads
    const int n = static_cast<int>(train_utts.size());
    const int d = train_utts.front()->summary_dim();
    Tensor X({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X.at(i, j) = train_utts[i]->summary.data[j];
    const SummaryScaler scaler = SummaryScaler::fit(X);
    const Tensor Xs = scaler.transform(X);

    CaviOptions cavi;
    cavi.Ttrunc = config.Ttrunc;
    cavi.tol = config.cavi_tol;
    cavi.max_iter = config.cavi_max_iter;
    cavi.seed = seed;
    const DpGmmModel fitted = fit_cavi(Xs, empirical_prior(Xs, config.alpha0), cavi);
    auto [pruned, assignments] = prune_and_reassign(fitted, Xs, config.prune_threshold);
    (void)assignments;

    for (ModelKind kind : {ModelKind::NhnnFc, ModelKind::NhnnFcConv}) {
        if (!wants(kind)) continue;
        const Variant variant = kind == ModelKind::NhnnFc ? Variant::FC : Variant::FCConv;
        NhnnModel nhnn = build_nhnn(base, pruned, scaler, variant);
        finetune_heads(nhnn, train_utts, norm, head_tcfg);
        TrainedModel m;
        m.kind = kind;
        m.norm = norm;
        m.nhnn = std::move(nhnn);
        out.emplace(kind, std::move(m));
    }
    return out;
}

TrainedModel train_model(ModelKind kind, const std::vector<const Utterance*>& train_utts,
                         const PipelineConfig& config, std::uint64_t seed) {
    auto models = train_models({kind}, train_utts, config, seed);
    return std::move(models.at(kind));
}

namespace {

std::vector<const Utterance*> gather(const Corpus& corpus, const std::vector<int>& ids) {
    std::vector<const Utterance*> utts;
    utts.reserve(ids.size());
    for (int i : ids) utts.push_back(&corpus.utterances[i]);
    return utts;
}

double evaluate_uar(const TrainedModel& model, const std::vector<const Utterance*>& utts) {
    ConfusionMatrix cm(3);
    for (const Utterance* u : utts)
        cm.add(static_cast<int>(*u->label), static_cast<int>(model.predict(*u)));
    return uar(cm);
}

}  // namespace

std::map<ModelKind, WithinCorpusResult> run_within_corpus_multi(
    const Corpus& corpus, const std::vector<ModelKind>& kinds, const PipelineConfig& config,
    const std::vector<std::uint64_t>& seeds, int jobs) {
    const LosoPlan plan = loso_split(corpus);
    const int n_folds = static_cast<int>(plan.folds.size());
    const int n_seeds = static_cast<int>(seeds.size());
    if (n_seeds == 0) throw std::domain_error("run_within_corpus: need at least one seed");
    if (kinds.empty()) throw std::domain_error("run_within_corpus: no model kinds requested");

    std::map<ModelKind, WithinCorpusResult> results;
    for (ModelKind kind : kinds) {
        WithinCorpusResult r;
        for (const LosoFold& f : plan.folds) r.speakers.push_back(f.speaker_id);
        r.per_seed_uars.assign(n_seeds, std::vector<double>(n_folds, 0.0));
        results.emplace(kind, std::move(r));
    }

    if (jobs < 1) jobs = omp_get_max_threads();
#pragma omp parallel for collapse(2) schedule(dynamic) num_threads(jobs)
    for (int s = 0; s < n_seeds; ++s) {
        for (int f = 0; f < n_folds; ++f) {
            const auto models =
                train_models(kinds, gather(corpus, plan.folds[f].train_ids), config, seeds[s]);
            const auto test_utts = gather(corpus, plan.folds[f].test_ids);
            for (const auto& [kind, model] : models)
                results.at(kind).per_seed_uars[s][f] = evaluate_uar(model, test_utts);
        }
    }

    for (auto& [kind, result] : results) {
        result.per_subject_uar.assign(n_folds, 0.0);
        for (int f = 0; f < n_folds; ++f) {
            for (int s = 0; s < n_seeds; ++s)
                result.per_subject_uar[f] += result.per_seed_uars[s][f];
            result.per_subject_uar[f] /= n_seeds;
            result.mean_uar += result.per_subject_uar[f];
        }
        result.mean_uar /= n_folds;
    }
    return results;
}

WithinCorpusResult run_within_corpus(const Corpus& corpus, ModelKind kind,
                                     const PipelineConfig& config,
                                     const std::vector<std::uint64_t>& seeds, int jobs) {
    auto results = run_within_corpus_multi(corpus, {kind}, config, seeds, jobs);
    return std::move(results.at(kind));
}

CrossCorpusResult run_cross_corpus(const Corpus& train_corpus, const Corpus& test_corpus,
                                   ModelKind kind, const PipelineConfig& config,
                                   const std::vector<std::uint64_t>& seeds, int jobs) {
    if (train_corpus.utterances.empty() || test_corpus.utterances.empty())
        throw std::domain_error("run_cross_corpus: empty corpus");
    if (train_corpus.utterances.front().n_mel() != test_corpus.utterances.front().n_mel() ||
        train_corpus.utterances.front().summary_dim() !=
            test_corpus.utterances.front().summary_dim())
        throw std::domain_error("run_cross_corpus: incompatible feature dimensions");

    std::vector<const Utterance*> train_utts, test_utts;
    for (const Utterance& u : train_corpus.utterances) train_utts.push_back(&u);
    for (const Utterance& u : test_corpus.utterances) test_utts.push_back(&u);

    const int n_seeds = static_cast<int>(seeds.size());
    CrossCorpusResult result;
    result.per_seed_uar.assign(n_seeds, 0.0);

    if (jobs < 1) jobs = omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (int s = 0; s < n_seeds; ++s) {
        const TrainedModel model = train_model(kind, train_utts, config, seeds[s]);
        result.per_seed_uar[s] = evaluate_uar(model, test_utts);
    }
    for (double u : result.per_seed_uar) result.mean_uar += u;
    result.mean_uar /= n_seeds;
    return result;
}

}  // namespace nhnn
