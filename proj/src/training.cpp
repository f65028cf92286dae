#include "nhnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace nhnn {

namespace {

int label_of(const Utterance* u) {
    if (!u->label) throw std::domain_error("training: utterance '" + u->id + "' has no label");
    return static_cast<int>(*u->label);
}

std::vector<Tensor> normalized_inputs(const std::vector<const Utterance*>& utts,
                                      const NormStats& norm) {
    std::vector<Tensor> inputs;
    inputs.reserve(utts.size());
    for (const Utterance* u : utts) inputs.push_back(apply_znorm(*u, norm));
    return inputs;
}

void warn_if_single_class(const std::vector<int>& labels) {
    const std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2)
        std::cerr << "warning: training set contains a single class; the model will be degenerate\n";
}

// seeded split: first chunk of a shuffled order becomes validation
void split_train_val(int n, double fraction, Rng& rng, std::vector<int>& train,
                     std::vector<int>& val) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    int n_val = static_cast<int>(std::lround(fraction * n));
    n_val = std::clamp(n_val, n >= 2 ? 1 : 0, n - 1);
    val.assign(order.begin(), order.begin() + n_val);
    train.assign(order.begin() + n_val, order.end());
    if (train.empty()) throw std::domain_error("training: empty training split");
}

std::vector<Tensor> snapshot_params(const std::vector<Param*>& params) {
    std::vector<Tensor> snap;
    for (const Param* p : params) snap.push_back(p->value);
    return snap;
}

void restore_params(const std::vector<Param*>& params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

// classifier stack fwd/bwd on a column-per-sample feature matrix
struct StackColsCache {
    Tensor f1, r1, logits, probs;
};

void stack_forward_cols(const Dense& fc1, const Dense& fc2, const Tensor& Z,
                        StackColsCache& c) {
    dense_forward_cols(fc1, Z, c.f1);
    c.r1 = Tensor(c.f1.shape);
    relu_forward(c.f1.ptr(), static_cast<int>(c.f1.size()), c.r1.ptr());
    dense_forward_cols(fc2, c.r1, c.logits);
    softmax_cols(c.logits, c.probs);
}

double stack_loss(const StackColsCache& c, const std::vector<int>& labels) {
    double loss = 0.0;
    for (int s = 0; s < c.probs.shape[1]; ++s)
        loss += -std::log(std::max(c.probs.at(labels[s], s), 1e-300));
    return loss;
}

// accumulates d(loss)/d(input) into dZ when non-null
void stack_backward_cols(Dense& fc1, Dense& fc2, const Tensor& Z, const StackColsCache& c,
                         const std::vector<int>& labels, double scale, Tensor* dZ) {
    const int B = c.probs.shape[1];
    Tensor dlogits({fc2.out_dim, B});
    for (int s = 0; s < B; ++s)
        for (int j = 0; j < fc2.out_dim; ++j)
            dlogits.at(j, s) = (c.probs.at(j, s) - (j == labels[s] ? 1.0 : 0.0)) * scale;
    Tensor dr1;
    dense_backward_cols(fc2, c.r1, dlogits, &dr1);
    Tensor df1(dr1.shape);
    relu_backward(c.f1.ptr(), dr1.ptr(), static_cast<int>(dr1.size()), df1.ptr());
    if (dZ) {
        Tensor dtmp;
        dense_backward_cols(fc1, Z, df1, &dtmp);
        if (dZ->size() == 0) {
            *dZ = std::move(dtmp);
        } else {
            for (std::size_t i = 0; i < dZ->size(); ++i) dZ->data[i] += dtmp.data[i];
        }
    } else {
        dense_backward_cols(fc1, Z, df1, nullptr);
    }
}

// Generic seeded minibatch loop with early stopping on validation loss.
// forward_batch(idxs) returns the summed loss over idxs (and retains its
// activations); backward_batch(idxs, scale) accumulates gradients for the
// most recent forward pass.
template <typename ForwardBatch, typename BackwardBatch>
void run_early_stopping(int n, const TrainingConfig& config, Rng& rng,
                        const std::vector<Param*>& params, ForwardBatch&& forward_batch,
                        BackwardBatch&& backward_batch, TrainLog* log) {
    std::vector<int> train_idx, val_idx;
    split_train_val(n, config.validation_fraction, rng, train_idx, val_idx);

    Adam opt(config.learning_rate);
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::vector<Tensor> best_snap = snapshot_params(params);
    std::vector<Param*> mutable_params = params;
    std::vector<int> batch;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(train_idx);
        double train_loss = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, train_idx.size());
            batch.assign(train_idx.begin() + start, train_idx.begin() + end);
            for (Param* p : mutable_params) p->zero_grad();
            train_loss += forward_batch(batch);
            backward_batch(batch, 1.0 / static_cast<double>(batch.size()));
            opt.step(mutable_params);
        }
        train_loss /= static_cast<double>(train_idx.size());

        double val_loss = 0.0;
        for (std::size_t start = 0; start < val_idx.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, val_idx.size());
            batch.assign(val_idx.begin() + start, val_idx.begin() + end);
            val_loss += forward_batch(batch);
        }
        val_loss /= static_cast<double>(val_idx.size());

        if (log) {
            log->train_loss.push_back(train_loss);
            log->val_loss.push_back(val_loss);
            log->epochs_run = epoch + 1;
        }
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best_snap = snapshot_params(params);
        } else if (epoch - best_epoch >= config.patience) {
            break;
        }
    }
    restore_params(params, best_snap);
    if (log) log->best_epoch = best_epoch;
}

std::vector<const Tensor*> gather_inputs(const std::vector<Tensor>& inputs,
                                         const std::vector<int>& idxs) {
    std::vector<const Tensor*> xs;
    xs.reserve(idxs.size());
    for (int i : idxs) xs.push_back(&inputs[i]);
    return xs;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idxs) {
    std::vector<int> out;
    out.reserve(idxs.size());
    for (int i : idxs) out.push_back(labels[i]);
    return out;
}

}  // namespace

DcnnModel train_base_dcnn(const std::vector<const Utterance*>& train_utts, const NormStats& norm,
                          const TrainingConfig& config, TrainLog* log) {
    config.validate();
    if (train_utts.empty()) throw std::domain_error("train_base_dcnn: empty corpus");
    const int n = static_cast<int>(train_utts.size());
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = label_of(train_utts[i]);
    warn_if_single_class(labels);
    const std::vector<Tensor> inputs = normalized_inputs(train_utts, norm);

    Rng rng(config.seed);
    DcnnModel model = DcnnModel::make(train_utts.front()->n_mel(), 3, rng);
    auto params = model.params();

    BatchCache cache;
    std::vector<int> batch_labels;
    auto forward_batch = [&](const std::vector<int>& idxs) {
        dcnn_forward_batch(model, gather_inputs(inputs, idxs), cache);
        batch_labels = gather_labels(labels, idxs);
        return batch_cross_entropy(cache, batch_labels);
    };
    auto backward_batch = [&](const std::vector<int>& idxs, double scale) {
        (void)idxs;  // cache holds this batch's forward pass
        dcnn_backward_batch(model, cache, batch_labels, scale);
    };
    run_early_stopping(n, config, rng, params, forward_batch, backward_batch, log);
    return model;
}

void finetune_heads(NhnnModel& nhnn, const std::vector<const Utterance*>& train_utts,
                    const NormStats& norm, const TrainingConfig& config,
                    std::vector<TrainLog>* logs) {
    config.validate();
    const int n = static_cast<int>(train_utts.size());
    const int k = static_cast<int>(nhnn.heads.size());

    Tensor summaries({n, train_utts.front()->summary_dim()});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < summaries.shape[1]; ++j)
            summaries.at(i, j) = train_utts[i]->summary.data[j];
    const std::vector<int> assign = hard_assign(nhnn.dpgmm, nhnn.scaler.transform(summaries));

    if (logs) logs->assign(k, TrainLog{});
    for (int h = 0; h < k; ++h) {
        std::vector<const Utterance*> cluster;
        for (int i = 0; i < n; ++i)
            if (assign[i] == h) cluster.push_back(train_utts[i]);
        if (static_cast<int>(cluster.size()) < 2 * config.batch_size) continue;  // keep base head

        NhnnModel::Head& head = nhnn.heads[h];
        const int m = static_cast<int>(cluster.size());
        std::vector<int> labels(m);
        for (int i = 0; i < m; ++i) labels[i] = label_of(cluster[i]);
        const std::vector<Tensor> inputs = normalized_inputs(cluster, norm);

        Rng rng(config.seed * 1000003ull + static_cast<std::uint64_t>(h) + 1);
        TrainLog* log = logs ? &(*logs)[h] : nullptr;

        if (nhnn.variant == Variant::FC) {
            // frozen encoder: cache bottlenecks once, tune the dense stack
            Tensor feats({128, m});
            {
                BatchCache enc;
                for (int start = 0; start < m; start += 256) {
                    const int end = std::min(m, start + 256);
                    std::vector<const Tensor*> xs;
                    for (int i = start; i < end; ++i) xs.push_back(&inputs[i]);
                    dcnn_forward_batch(nhnn.base, xs, enc);
                    for (int c = 0; c < 128; ++c)
                        for (int i = start; i < end; ++i)
                            feats.at(c, i) = enc.pooled.at(c, i - start);
                }
            }
            std::vector<Param*> params = {&head.fc1.weight, &head.fc1.bias,
                                          &head.fc2.weight, &head.fc2.bias};
            StackColsCache cache;
            Tensor Z;
            std::vector<int> batch_labels;
            auto forward_batch = [&](const std::vector<int>& idxs) {
                const int B = static_cast<int>(idxs.size());
                Z = Tensor({128, B});
                for (int c = 0; c < 128; ++c)
                    for (int s = 0; s < B; ++s) Z.at(c, s) = feats.at(c, idxs[s]);
                batch_labels = gather_labels(labels, idxs);
                stack_forward_cols(head.fc1, head.fc2, Z, cache);
                return stack_loss(cache, batch_labels);
            };
            auto backward_batch = [&](const std::vector<int>& idxs, double scale) {
                (void)idxs;
                stack_backward_cols(head.fc1, head.fc2, Z, cache, batch_labels, scale, nullptr);
            };
            run_early_stopping(m, config, rng, params, forward_batch, backward_batch, log);
        } else {
            // first conv frozen: cache its relu output, tune conv2 + dense
            std::vector<Tensor> a1s(m);
            {
                BatchCache enc;
                for (int start = 0; start < m; start += 256) {
                    const int end = std::min(m, start + 256);
                    std::vector<const Tensor*> xs;
                    for (int i = start; i < end; ++i) xs.push_back(&inputs[i]);
                    dcnn_forward_batch(nhnn.base, xs, enc);
                    for (int i = start; i < end; ++i) {
                        const int len = enc.layout.length[i - start];
                        const int o0 = enc.layout.offset[i - start];
                        a1s[i] = Tensor({128, len});
                        for (int c = 0; c < 128; ++c)
                            std::copy(enc.a1.ptr() + static_cast<std::size_t>(c) * enc.layout.total + o0,
                                      enc.a1.ptr() + static_cast<std::size_t>(c) * enc.layout.total + o0 + len,
                                      a1s[i].ptr() + static_cast<std::size_t>(c) * len);
                    }
                }
            }
            DilatedConv1d& conv2 = *head.conv2;
            std::vector<Param*> params = {&conv2.weight, &conv2.bias, &head.fc1.weight,
                                          &head.fc1.bias, &head.fc2.weight, &head.fc2.bias};
            struct HeadCache {
                BatchLayout layout;
                Tensor a1cat, xcol2, h2, a2, pooled;
                std::vector<int> argmax;
                StackColsCache stack;
            } cache;
            std::vector<int> batch_labels;
            auto forward_batch = [&](const std::vector<int>& idxs) {
                const int B = static_cast<int>(idxs.size());
                std::vector<int> lengths(B);
                for (int s = 0; s < B; ++s) lengths[s] = a1s[idxs[s]].shape[1];
                cache.layout = make_batch_layout(lengths);
                const int N = cache.layout.total;
                cache.a1cat = Tensor({128, N});
                for (int s = 0; s < B; ++s)
                    for (int c = 0; c < 128; ++c)
                        std::copy(a1s[idxs[s]].ptr() + static_cast<std::size_t>(c) * lengths[s],
                                  a1s[idxs[s]].ptr() + static_cast<std::size_t>(c + 1) * lengths[s],
                                  cache.a1cat.ptr() + static_cast<std::size_t>(c) * N +
                                      cache.layout.offset[s]);
                cache.xcol2 = Tensor({128 * conv2.kernel, N});
                conv_im2col(conv2, cache.a1cat.ptr(), cache.layout, cache.xcol2.ptr());
                conv1d_forward_cols(conv2, cache.xcol2, cache.h2);
                cache.a2 = Tensor({128, N});
                relu_forward(cache.h2.ptr(), 128 * N, cache.a2.ptr());
                global_max_pool_cols(cache.a2, cache.layout, cache.pooled, cache.argmax);
                batch_labels = gather_labels(labels, idxs);
                stack_forward_cols(head.fc1, head.fc2, cache.pooled, cache.stack);
                return stack_loss(cache.stack, batch_labels);
            };
            auto backward_batch = [&](const std::vector<int>& idxs, double scale) {
                (void)idxs;
                const int N = cache.layout.total;
                Tensor dpooled;
                stack_backward_cols(head.fc1, head.fc2, cache.pooled, cache.stack, batch_labels,
                                    scale, &dpooled);
                Tensor da2;
                global_max_pool_cols_backward(dpooled, cache.layout, cache.argmax, da2);
                Tensor dh2({128, N});
                relu_backward(cache.h2.ptr(), da2.ptr(), 128 * N, dh2.ptr());
                conv1d_backward_cols(conv2, cache.xcol2, dh2, nullptr);
            };
            run_early_stopping(m, config, rng, params, forward_batch, backward_batch, log);
        }
        head.tuned = true;
    }
}

MtlCnnModel train_mtl_cnn(const std::vector<const Utterance*>& train_utts, const NormStats& norm,
                          const std::string& aux_attr, double lambda,
                          const TrainingConfig& config, TrainLog* log) {
    config.validate();
    if (train_utts.empty()) throw std::domain_error("train_mtl_cnn: empty corpus");
    const int n = static_cast<int>(train_utts.size());

    // auxiliary classes from attribute cardinality
    std::set<std::string> values;
    for (const Utterance* u : train_utts) {
        auto it = u->attrs.find(aux_attr);
        if (it == u->attrs.end())
            throw std::domain_error("train_mtl_cnn: utterance '" + u->id +
                                    "' missing attribute '" + aux_attr + "'");
        values.insert(it->second);
    }
    MtlCnnModel model;
    model.aux_values.assign(values.begin(), values.end());
    model.lambda = lambda;
    const int n_aux = static_cast<int>(model.aux_values.size());

    std::vector<int> labels(n), aux_labels(n);
    for (int i = 0; i < n; ++i) {
        labels[i] = label_of(train_utts[i]);
        const std::string& v = train_utts[i]->attrs.at(aux_attr);
        aux_labels[i] = static_cast<int>(
            std::find(model.aux_values.begin(), model.aux_values.end(), v) -
            model.aux_values.begin());
    }
    warn_if_single_class(labels);
    const std::vector<Tensor> inputs = normalized_inputs(train_utts, norm);

    Rng rng(config.seed);
    model.core = DcnnModel::make(train_utts.front()->n_mel(), 3, rng);
    // separate stream: the core's rng draws stay identical to the plain base trainer
    Rng aux_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    model.fc1_aux = Dense(128, 128);
    model.fc2_aux = Dense(128, n_aux);
    model.fc1_aux.init_params(aux_rng);
    model.fc2_aux.init_params(aux_rng);

    auto params = model.params();

    BatchCache cache;  // encoder + valence stack
    StackColsCache aux_cache;
    std::vector<int> batch_labels, batch_aux;
    auto forward_batch = [&](const std::vector<int>& idxs) {
        dcnn_forward_batch(model.core, gather_inputs(inputs, idxs), cache);
        batch_labels = gather_labels(labels, idxs);
        batch_aux = gather_labels(aux_labels, idxs);
        // validation monitors the valence loss only
        return batch_cross_entropy(cache, batch_labels);
    };
    auto backward_batch = [&](const std::vector<int>& idxs, double scale) {
        (void)idxs;
        const int B = static_cast<int>(batch_labels.size());
        const int N = cache.layout.total;
        // valence stack
        Tensor dlogits({model.core.n_class, B});
        for (int s = 0; s < B; ++s)
            for (int j = 0; j < model.core.n_class; ++j)
                dlogits.at(j, s) =
                    (cache.probs.at(j, s) - (j == batch_labels[s] ? 1.0 : 0.0)) * scale;
        Tensor dr1, dpooled;
        dense_backward_cols(model.core.fc2, cache.r1, dlogits, &dr1);
        Tensor df1(dr1.shape);
        relu_backward(cache.f1.ptr(), dr1.ptr(), static_cast<int>(dr1.size()), df1.ptr());
        dense_backward_cols(model.core.fc1, cache.pooled, df1, &dpooled);
        // auxiliary stack contributes lambda-scaled gradients
        stack_forward_cols(model.fc1_aux, model.fc2_aux, cache.pooled, aux_cache);
        stack_backward_cols(model.fc1_aux, model.fc2_aux, cache.pooled, aux_cache, batch_aux,
                            lambda * scale, &dpooled);
        // shared encoder
        Tensor da2;
        global_max_pool_cols_backward(dpooled, cache.layout, cache.argmax, da2);
        Tensor dh2({128, N});
        relu_backward(cache.h2.ptr(), da2.ptr(), 128 * N, dh2.ptr());
        Tensor dxcol2;
        conv1d_backward_cols(model.core.conv2, cache.xcol2, dh2, &dxcol2);
        Tensor da1({128, N});
        conv_col2im(model.core.conv2, dxcol2, cache.layout, da1.ptr());
        Tensor dh1({128, N});
        relu_backward(cache.h1.ptr(), da1.ptr(), 128 * N, dh1.ptr());
        conv1d_backward_cols(model.core.conv1, cache.xcol1, dh1, nullptr);
    };
    run_early_stopping(n, config, rng, params, forward_batch, backward_batch, log);
    return model;
}

Tensor mtl_predict_probs(const MtlCnnModel& model, const Tensor& x) {
    return dcnn_forward(model.core, x, nullptr);
}

}  // namespace nhnn
