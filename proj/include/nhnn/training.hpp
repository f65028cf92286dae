#ifndef NHNN_TRAINING_HPP
#define NHNN_TRAINING_HPP

#include <utility>
#include <vector>

#include "nhnn/model.hpp"

namespace nhnn {

struct TrainLog {
    std::vector<double> train_loss;  // per epoch, mean cross-entropy
    std::vector<double> val_loss;
    int best_epoch = -1;
    int epochs_run = 0;
};

// Trains the base model with a seeded validation split, Adam and early
// stopping on validation loss; returns the best-validation checkpoint.
DcnnModel train_base_dcnn(const std::vector<const Utterance*>& train_utts,
                          const NormStats& norm, const TrainingConfig& config,
                          TrainLog* log = nullptr);

// Hard-assigns training utterances to clusters of nhnn.dpgmm and fine-tunes
// each head on its cluster with the same early-stopping protocol. Heads
// whose cluster holds fewer than 2*batch_size utterances keep the base
// classifier.
void finetune_heads(NhnnModel& nhnn, const std::vector<const Utterance*>& train_utts,
                    const NormStats& norm, const TrainingConfig& config,
                    std::vector<TrainLog>* logs = nullptr);

// Multitask baseline: valence head plus an auxiliary attribute head on a
// shared encoder, loss CE_valence + lambda * CE_aux. Early stopping
// monitors the valence validation loss.
MtlCnnModel train_mtl_cnn(const std::vector<const Utterance*>& train_utts,
                          const NormStats& norm, const std::string& aux_attr, double lambda,
                          const TrainingConfig& config, TrainLog* log = nullptr);

Tensor mtl_predict_probs(const MtlCnnModel& model, const Tensor& x);

}  // namespace nhnn

#endif
