#ifndef NHNN_MODEL_HPP
#define NHNN_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "nhnn/dataio.hpp"
#include "nhnn/dpgmm.hpp"
#include "nhnn/neural.hpp"

namespace nhnn {

// Two dilated conv layers (channel size 128) into a dense classifier.
struct DcnnModel {
    int n_mel = 40;
    int n_class = 3;
    DilatedConv1d conv1;  // n_mel -> 128, k=8, dilation 2
    DilatedConv1d conv2;  // 128 -> 128, k=8, dilation 4
    Dense fc1;            // 128 -> 128
    Dense fc2;            // 128 -> n_class

    static DcnnModel make(int n_mel, int n_class, Rng& rng);
    std::vector<Param*> params();
    void set_frozen(bool conv1_frozen, bool conv2_frozen, bool classifier_frozen);
};

// Shared-encoder multitask variant: valence head plus an auxiliary head.
struct MtlCnnModel {
    DcnnModel core;      // encoder + valence classifier
    Dense fc1_aux, fc2_aux;
    std::vector<std::string> aux_values;  // attribute value -> aux class index
    double lambda = 1.0;

    std::vector<Param*> params();
};

enum class Variant { FC, FCConv };

// z-scoring applied to summary features before DP-GMM fitting/evaluation.
struct SummaryScaler {
    std::vector<double> mean, stddev;

    static SummaryScaler fit(const Tensor& X);
    Tensor transform(const Tensor& X) const;              // {n,d}
    std::vector<double> transform_row(const double* x) const;
};

struct NhnnModel {
    DcnnModel base;
    Variant variant = Variant::FC;
    DpGmmModel dpgmm;          // pruned; one head per active component
    SummaryScaler scaler;
    struct Head {
        std::optional<DilatedConv1d> conv2;  // FCConv only
        Dense fc1, fc2;
        bool tuned = false;
    };
    std::vector<Head> heads;
};

struct TrainingConfig {
    int batch_size = 64;
    double learning_rate = 1e-4;
    int patience = 5;
    int max_epochs = 50;
    double validation_fraction = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

// ---- forward passes

struct ForwardCache {
    int T = 0;
    Tensor x;             // {n_mel, T}
    Tensor h1, a1, h2, a2;  // {128, T}
    std::vector<int> argmax;
    Tensor pooled, f1, r1, logits, probs;
};

// Full forward; returns class probabilities. cache may be null when no
// backward pass will follow.
Tensor dcnn_forward(const DcnnModel& model, const Tensor& x, ForwardCache* cache);

// Accumulates gradients of loss_scale * cross_entropy(probs, label).
void dcnn_backward(DcnnModel& model, const ForwardCache& cache, int label, double loss_scale);

// Encoder bottleneck only (128 vector).
Tensor dcnn_encode(const DcnnModel& model, const Tensor& x);

// Minibatch forward/backward on the concatenated-column layout; one im2col
// + GEMM pass per conv layer instead of per-sample kernels.
struct BatchCache {
    BatchLayout layout;
    Tensor xcat;                 // {n_mel, total}
    Tensor xcol1, h1, a1;        // conv1 im2col input and outputs
    Tensor xcol2, h2, a2;
    Tensor pooled;               // {128, B}
    std::vector<int> argmax;     // {128 * B}, within-sample columns
    Tensor f1, r1, logits, probs;  // dense stack, one column per sample
};

void dcnn_forward_batch(const DcnnModel& model, const std::vector<const Tensor*>& xs,
                        BatchCache& cache);
// Accumulates gradients of loss_scale * sum_i cross_entropy(probs_i, label_i).
void dcnn_backward_batch(DcnnModel& model, const BatchCache& cache,
                         const std::vector<int>& labels, double loss_scale);
// Sum of per-sample cross entropies from a finished forward pass.
double batch_cross_entropy(const BatchCache& cache, const std::vector<int>& labels);

// Head forward for one utterance: FC heads consume a precomputed
// bottleneck; FCConv heads rerun conv2 from the first relu output.
Tensor head_forward(const NhnnModel& model, const NhnnModel::Head& head, const Tensor& x);

// Posterior-weighted class probabilities: responsibilities of the
// scaled summary features mix the per-head softmax outputs.
Tensor nhnn_predict_weighted(const NhnnModel& model, const Utterance& utt, const NormStats& norm);
LabelBin nhnn_predict_label(const NhnnModel& model, const Utterance& utt, const NormStats& norm);

// argmax with ties toward the lowest class index
LabelBin argmax_label(const Tensor& probs);

// Clone per-cluster heads from a trained base; FC freezes both conv
// layers, FCConv clones and tunes the second.
NhnnModel build_nhnn(const DcnnModel& base, const DpGmmModel& dpgmm, const SummaryScaler& scaler,
                     Variant variant);

long param_count(std::vector<Param*> params);

// ---- checkpoints (JSON named tensors)

void save_dcnn(const DcnnModel& model, const std::string& path);
DcnnModel load_dcnn(const std::string& path);
void save_mtl(const MtlCnnModel& model, const std::string& path);
MtlCnnModel load_mtl(const std::string& path);
void save_nhnn(const NhnnModel& model, const std::string& dir);
NhnnModel load_nhnn(const std::string& dir);

}  // namespace nhnn

#endif
