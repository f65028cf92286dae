#ifndef NHNN_DATAIO_HPP
#define NHNN_DATAIO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nhnn/tensor.hpp"

namespace nhnn {

// Floor applied to every variance / standard deviation in the project.
constexpr double kVarianceFloor = 1e-8;

enum class LabelBin : int { Low = 0, Medium = 1, High = 2 };

struct Utterance {
    std::string id;
    std::string speaker_id;
    std::map<std::string, std::string> attrs;   // e.g. gender, native_language, group
    std::vector<int> annotations;               // ordinal ratings in [1, 2*scale_mid-1]
    Tensor summary;                             // {d_s} utterance-level features
    Tensor frames;                              // {n_mel, T} frame-level features
    int frame_count = 0;
    std::optional<LabelBin> label;              // majority bin, set at load

    int n_mel() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
    int summary_dim() const { return static_cast<int>(summary.size()); }
};

// Per-mel-coefficient normalization statistics, population convention.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at sqrt(kVarianceFloor)... see fit_norm_stats
};

struct Corpus {
    std::string name;
    int scale_mid = 3;  // 3 or 5
    std::vector<Utterance> utterances;
    std::optional<NormStats> norm_stats;
    int excluded_count = 0;  // utterances dropped for lacking a majority bin
};

// ---- labeling

// rating < mid -> Low, = mid -> Medium, > mid -> High. Throws on ratings
// outside [1, 2*mid-1].
LabelBin bin_annotation(int rating, int scale_mid);

// Strict majority bin; nullopt when the top count is tied (utterance excluded).
std::optional<LabelBin> majority_label(const std::vector<int>& annotations, int scale_mid);

// ---- normalization

// Population mean/std per mel coefficient over all frames of all given
// utterances. Std entries are floored so z-scoring a constant coefficient
// yields 0.
NormStats fit_norm_stats(const std::vector<const Utterance*>& train_utts);

// (x - mean) / std, per coefficient. Returns a {n_mel, T} tensor.
Tensor apply_znorm(const Utterance& utt, const NormStats& stats);

// ---- batching

struct Batch {
    Tensor x;                  // {n, n_mel, max_T}, zero padded past each length
    std::vector<int> lengths;  // true frame counts
};

Batch pad_batch(const std::vector<const Utterance*>& utts);

// ---- file formats
//
// A corpus on disk is a JSON manifest plus CSV feature files:
//   manifest.json   {name, scale_mid, summary_csv, utterances: [...]}
//   summary.csv     header "id,f0,...,f{d-1}", one row per utterance
//   frames/<id>.csv rows = mel coefficients, columns = frames
// Paths in the manifest are relative to the manifest's directory.

Corpus load_corpus(const std::string& manifest_path);
void save_corpus(const Corpus& corpus, const std::string& out_dir);

// ---- labeled views

// Indices of utterances that carry a label.
std::vector<int> labeled_indices(const Corpus& corpus);

}  // namespace nhnn

#endif
