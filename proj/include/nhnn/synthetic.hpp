#ifndef NHNN_SYNTHETIC_HPP
#define NHNN_SYNTHETIC_HPP

#include <cstdint>

#include "nhnn/dataio.hpp"

namespace nhnn {

enum class LabelMapMode { Shared, GroupFlipped };

// Generator for verification corpora. Summary features are unit-variance
// Gaussians whose group centers sit group_separation apart (Mahalanobis).
// The label is carried by the mean of mel coefficient 0: offset
// (label-1)*stat_offset in Shared mode; odd groups negate the offset in
// GroupFlipped mode, which also restricts labels to {Low, High} so that a
// single group-blind decision rule on that statistic caps at UAR 0.5.
// Mel coefficient 1 carries a +/- gender offset so gender is decodable as
// an auxiliary task.
struct SyntheticSpec {
    int n_groups = 2;
    int n_speakers_per_group = 5;
    int utterances_per_speaker = 20;
    int d_s = 88;
    int n_mel = 40;
    int T_min = 20, T_max = 30;
    double group_separation = 6.0;
    LabelMapMode label_map_mode = LabelMapMode::Shared;
    double stat_offset = 3.0;
    double gender_offset = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

Corpus generate_synthetic(const SyntheticSpec& spec);

// Mean mel-coefficient-0 offset planted for (group, label); the quantity a
// Bayes-rule oracle needs.
double planted_stat_offset(const SyntheticSpec& spec, int group, LabelBin label);

}  // namespace nhnn

#endif
