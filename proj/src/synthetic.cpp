#include "nhnn/synthetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nhnn/rng.hpp"

namespace nhnn {

void SyntheticSpec::validate() const {
    if (n_groups < 1) throw std::domain_error("synthetic: n_groups must be >= 1");
    if (group_separation < 0.0) throw std::domain_error("synthetic: group_separation must be >= 0");
    if (n_speakers_per_group < 1 || utterances_per_speaker < 1)
        throw std::domain_error("synthetic: speaker/utterance counts must be >= 1");
    if (d_s < n_groups) throw std::domain_error("synthetic: d_s must be >= n_groups");
    if (n_mel < 2) throw std::domain_error("synthetic: n_mel must be >= 2");
    if (T_min < 1 || T_max < T_min) throw std::domain_error("synthetic: bad T range");
    if (label_map_mode == LabelMapMode::GroupFlipped && n_groups < 2)
        throw std::domain_error("synthetic: group_flipped needs >= 2 groups");
}

double planted_stat_offset(const SyntheticSpec& spec, int group, LabelBin label) {
    const double base = (static_cast<int>(label) - 1) * spec.stat_offset;
    if (spec.label_map_mode == LabelMapMode::GroupFlipped && (group % 2) == 1) return -base;
    return base;
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    Corpus corpus;
    corpus.name = "synthetic";
    corpus.scale_mid = 3;

    // centers sep/sqrt(2) along distinct axes: every pair sits exactly
    // group_separation apart under the unit covariance
    const double center_scale = spec.group_separation / std::sqrt(2.0);

    for (int g = 0; g < spec.n_groups; ++g) {
        for (int s = 0; s < spec.n_speakers_per_group; ++s) {
            const std::string speaker = "g" + std::to_string(g) + "_s" + std::to_string(s);
            const bool female = (s % 2) == 0;
            for (int k = 0; k < spec.utterances_per_speaker; ++k) {
                Utterance u;
                u.id = speaker + "_u" + std::to_string(k);
                u.speaker_id = speaker;
                u.attrs["group"] = "g" + std::to_string(g);
                u.attrs["gender"] = female ? "f" : "m";
                u.attrs["native_language"] = (g % 2) ? "other" : "en";

                int label;
                if (spec.label_map_mode == LabelMapMode::GroupFlipped)
                    label = rng.uniform_int(2) * 2;  // Low or High
                else
                    label = rng.uniform_int(3);
                u.annotations = {corpus.scale_mid + (label - 1)};
                u.label = static_cast<LabelBin>(label);

                u.summary = Tensor({spec.d_s});
                for (int d = 0; d < spec.d_s; ++d)
                    u.summary.data[d] = (d == g ? center_scale : 0.0) + rng.normal();

                const int T = spec.T_min + rng.uniform_int(spec.T_max - spec.T_min + 1);
                u.frames = Tensor({spec.n_mel, T});
                u.frame_count = T;
                const double stat = planted_stat_offset(spec, g, static_cast<LabelBin>(label));
                const double gender_off = female ? spec.gender_offset : -spec.gender_offset;
                for (int c = 0; c < spec.n_mel; ++c) {
                    double off = 0.0;
                    if (c == 0) off = stat;
                    if (c == 1) off = gender_off;
                    double* row = u.frames.ptr() + static_cast<std::size_t>(c) * T;
                    for (int t = 0; t < T; ++t) row[t] = off + rng.normal();
                }
                corpus.utterances.push_back(std::move(u));
            }
        }
    }
    return corpus;
}

}  // namespace nhnn
