#include "nhnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nhnn/special.hpp"

namespace nhnn {

void ConfusionMatrix::add(int true_class, int predicted) {
    if (true_class < 0 || true_class >= n_class || predicted < 0 || predicted >= n_class)
        throw std::out_of_range("confusion matrix: class out of range");
    at(true_class, predicted)++;
}

long ConfusionMatrix::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

double uar(const ConfusionMatrix& cm) {
    double sum = 0.0;
    int n_present = 0;
    for (int t = 0; t < cm.n_class; ++t) {
        long row = 0;
        for (int p = 0; p < cm.n_class; ++p) row += cm.at(t, p);
        if (row == 0) continue;
        sum += static_cast<double>(cm.at(t, t)) / row;
        ++n_present;
    }
    if (n_present == 0) throw std::domain_error("uar: no class present in the test set");
    return sum / n_present;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::domain_error("paired_t_test: unequal lengths");
    const int n = static_cast<int>(a.size());
    if (n < 2) throw std::domain_error("paired_t_test: need at least 2 pairs");
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double c = (a[i] - b[i]) - mean;
        ss += c * c;
    }
    TTestResult res;
    res.n_pairs = n;
    res.degrees_of_freedom = n - 1;
    const double sd = std::sqrt(ss / (n - 1));
    if (sd == 0.0) {
        if (mean == 0.0) {  // identical samples: t = 0, p = 1
            res.t_statistic = 0.0;
            res.p_value_two_sided = 1.0;
        } else {
            res.degenerate = true;
            res.t_statistic = std::numeric_limits<double>::quiet_NaN();
            res.p_value_two_sided = 0.0;
        }
        return res;
    }
    res.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
    res.p_value_two_sided = student_t_two_sided_p(res.t_statistic, res.degrees_of_freedom);
    return res;
}

LosoPlan loso_split(const Corpus& corpus) {
    std::map<std::string, std::vector<int>> by_speaker;
    for (int i = 0; i < static_cast<int>(corpus.utterances.size()); ++i)
        by_speaker[corpus.utterances[i].speaker_id].push_back(i);
    if (by_speaker.size() < 2) throw std::domain_error("loso_split: need at least 2 speakers");
    LosoPlan plan;
    for (const auto& [speaker, test_ids] : by_speaker) {
        LosoFold fold;
        fold.speaker_id = speaker;
        fold.test_ids = test_ids;
        for (const auto& [other, ids] : by_speaker)
            if (other != speaker)
                fold.train_ids.insert(fold.train_ids.end(), ids.begin(), ids.end());
        std::sort(fold.train_ids.begin(), fold.train_ids.end());
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

GroupBreakdown group_breakdown(const std::vector<const Utterance*>& utts,
                               const std::vector<int>& predictions, const std::string& attr,
                               const GroupBreakdown* reference) {
    if (utts.size() != predictions.size())
        throw std::domain_error("group_breakdown: predictions/utterances size mismatch");
    GroupBreakdown out;
    for (std::size_t i = 0; i < utts.size(); ++i) {
        auto it = utts[i]->attrs.find(attr);
        if (it == utts[i]->attrs.end())
            throw std::domain_error("group_breakdown: utterance '" + utts[i]->id +
                                    "' missing attribute '" + attr + "'");
        auto [mit, inserted] = out.matrices.try_emplace(it->second, ConfusionMatrix(3));
        if (!utts[i]->label) throw std::domain_error("group_breakdown: unlabeled utterance");
        mit->second.add(static_cast<int>(*utts[i]->label), predictions[i]);
    }
    for (const auto& [value, cm] : out.matrices) {
        out.uars[value] = uar(cm);
        if (reference) {
            auto rit = reference->uars.find(value);
            if (rit != reference->uars.end()) out.deltas[value] = out.uars[value] - rit->second;
        }
    }
    return out;
}

namespace {

ClusterAttributeReport::Cluster summarize_cluster(const std::vector<const Utterance*>& members,
                                                  int cluster,
                                                  const std::vector<std::string>& binary_attrs) {
    ClusterAttributeReport::Cluster out;
    out.cluster = cluster;
    out.size = static_cast<long>(members.size());

    for (const std::string& attr : binary_attrs) {
        std::map<std::string, long> counts;
        for (const Utterance* u : members) {
            auto it = u->attrs.find(attr);
            if (it != u->attrs.end()) counts[it->second]++;
        }
        if (counts.empty()) continue;
        ClusterAttributeReport::Ratio ratio;
        auto it = counts.begin();
        ratio.value_a = it->first;
        ratio.count_a = it->second;
        if (counts.size() >= 2) {
            ++it;
            ratio.value_b = it->first;
            ratio.count_b = it->second;
        }
        if (ratio.count_b == 0) {
            ratio.infinite = true;
        } else {
            ratio.value = static_cast<double>(ratio.count_a) / ratio.count_b;
        }
        out.attr_ratios[attr] = ratio;
    }

    std::map<std::string, long> per_subject;
    for (const Utterance* u : members) per_subject[u->speaker_id]++;
    long mx = 0, mn = std::numeric_limits<long>::max();
    for (const auto& [s, c] : per_subject) {
        mx = std::max(mx, c);
        mn = std::min(mn, c);
    }
    if (per_subject.empty() || mn == 0) {
        out.dispersion_infinite = true;
    } else {
        out.subject_dispersion = static_cast<double>(mx) / mn;
    }
    return out;
}

}  // namespace

ClusterAttributeReport cluster_attribute_ratios(const std::vector<const Utterance*>& utts,
                                                const std::vector<int>& assignments,
                                                const std::vector<std::string>& binary_attrs) {
    if (utts.size() != assignments.size())
        throw std::domain_error("cluster_attribute_ratios: assignments must cover the corpus");
    ClusterAttributeReport report;
    report.clusters.push_back(summarize_cluster(utts, -1, binary_attrs));
    const int k = assignments.empty() ? 0 : *std::max_element(assignments.begin(), assignments.end()) + 1;
    for (int c = 0; c < k; ++c) {
        std::vector<const Utterance*> members;
        for (std::size_t i = 0; i < utts.size(); ++i)
            if (assignments[i] == c) members.push_back(utts[i]);
        report.clusters.push_back(summarize_cluster(members, c, binary_attrs));
    }
    return report;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::domain_error("adjusted_rand_index: labelings must match and be nonempty");
    std::map<std::pair<int, int>, long> joint;
    std::map<int, long> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}]++;
        ca[a[i]]++;
        cb[b[i]]++;
    }
    auto comb2 = [](long x) { return 0.5 * x * (x - 1); };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, v] : joint) sum_joint += comb2(v);
    for (const auto& [k, v] : ca) sum_a += comb2(v);
    for (const auto& [k, v] : cb) sum_b += comb2(v);
    const double n2 = comb2(static_cast<long>(a.size()));
    const double expected = sum_a * sum_b / n2;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum == expected) return 1.0;  // both partitions trivial
    return (sum_joint - expected) / (maximum - expected);
}

}  // namespace nhnn
