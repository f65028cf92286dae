#ifndef NHNN_EVALUATION_HPP
#define NHNN_EVALUATION_HPP

#include <map>
#include <string>
#include <vector>

#include "nhnn/dataio.hpp"

namespace nhnn {

// rows = true class, columns = predicted
struct ConfusionMatrix {
    int n_class = 3;
    std::vector<long> counts;  // n_class * n_class

    explicit ConfusionMatrix(int n = 3) : n_class(n), counts(static_cast<std::size_t>(n) * n, 0) {}
    void add(int true_class, int predicted);
    long total() const;
    long& at(int t, int p) { return counts[static_cast<std::size_t>(t) * n_class + p]; }
    long at(int t, int p) const { return counts[static_cast<std::size_t>(t) * n_class + p]; }
};

// Mean per-class recall; classes absent from the test set are dropped from
// the mean. Throws when every row is empty.
double uar(const ConfusionMatrix& cm);

struct TTestResult {
    double t_statistic = 0.0;
    int degrees_of_freedom = 0;
    double p_value_two_sided = 1.0;
    int n_pairs = 0;
    bool degenerate = false;  // zero-variance differences: t undefined
};

// Paired t-test on per-subject metric pairs; sample (1/(n-1)) sd, two-sided
// p from the Student-t CDF.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct LosoFold {
    std::string speaker_id;
    std::vector<int> train_ids;  // utterance indices into the corpus
    std::vector<int> test_ids;
};

struct LosoPlan {
    std::vector<LosoFold> folds;  // ordered by speaker id
};

LosoPlan loso_split(const Corpus& corpus);

// Per-attribute-value UAR breakdown (mirrors delta-UAR reporting when a
// reference is supplied).
struct GroupBreakdown {
    std::map<std::string, ConfusionMatrix> matrices;
    std::map<std::string, double> uars;
    std::map<std::string, double> deltas;  // vs a reference breakdown, if any
};

GroupBreakdown group_breakdown(const std::vector<const Utterance*>& utts,
                               const std::vector<int>& predictions, const std::string& attr,
                               const GroupBreakdown* reference = nullptr);

// Per-cluster composition report: binary-attribute count ratios and the
// max/min subject segment-count dispersion.
struct ClusterAttributeReport {
    struct Ratio {
        long count_a = 0, count_b = 0;
        bool infinite = false;  // zero denominator
        double value = 0.0;
        std::string value_a, value_b;
    };
    struct Cluster {
        int cluster = -1;  // -1 = whole corpus
        long size = 0;
        std::map<std::string, Ratio> attr_ratios;
        double subject_dispersion = 0.0;  // max/min segment counts
        bool dispersion_infinite = false;
    };
    std::vector<Cluster> clusters;  // overall entry first, then per cluster
};

ClusterAttributeReport cluster_attribute_ratios(const std::vector<const Utterance*>& utts,
                                                const std::vector<int>& assignments,
                                                const std::vector<std::string>& binary_attrs);

// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace nhnn

#endif
