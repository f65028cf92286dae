#include "nhnn/dataio.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace nhnn {

LabelBin bin_annotation(int rating, int scale_mid) {
    const int scale_max = 2 * scale_mid - 1;
    if (rating < 1 || rating > scale_max)
        throw std::domain_error("bin_annotation: rating " + std::to_string(rating) +
                                " outside [1, " + std::to_string(scale_max) + "]");
    if (rating < scale_mid) return LabelBin::Low;
    if (rating > scale_mid) return LabelBin::High;
    return LabelBin::Medium;
}

std::optional<LabelBin> majority_label(const std::vector<int>& annotations, int scale_mid) {
    if (annotations.empty()) throw std::domain_error("majority_label: empty annotation list");
    std::array<int, 3> counts{0, 0, 0};
    for (int r : annotations) counts[static_cast<int>(bin_annotation(r, scale_mid))]++;
    int best = 0;
    for (int b = 1; b < 3; ++b)
        if (counts[b] > counts[best]) best = b;
    int n_top = 0;
    for (int b = 0; b < 3; ++b)
        if (counts[b] == counts[best]) ++n_top;
    if (n_top > 1) return std::nullopt;
    return static_cast<LabelBin>(best);
}

NormStats fit_norm_stats(const std::vector<const Utterance*>& train_utts) {
    if (train_utts.empty()) throw std::domain_error("fit_norm_stats: empty training set");
    const int n_mel = train_utts.front()->n_mel();
    std::vector<double> sum(n_mel, 0.0), sumsq(n_mel, 0.0);
    long n_frames = 0;
    for (const Utterance* u : train_utts) {
        if (u->n_mel() != n_mel)
            throw std::domain_error("fit_norm_stats: inconsistent mel dimension");
        const int T = u->frame_count;
        for (int c = 0; c < n_mel; ++c) {
            const double* row = u->frames.ptr() + static_cast<std::size_t>(c) * T;
            for (int t = 0; t < T; ++t) {
                sum[c] += row[t];
                sumsq[c] += row[t] * row[t];
            }
        }
        n_frames += T;
    }
    if (n_frames < 2) throw std::domain_error("fit_norm_stats: need at least 2 frames");
    NormStats stats;
    stats.mean.resize(n_mel);
    stats.stddev.resize(n_mel);
    for (int c = 0; c < n_mel; ++c) {
        stats.mean[c] = sum[c] / n_frames;
        const double var = std::max(sumsq[c] / n_frames - stats.mean[c] * stats.mean[c], 0.0);
        stats.stddev[c] = std::max(std::sqrt(var), kVarianceFloor);
    }
    return stats;
}

Tensor apply_znorm(const Utterance& utt, const NormStats& stats) {
    const int n_mel = utt.n_mel();
    const int T = utt.frame_count;
    if (static_cast<int>(stats.mean.size()) != n_mel)
        throw std::domain_error("apply_znorm: stats dimension mismatch");
    Tensor out({n_mel, T});
    for (int c = 0; c < n_mel; ++c) {
        const double* src = utt.frames.ptr() + static_cast<std::size_t>(c) * T;
        double* dst = out.ptr() + static_cast<std::size_t>(c) * T;
        const double m = stats.mean[c], s = stats.stddev[c];
        for (int t = 0; t < T; ++t) dst[t] = (src[t] - m) / s;
    }
    return out;
}

Batch pad_batch(const std::vector<const Utterance*>& utts) {
    if (utts.empty()) return {};
    const int n_mel = utts.front()->n_mel();
    int max_T = 0;
    for (const Utterance* u : utts) max_T = std::max(max_T, u->frame_count);
    Batch batch;
    batch.x = Tensor({static_cast<int>(utts.size()), n_mel, max_T});
    for (std::size_t i = 0; i < utts.size(); ++i) {
        const Utterance* u = utts[i];
        const int T = u->frame_count;
        double* dst = batch.x.ptr() + i * static_cast<std::size_t>(n_mel) * max_T;
        for (int c = 0; c < n_mel; ++c)
            for (int t = 0; t < T; ++t)
                dst[static_cast<std::size_t>(c) * max_T + t] =
                    u->frames.data[static_cast<std::size_t>(c) * T + t];
        batch.lengths.push_back(T);
    }
    return batch;
}

std::vector<int> labeled_indices(const Corpus& corpus) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(corpus.utterances.size()); ++i)
        if (corpus.utterances[i].label) idx.push_back(i);
    return idx;
}

// ---- CSV helpers

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

void write_double(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
}

double parse_double(const std::string& s, const std::string& ctx) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("malformed number '" + s + "' in " + ctx);
    }
}

Tensor load_frames_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing feature file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const std::string& f : split_csv_line(line))
            row.push_back(parse_double(f, path.string()));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged frame rows in " + path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty feature file: " + path.string());
    Tensor t({static_cast<int>(rows.size()), static_cast<int>(rows.front().size())});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            t.data[r * rows[r].size() + c] = rows[r][c];
    return t;
}

}  // namespace

Corpus load_corpus(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("missing manifest: " + manifest_path);
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid manifest JSON: " + std::string(e.what()));
    }
    const fs::path base = fs::path(manifest_path).parent_path();

    Corpus corpus;
    corpus.name = m.at("name").get<std::string>();
    corpus.scale_mid = m.at("scale_mid").get<int>();
    if (corpus.scale_mid != 3 && corpus.scale_mid != 5)
        throw std::runtime_error("scale_mid must be 3 or 5");

    // summary CSV: header "id,f0,..."; one row per utterance
    const fs::path summary_path = base / m.at("summary_csv").get<std::string>();
    std::ifstream sf(summary_path);
    if (!sf) throw std::runtime_error("missing summary feature file: " + summary_path.string());
    std::string line;
    if (!std::getline(sf, line)) throw std::runtime_error("empty summary file");
    const int d_s = static_cast<int>(split_csv_line(line).size()) - 1;
    if (d_s < 1) throw std::runtime_error("summary header must list feature columns");
    std::map<std::string, std::vector<double>> summaries;
    while (std::getline(sf, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != d_s + 1)
            throw std::runtime_error("summary dimension mismatch for utterance '" + fields[0] +
                                     "': expected " + std::to_string(d_s) + " features, got " +
                                     std::to_string(fields.size() - 1));
        std::vector<double> v;
        for (std::size_t i = 1; i < fields.size(); ++i)
            v.push_back(parse_double(fields[i], summary_path.string()));
        summaries[fields[0]] = std::move(v);
    }

    for (const auto& ju : m.at("utterances")) {
        Utterance u;
        u.id = ju.at("id").get<std::string>();
        u.speaker_id = ju.at("speaker_id").get<std::string>();
        if (ju.contains("attrs"))
            for (auto it = ju["attrs"].begin(); it != ju["attrs"].end(); ++it)
                u.attrs[it.key()] = it.value().get<std::string>();
        u.annotations = ju.at("annotations").get<std::vector<int>>();
        if (u.annotations.empty())
            throw std::runtime_error("utterance '" + u.id + "' has no annotations");

        auto sit = summaries.find(u.id);
        if (sit == summaries.end())
            throw std::runtime_error("utterance '" + u.id + "' missing from summary CSV");
        u.summary = Tensor({static_cast<int>(sit->second.size())});
        u.summary.data = sit->second;

        u.frames = load_frames_csv(base / ju.at("framed_csv").get<std::string>());
        u.frame_count = u.frames.shape[1];

        if (!u.summary.all_finite() || !u.frames.all_finite())
            throw std::runtime_error("non-finite feature values in utterance '" + u.id + "'");

        u.label = majority_label(u.annotations, corpus.scale_mid);
        if (!u.label) {
            corpus.excluded_count++;
            continue;  // no majority bin: dropped at load time
        }
        for (const Utterance& prev : corpus.utterances)
            if (prev.id == u.id) throw std::runtime_error("duplicate utterance id '" + u.id + "'");
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir / "frames");

    json m;
    m["name"] = corpus.name;
    m["scale_mid"] = corpus.scale_mid;
    m["summary_csv"] = "summary.csv";
    m["utterances"] = json::array();

    std::ofstream sf(dir / "summary.csv");
    const int d_s = corpus.utterances.empty() ? 0 : corpus.utterances.front().summary_dim();
    sf << "id";
    for (int i = 0; i < d_s; ++i) sf << ",f" << i;
    sf << "\n";

    for (const Utterance& u : corpus.utterances) {
        sf << u.id;
        for (double v : u.summary.data) {
            sf << ",";
            write_double(sf, v);
        }
        sf << "\n";

        const std::string frames_rel = "frames/" + u.id + ".csv";
        std::ofstream ff(dir / frames_rel);
        const int T = u.frame_count;
        for (int c = 0; c < u.n_mel(); ++c) {
            for (int t = 0; t < T; ++t) {
                if (t) ff << ",";
                write_double(ff, u.frames.data[static_cast<std::size_t>(c) * T + t]);
            }
            ff << "\n";
        }

        json ju;
        ju["id"] = u.id;
        ju["speaker_id"] = u.speaker_id;
        ju["attrs"] = u.attrs;
        ju["annotations"] = u.annotations;
        ju["framed_csv"] = frames_rel;
        m["utterances"].push_back(ju);
    }
    std::ofstream mf(dir / "manifest.json");
    mf << m.dump(2) << "\n";
}

}  // namespace nhnn
