#include "nhnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace nhnn {

DcnnModel DcnnModel::make(int n_mel, int n_class, Rng& rng) {
    DcnnModel m;
    m.n_mel = n_mel;
    m.n_class = n_class;
    m.conv1 = DilatedConv1d(n_mel, 128, 8, 2);
    m.conv2 = DilatedConv1d(128, 128, 8, 4);
    m.fc1 = Dense(128, 128);
    m.fc2 = Dense(128, n_class);
    m.conv1.init_params(rng);
    m.conv2.init_params(rng);
    m.fc1.init_params(rng);
    m.fc2.init_params(rng);
    return m;
}

std::vector<Param*> DcnnModel::params() {
    return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias,
            &fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias};
}

void DcnnModel::set_frozen(bool conv1_frozen, bool conv2_frozen, bool classifier_frozen) {
    conv1.weight.frozen = conv1.bias.frozen = conv1_frozen;
    conv2.weight.frozen = conv2.bias.frozen = conv2_frozen;
    fc1.weight.frozen = fc1.bias.frozen = classifier_frozen;
    fc2.weight.frozen = fc2.bias.frozen = classifier_frozen;
}

std::vector<Param*> MtlCnnModel::params() {
    auto p = core.params();
    p.push_back(&fc1_aux.weight);
    p.push_back(&fc1_aux.bias);
    p.push_back(&fc2_aux.weight);
    p.push_back(&fc2_aux.bias);
    return p;
}

void TrainingConfig::validate() const {
    if (batch_size < 1 || patience < 1 || max_epochs < 1)
        throw std::domain_error("training config: counts must be positive");
    if (!(learning_rate > 0.0)) throw std::domain_error("training config: learning_rate must be > 0");
    if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0))
        throw std::domain_error("training config: validation_fraction must lie in (0,1)");
}

SummaryScaler SummaryScaler::fit(const Tensor& X) {
    const int n = X.shape[0], d = X.shape[1];
    SummaryScaler s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) s.mean[j] += X.at(i, j);
    for (int j = 0; j < d; ++j) s.mean[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double c = X.at(i, j) - s.mean[j];
            s.stddev[j] += c * c;
        }
    for (int j = 0; j < d; ++j)
        s.stddev[j] = std::max(std::sqrt(s.stddev[j] / n), kVarianceFloor);
    return s;
}

Tensor SummaryScaler::transform(const Tensor& X) const {
    const int n = X.shape[0], d = X.shape[1];
    if (static_cast<int>(mean.size()) != d)
        throw std::domain_error("summary scaler: dimension mismatch");
    Tensor out({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = (X.at(i, j) - mean[j]) / stddev[j];
    return out;
}

std::vector<double> SummaryScaler::transform_row(const double* x) const {
    std::vector<double> out(mean.size());
    for (std::size_t j = 0; j < mean.size(); ++j) out[j] = (x[j] - mean[j]) / stddev[j];
    return out;
}

Tensor dcnn_forward(const DcnnModel& model, const Tensor& x, ForwardCache* cache) {
    const int T = x.shape[1];
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.T = T;
    c.x = x;
    c.h1 = Tensor({128, T});
    c.a1 = Tensor({128, T});
    c.h2 = Tensor({128, T});
    c.a2 = Tensor({128, T});
    conv1d_forward(model.conv1, x.ptr(), T, c.h1.ptr());
    relu_forward(c.h1.ptr(), 128 * T, c.a1.ptr());
    conv1d_forward(model.conv2, c.a1.ptr(), T, c.h2.ptr());
    relu_forward(c.h2.ptr(), 128 * T, c.a2.ptr());
    c.argmax.assign(128, 0);
    c.pooled = Tensor({128});
    global_max_pool(c.a2.ptr(), 128, T, T, c.pooled.ptr(), c.argmax.data());
    c.f1 = Tensor({128});
    dense_forward(model.fc1, c.pooled.ptr(), c.f1.ptr());
    c.r1 = Tensor({128});
    relu_forward(c.f1.ptr(), 128, c.r1.ptr());
    c.logits = Tensor({model.n_class});
    dense_forward(model.fc2, c.r1.ptr(), c.logits.ptr());
    c.probs = Tensor({model.n_class});
    softmax(c.logits.ptr(), model.n_class, c.probs.ptr());
    return c.probs;
}

void dcnn_backward(DcnnModel& model, const ForwardCache& c, int label, double loss_scale) {
    const int T = c.T;
    Tensor dlogits({model.n_class});
    for (int j = 0; j < model.n_class; ++j)
        dlogits.data[j] = (c.probs.data[j] - (j == label ? 1.0 : 0.0)) * loss_scale;
    Tensor dr1({128});
    dense_backward(model.fc2, c.r1.ptr(), dlogits.ptr(), dr1.ptr());
    Tensor df1({128});
    relu_backward(c.f1.ptr(), dr1.ptr(), 128, df1.ptr());
    Tensor dpooled({128});
    dense_backward(model.fc1, c.pooled.ptr(), df1.ptr(), dpooled.ptr());
    Tensor da2({128, T});
    global_max_pool_backward(dpooled.ptr(), 128, c.argmax.data(), T, da2.ptr());
    Tensor dh2({128, T});
    relu_backward(c.h2.ptr(), da2.ptr(), 128 * T, dh2.ptr());
    Tensor da1({128, T});
    conv1d_backward(model.conv2, c.a1.ptr(), T, dh2.ptr(), da1.ptr());
    Tensor dh1({128, T});
    relu_backward(c.h1.ptr(), da1.ptr(), 128 * T, dh1.ptr());
    conv1d_backward(model.conv1, c.x.ptr(), T, dh1.ptr(), nullptr);
}

Tensor dcnn_encode(const DcnnModel& model, const Tensor& x) {
    ForwardCache c;
    dcnn_forward(model, x, &c);
    return c.pooled;
}

void dcnn_forward_batch(const DcnnModel& model, const std::vector<const Tensor*>& xs,
                        BatchCache& c) {
    const int B = static_cast<int>(xs.size());
    std::vector<int> lengths(B);
    for (int s = 0; s < B; ++s) {
        if (xs[s]->shape[0] != model.n_mel)
            throw std::domain_error("dcnn batch: input channel mismatch");
        lengths[s] = xs[s]->shape[1];
    }
    c.layout = make_batch_layout(lengths);
    const int N = c.layout.total;

    c.xcat = Tensor({model.n_mel, N});
    for (int s = 0; s < B; ++s)
        for (int ch = 0; ch < model.n_mel; ++ch)
            std::copy(xs[s]->ptr() + static_cast<std::size_t>(ch) * lengths[s],
                      xs[s]->ptr() + static_cast<std::size_t>(ch + 1) * lengths[s],
                      c.xcat.ptr() + static_cast<std::size_t>(ch) * N + c.layout.offset[s]);

    c.xcol1 = Tensor({model.n_mel * model.conv1.kernel, N});
    conv_im2col(model.conv1, c.xcat.ptr(), c.layout, c.xcol1.ptr());
    conv1d_forward_cols(model.conv1, c.xcol1, c.h1);
    c.a1 = Tensor({128, N});
    relu_forward(c.h1.ptr(), 128 * N, c.a1.ptr());

    c.xcol2 = Tensor({128 * model.conv2.kernel, N});
    conv_im2col(model.conv2, c.a1.ptr(), c.layout, c.xcol2.ptr());
    conv1d_forward_cols(model.conv2, c.xcol2, c.h2);
    c.a2 = Tensor({128, N});
    relu_forward(c.h2.ptr(), 128 * N, c.a2.ptr());

    global_max_pool_cols(c.a2, c.layout, c.pooled, c.argmax);
    dense_forward_cols(model.fc1, c.pooled, c.f1);
    c.r1 = Tensor(c.f1.shape);
    relu_forward(c.f1.ptr(), static_cast<int>(c.f1.size()), c.r1.ptr());
    dense_forward_cols(model.fc2, c.r1, c.logits);
    softmax_cols(c.logits, c.probs);
}

void dcnn_backward_batch(DcnnModel& model, const BatchCache& c, const std::vector<int>& labels,
                         double loss_scale) {
    const int B = c.probs.shape[1];
    const int N = c.layout.total;
    Tensor dlogits({model.n_class, B});
    for (int s = 0; s < B; ++s)
        for (int j = 0; j < model.n_class; ++j)
            dlogits.at(j, s) = (c.probs.at(j, s) - (j == labels[s] ? 1.0 : 0.0)) * loss_scale;

    Tensor dr1, dpooled;
    dense_backward_cols(model.fc2, c.r1, dlogits, &dr1);
    Tensor df1(dr1.shape);
    relu_backward(c.f1.ptr(), dr1.ptr(), static_cast<int>(dr1.size()), df1.ptr());
    dense_backward_cols(model.fc1, c.pooled, df1, &dpooled);

    Tensor da2;
    global_max_pool_cols_backward(dpooled, c.layout, c.argmax, da2);
    Tensor dh2({128, N});
    relu_backward(c.h2.ptr(), da2.ptr(), 128 * N, dh2.ptr());

    Tensor dxcol2;
    conv1d_backward_cols(model.conv2, c.xcol2, dh2, &dxcol2);
    Tensor da1({128, N});
    conv_col2im(model.conv2, dxcol2, c.layout, da1.ptr());
    Tensor dh1({128, N});
    relu_backward(c.h1.ptr(), da1.ptr(), 128 * N, dh1.ptr());
    conv1d_backward_cols(model.conv1, c.xcol1, dh1, nullptr);
}

double batch_cross_entropy(const BatchCache& c, const std::vector<int>& labels) {
    const int B = c.probs.shape[1];
    double loss = 0.0;
    for (int s = 0; s < B; ++s)
        loss += -std::log(std::max(c.probs.at(labels[s], s), 1e-300));
    return loss;
}

namespace {

Tensor classifier_probs(const Dense& fc1, const Dense& fc2, const double* bottleneck) {
    Tensor f1({fc1.out_dim});
    dense_forward(fc1, bottleneck, f1.ptr());
    Tensor r1({fc1.out_dim});
    relu_forward(f1.ptr(), fc1.out_dim, r1.ptr());
    Tensor logits({fc2.out_dim});
    dense_forward(fc2, r1.ptr(), logits.ptr());
    Tensor probs({fc2.out_dim});
    softmax(logits.ptr(), fc2.out_dim, probs.ptr());
    return probs;
}

}  // namespace

Tensor head_forward(const NhnnModel& model, const NhnnModel::Head& head, const Tensor& x) {
    const int T = x.shape[1];
    Tensor h1({128, T}), a1({128, T});
    conv1d_forward(model.base.conv1, x.ptr(), T, h1.ptr());
    relu_forward(h1.ptr(), 128 * T, a1.ptr());
    const DilatedConv1d& c2 = head.conv2 ? *head.conv2 : model.base.conv2;
    Tensor h2({128, T}), a2({128, T});
    conv1d_forward(c2, a1.ptr(), T, h2.ptr());
    relu_forward(h2.ptr(), 128 * T, a2.ptr());
    Tensor pooled({128});
    global_max_pool(a2.ptr(), 128, T, T, pooled.ptr(), nullptr);
    return classifier_probs(head.fc1, head.fc2, pooled.ptr());
}

Tensor nhnn_predict_weighted(const NhnnModel& model, const Utterance& utt, const NormStats& norm) {
    if (utt.summary_dim() != model.dpgmm.d)
        throw std::domain_error("nhnn predict: summary feature dimension mismatch");
    const std::vector<double> scaled = model.scaler.transform_row(utt.summary.ptr());
    Tensor Xs({1, model.dpgmm.d});
    Xs.data = scaled;
    const Tensor resp = responsibilities(model.dpgmm, Xs);

    // conv1 is shared by every head (and conv2 too in the FC variant), so
    // the encoder runs once and only the per-head tail is recomputed.
    const Tensor x = apply_znorm(utt, norm);
    const int T = x.shape[1];
    Tensor h1({128, T}), a1({128, T});
    conv1d_forward(model.base.conv1, x.ptr(), T, h1.ptr());
    relu_forward(h1.ptr(), 128 * T, a1.ptr());
    Tensor shared_pooled({128});
    if (model.variant == Variant::FC) {
        Tensor h2({128, T}), a2({128, T});
        conv1d_forward(model.base.conv2, a1.ptr(), T, h2.ptr());
        relu_forward(h2.ptr(), 128 * T, a2.ptr());
        global_max_pool(a2.ptr(), 128, T, T, shared_pooled.ptr(), nullptr);
    }

    Tensor out({model.base.n_class});
    for (std::size_t i = 0; i < model.heads.size(); ++i) {
        const NhnnModel::Head& head = model.heads[i];
        Tensor probs;
        if (model.variant == Variant::FC) {
            probs = classifier_probs(head.fc1, head.fc2, shared_pooled.ptr());
        } else {
            Tensor h2({128, T}), a2({128, T}), pooled({128});
            conv1d_forward(head.conv2 ? *head.conv2 : model.base.conv2, a1.ptr(), T, h2.ptr());
            relu_forward(h2.ptr(), 128 * T, a2.ptr());
            global_max_pool(a2.ptr(), 128, T, T, pooled.ptr(), nullptr);
            probs = classifier_probs(head.fc1, head.fc2, pooled.ptr());
        }
        for (int j = 0; j < model.base.n_class; ++j)
            out.data[j] += resp.data[i] * probs.data[j];
    }
    return out;
}

LabelBin argmax_label(const Tensor& probs) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(probs.size()); ++j)
        if (probs.data[j] > probs.data[best]) best = j;
    return static_cast<LabelBin>(best);
}

LabelBin nhnn_predict_label(const NhnnModel& model, const Utterance& utt, const NormStats& norm) {
    return argmax_label(nhnn_predict_weighted(model, utt, norm));
}

NhnnModel build_nhnn(const DcnnModel& base, const DpGmmModel& dpgmm, const SummaryScaler& scaler,
                     Variant variant) {
    const int k = dpgmm.n_active();
    if (k < 1) throw std::domain_error("build_nhnn: model has no active components");
    NhnnModel model;
    model.base = base;
    // the shared encoder (and the fallback classifier) never train again;
    // FCConv heads carry their own tunable conv2 clone
    model.base.set_frozen(true, true, true);
    model.variant = variant;
    model.dpgmm = dpgmm;
    model.scaler = scaler;
    for (int i = 0; i < k; ++i) {
        NhnnModel::Head head;
        if (variant == Variant::FCConv) head.conv2 = base.conv2;
        head.fc1 = base.fc1;
        head.fc2 = base.fc2;
        model.heads.push_back(std::move(head));
    }
    return model;
}

long param_count(std::vector<Param*> params) {
    long n = 0;
    for (const Param* p : params) n += static_cast<long>(p->value.size());
    return n;
}

// ---- checkpoints

namespace {

json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j, const std::vector<int>& expected_shape) {
    Tensor t;
    t.shape = j.at("shape").get<std::vector<int>>();
    t.data = j.at("data").get<std::vector<double>>();
    if (t.shape != expected_shape || t.data.size() != shape_numel(t.shape))
        throw std::runtime_error("checkpoint tensor shape mismatch");
    return t;
}

json dcnn_to_json(const DcnnModel& m) {
    json j;
    j["format_version"] = 1;
    j["n_mel"] = m.n_mel;
    j["n_class"] = m.n_class;
    j["tensors"] = {
        {"conv1.weight", tensor_to_json(m.conv1.weight.value)},
        {"conv1.bias", tensor_to_json(m.conv1.bias.value)},
        {"conv2.weight", tensor_to_json(m.conv2.weight.value)},
        {"conv2.bias", tensor_to_json(m.conv2.bias.value)},
        {"fc1.weight", tensor_to_json(m.fc1.weight.value)},
        {"fc1.bias", tensor_to_json(m.fc1.bias.value)},
        {"fc2.weight", tensor_to_json(m.fc2.weight.value)},
        {"fc2.bias", tensor_to_json(m.fc2.bias.value)},
    };
    return j;
}

DcnnModel dcnn_from_json(const json& j) {
    DcnnModel m;
    m.n_mel = j.at("n_mel").get<int>();
    m.n_class = j.at("n_class").get<int>();
    m.conv1 = DilatedConv1d(m.n_mel, 128, 8, 2);
    m.conv2 = DilatedConv1d(128, 128, 8, 4);
    m.fc1 = Dense(128, 128);
    m.fc2 = Dense(128, m.n_class);
    const json& t = j.at("tensors");
    m.conv1.weight.value = tensor_from_json(t.at("conv1.weight"), {128, m.n_mel, 8});
    m.conv1.bias.value = tensor_from_json(t.at("conv1.bias"), {128});
    m.conv2.weight.value = tensor_from_json(t.at("conv2.weight"), {128, 128, 8});
    m.conv2.bias.value = tensor_from_json(t.at("conv2.bias"), {128});
    m.fc1.weight.value = tensor_from_json(t.at("fc1.weight"), {128, 128});
    m.fc1.bias.value = tensor_from_json(t.at("fc1.bias"), {128});
    m.fc2.weight.value = tensor_from_json(t.at("fc2.weight"), {m.n_class, 128});
    m.fc2.bias.value = tensor_from_json(t.at("fc2.bias"), {m.n_class});
    return m;
}

}  // namespace

void save_dcnn(const DcnnModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << dcnn_to_json(model).dump() << "\n";
}

DcnnModel load_dcnn(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    in >> j;
    return dcnn_from_json(j);
}

void save_mtl(const MtlCnnModel& model, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["core"] = dcnn_to_json(model.core);
    j["lambda"] = model.lambda;
    j["aux_values"] = model.aux_values;
    j["aux"] = {
        {"fc1.weight", tensor_to_json(model.fc1_aux.weight.value)},
        {"fc1.bias", tensor_to_json(model.fc1_aux.bias.value)},
        {"fc2.weight", tensor_to_json(model.fc2_aux.weight.value)},
        {"fc2.bias", tensor_to_json(model.fc2_aux.bias.value)},
    };
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << "\n";
}

MtlCnnModel load_mtl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    in >> j;
    MtlCnnModel m;
    m.core = dcnn_from_json(j.at("core"));
    m.lambda = j.at("lambda").get<double>();
    m.aux_values = j.at("aux_values").get<std::vector<std::string>>();
    const int n_aux = static_cast<int>(m.aux_values.size());
    m.fc1_aux = Dense(128, 128);
    m.fc2_aux = Dense(128, n_aux);
    const json& a = j.at("aux");
    m.fc1_aux.weight.value = tensor_from_json(a.at("fc1.weight"), {128, 128});
    m.fc1_aux.bias.value = tensor_from_json(a.at("fc1.bias"), {128});
    m.fc2_aux.weight.value = tensor_from_json(a.at("fc2.weight"), {n_aux, 128});
    m.fc2_aux.bias.value = tensor_from_json(a.at("fc2.bias"), {n_aux});
    return m;
}

void save_nhnn(const NhnnModel& model, const std::string& dir) {
    fs::create_directories(dir);
    save_dcnn(model.base, (fs::path(dir) / "base.json").string());
    save_dpgmm(model.dpgmm, (fs::path(dir) / "dpgmm.json").string());
    json meta;
    meta["format_version"] = 1;
    meta["variant"] = model.variant == Variant::FC ? "fc" : "fc_conv";
    meta["scaler_mean"] = model.scaler.mean;
    meta["scaler_stddev"] = model.scaler.stddev;
    meta["n_heads"] = model.heads.size();
    for (std::size_t i = 0; i < model.heads.size(); ++i) {
        const NhnnModel::Head& h = model.heads[i];
        json jh;
        jh["tuned"] = h.tuned;
        jh["fc1.weight"] = tensor_to_json(h.fc1.weight.value);
        jh["fc1.bias"] = tensor_to_json(h.fc1.bias.value);
        jh["fc2.weight"] = tensor_to_json(h.fc2.weight.value);
        jh["fc2.bias"] = tensor_to_json(h.fc2.bias.value);
        if (h.conv2) {
            jh["conv2.weight"] = tensor_to_json(h.conv2->weight.value);
            jh["conv2.bias"] = tensor_to_json(h.conv2->bias.value);
        }
        std::ofstream out(fs::path(dir) / ("head_" + std::to_string(i) + ".json"));
        out << jh.dump() << "\n";
    }
    std::ofstream out(fs::path(dir) / "meta.json");
    out << meta.dump(2) << "\n";
}

NhnnModel load_nhnn(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "meta.json");
    if (!mf) throw std::runtime_error("cannot read nhnn bundle at " + dir);
    json meta;
    mf >> meta;
    NhnnModel model;
    model.base = load_dcnn((fs::path(dir) / "base.json").string());
    model.dpgmm = load_dpgmm((fs::path(dir) / "dpgmm.json").string());
    model.variant = meta.at("variant").get<std::string>() == "fc" ? Variant::FC : Variant::FCConv;
    model.scaler.mean = meta.at("scaler_mean").get<std::vector<double>>();
    model.scaler.stddev = meta.at("scaler_stddev").get<std::vector<double>>();
    const std::size_t n_heads = meta.at("n_heads").get<std::size_t>();
    for (std::size_t i = 0; i < n_heads; ++i) {
        std::ifstream hf(fs::path(dir) / ("head_" + std::to_string(i) + ".json"));
        if (!hf) throw std::runtime_error("missing head checkpoint in " + dir);
        json jh;
        hf >> jh;
        NhnnModel::Head h;
        h.tuned = jh.at("tuned").get<bool>();
        h.fc1 = Dense(128, 128);
        h.fc2 = Dense(128, model.base.n_class);
        h.fc1.weight.value = tensor_from_json(jh.at("fc1.weight"), {128, 128});
        h.fc1.bias.value = tensor_from_json(jh.at("fc1.bias"), {128});
        h.fc2.weight.value = tensor_from_json(jh.at("fc2.weight"), {model.base.n_class, 128});
        h.fc2.bias.value = tensor_from_json(jh.at("fc2.bias"), {model.base.n_class});
        if (jh.contains("conv2.weight")) {
            h.conv2 = DilatedConv1d(128, 128, 8, 4);
            h.conv2->weight.value = tensor_from_json(jh.at("conv2.weight"), {128, 128, 8});
            h.conv2->bias.value = tensor_from_json(jh.at("conv2.bias"), {128});
        }
        model.heads.push_back(std::move(h));
    }
    return model;
}

}  // namespace nhnn
