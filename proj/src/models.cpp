#include "eegpriv/models.hpp"

#include "eegpriv/metrics.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

using ordered_json = nlohmann::ordered_json;

namespace eegpriv {

std::string to_string(Arch a) {
    switch (a) {
        case Arch::EEGNet: return "EEGNet";
        case Arch::DeepCNN: return "DeepCNN";
        case Arch::ShallowCNN: return "ShallowCNN";
    }
    throw std::runtime_error("bad Arch");
}

Arch arch_from_string(const std::string& s) {
    if (s == "EEGNet") return Arch::EEGNet;
    if (s == "DeepCNN") return Arch::DeepCNN;
    if (s == "ShallowCNN") return Arch::ShallowCNN;
    throw std::runtime_error("unknown architecture '" + s + "'");
}

template <class S>
nn::Net<S> build_net(const ModelSpec& spec) {
    using namespace nn;
    if (spec.c < 1 || spec.t < 1) throw std::runtime_error("build_net: bad input shape");
    if (spec.n_classes < 2) throw std::runtime_error("build_net: need at least 2 classes");

    Rng rng(seed_mix({spec.seed, hash_str(to_string(spec.arch)), hash_str("init")}));
    const CnnHyper& hp = spec.hyper;
    Net<S> net;

    auto out_w_after = [](int w, int k, int pool, int stride) {
        const int conv_w = w - k + 1;
        return conv_w < pool ? 0 : (conv_w - pool) / stride + 1;
    };

    if (spec.arch == Arch::EEGNet) {
        const int f1 = hp.eegnet_f1, d = hp.eegnet_depth, f2 = f1 * d;
        if (spec.t / (hp.eegnet_pool1 * hp.eegnet_pool2) < 1)
            throw std::runtime_error("build_net: input too short for EEGNet pooling");
        net.layers.push_back(Conv2d<S>::same_w(1, f1, hp.eegnet_kernel, 1, false, rng));
        net.layers.push_back(std::make_unique<BatchNorm2d<S>>(f1));
        net.layers.push_back(std::make_unique<Conv2d<S>>(f1, f2, spec.c, 1, 1, 1, 0, 0, 0, 0,
                                                         f1, false, rng));
        net.layers.push_back(std::make_unique<BatchNorm2d<S>>(f2));
        net.layers.push_back(std::make_unique<Elu<S>>());
        net.layers.push_back(std::make_unique<AvgPool2d<S>>(1, hp.eegnet_pool1));
        net.layers.push_back(std::make_unique<Dropout<S>>(hp.eegnet_dropout));
        net.layers.push_back(Conv2d<S>::same_w(f2, f2, hp.eegnet_sep_kernel, f2, false, rng));
        net.layers.push_back(std::make_unique<Conv2d<S>>(f2, f2, 1, 1, 1, 1, 0, 0, 0, 0, 1,
                                                         false, rng));
        net.layers.push_back(std::make_unique<BatchNorm2d<S>>(f2));
        net.layers.push_back(std::make_unique<Elu<S>>());
        net.layers.push_back(std::make_unique<AvgPool2d<S>>(1, hp.eegnet_pool2));
        net.layers.push_back(std::make_unique<Dropout<S>>(hp.eegnet_dropout));
        const int w_out = (spec.t / hp.eegnet_pool1) / hp.eegnet_pool2;
        net.layers.push_back(std::make_unique<Linear<S>>(f2 * w_out, spec.n_classes, rng));
    } else if (spec.arch == Arch::DeepCNN) {
        const int f = hp.deep_filters, k = hp.deep_kernel, p = hp.deep_pool;
        int w = spec.t - k + 1;
        w = (w - p) / p + 1;
        net.layers.push_back(Conv2d<S>::valid(1, f, 1, k, false, rng));
        net.layers.push_back(Conv2d<S>::valid(f, f, spec.c, 1, false, rng));
        net.layers.push_back(std::make_unique<BatchNorm2d<S>>(f));
        net.layers.push_back(std::make_unique<Elu<S>>());
        net.layers.push_back(std::make_unique<MaxPool2d<S>>(1, p));
        net.layers.push_back(std::make_unique<Dropout<S>>(hp.deep_dropout));
        int ch = f;
        for (int block = 1; block < 4; ++block) {
            const int next = ch * 2;
            w = w - k + 1;
            if (w < p) throw std::runtime_error("build_net: input too short for DeepCNN block " +
                                                std::to_string(block + 1));
            w = (w - p) / p + 1;
            net.layers.push_back(Conv2d<S>::valid(ch, next, 1, k, false, rng));
            net.layers.push_back(std::make_unique<BatchNorm2d<S>>(next));
            net.layers.push_back(std::make_unique<Elu<S>>());
            net.layers.push_back(std::make_unique<MaxPool2d<S>>(1, p));
            if (block < 3) net.layers.push_back(std::make_unique<Dropout<S>>(hp.deep_dropout));
            ch = next;
        }
        net.layers.push_back(std::make_unique<Linear<S>>(ch * w, spec.n_classes, rng));
    } else {  // ShallowCNN
        const int f = hp.shallow_filters, k = hp.shallow_kernel;
        const int w = out_w_after(spec.t, k, hp.shallow_pool, hp.shallow_pool_stride);
        if (w < 1) throw std::runtime_error("build_net: input too short for ShallowCNN pooling");
        net.layers.push_back(Conv2d<S>::valid(1, f, 1, k, false, rng));
        net.layers.push_back(Conv2d<S>::valid(f, f, spec.c, 1, false, rng));
        net.layers.push_back(std::make_unique<BatchNorm2d<S>>(f));
        net.layers.push_back(std::make_unique<Square<S>>());
        net.layers.push_back(std::make_unique<AvgPool2d<S>>(1, hp.shallow_pool, 1,
                                                            hp.shallow_pool_stride));
        net.layers.push_back(std::make_unique<SafeLog<S>>());
        net.layers.push_back(std::make_unique<Dropout<S>>(hp.shallow_dropout));
        net.layers.push_back(std::make_unique<Linear<S>>(f * w, spec.n_classes, rng));
    }
    return net;
}

template nn::Net<float> build_net<float>(const ModelSpec&);
template nn::Net<double> build_net<double>(const ModelSpec&);

CnnClassifier::CnnClassifier(const ModelSpec& spec) : spec_(spec) {
    net_ = std::make_unique<nn::Net<float>>(build_net<float>(spec));
}

std::unique_ptr<CnnClassifier> build_model(const ModelSpec& spec) {
    return std::make_unique<CnnClassifier>(spec);
}

void CnnClassifier::train(const EEGDataset& ds, const std::vector<int>& idx,
                          const std::vector<int>& labels, int epochs, std::uint64_t train_seed,
                          const EEGDataset* test_ds, const std::vector<int>* test_labels) {
    if (idx.size() != labels.size()) throw std::runtime_error("train: index/label size mismatch");
    if (idx.empty()) throw std::runtime_error("train: no training trials");
    if (ds.c != spec_.c || ds.t != spec_.t)
        throw std::runtime_error("train: dataset shape does not match model input_shape");
    std::set<int> present(labels.begin(), labels.end());
    for (int k = 1; k <= spec_.n_classes; ++k)
        if (!present.count(k))
            throw std::runtime_error("train: class " + std::to_string(k) +
                                     " absent from training labels");
    for (int y : labels)
        if (y < 1 || y > spec_.n_classes)
            throw std::runtime_error("train: label out of range");

    std::lock_guard<std::mutex> lock(mutex_);
    Rng rng(train_seed);
    nn::Adam<float> opt(spec_.learning_rate, spec_.weight_decay);
    std::vector<int> order(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) order[i] = static_cast<int>(i);

    curve_.clear();
    const int B = std::max(1, spec_.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::vector<int> epoch_preds(idx.size()), epoch_labels(idx.size());
        std::size_t filled = 0;
        for (std::size_t start = 0; start < order.size(); start += B) {
            const std::size_t stop = std::min(order.size(), start + B);
            std::vector<int> batch_idx(stop - start);
            std::vector<int> batch_y(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch_idx[i - start] = idx[order[i]];
                batch_y[i - start] = labels[order[i]];
            }
            auto x = make_batch<float>(ds, batch_idx);
            auto logits = net_->forward(x, true, &rng);
            nn::Tensor<float> dlogits;
            std::vector<int> argmax;
            const float loss = nn::softmax_cross_entropy(logits, batch_y, &dlogits, &argmax);
            net_->zero_grads();
            net_->backward(dlogits);
            opt.step(net_->params());
            loss_sum += static_cast<double>(loss) * batch_y.size();
            for (std::size_t i = 0; i < batch_y.size(); ++i, ++filled) {
                epoch_preds[filled] = argmax[i];
                epoch_labels[filled] = batch_y[i];
            }
        }
        EpochStat st;
        st.loss = loss_sum / static_cast<double>(idx.size());
        st.train_bca = bca(epoch_preds, epoch_labels, spec_.n_classes);
        if (test_ds != nullptr && test_labels != nullptr) {
            std::vector<int> all(test_ds->n());
            for (int i = 0; i < test_ds->n(); ++i) all[i] = i;
            std::vector<int> preds;
            preds.reserve(all.size());
            for (std::size_t start = 0; start < all.size(); start += B) {
                const std::size_t stop = std::min(all.size(), start + B);
                std::vector<int> chunk(all.begin() + start, all.begin() + stop);
                auto xb = make_batch<float>(*test_ds, chunk);
                auto logits = net_->forward(xb, false);
                std::vector<int> am;
                nn::softmax_cross_entropy<float>(logits, std::vector<int>(chunk.size(), 1), nullptr,
                                          &am);
                preds.insert(preds.end(), am.begin(), am.end());
            }
            st.test_bca = bca(preds, *test_labels, spec_.n_classes);
        }
        curve_.push_back(st);
    }
    trained_ = true;
}

std::vector<int> CnnClassifier::predict(const EEGDataset& ds, const std::vector<int>& idx) const {
    if (ds.c != spec_.c || ds.t != spec_.t)
        throw std::runtime_error("predict: dataset shape does not match model input_shape");
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<int> preds;
    preds.reserve(idx.size());
    const int B = std::max(1, spec_.batch_size);
    for (std::size_t start = 0; start < idx.size(); start += B) {
        const std::size_t stop = std::min(idx.size(), start + B);
        std::vector<int> chunk(idx.begin() + start, idx.begin() + stop);
        auto x = make_batch<float>(ds, chunk);
        auto logits = net_->forward(x, false);
        std::vector<int> am;
        nn::softmax_cross_entropy<float>(logits, std::vector<int>(chunk.size(), 1), nullptr, &am);
        preds.insert(preds.end(), am.begin(), am.end());
    }
    return preds;
}

std::vector<int> CnnClassifier::predict(const EEGDataset& ds) const {
    std::vector<int> idx(ds.n());
    for (int i = 0; i < ds.n(); ++i) idx[i] = i;
    return predict(ds, idx);
}

nn::Mat<float> CnnClassifier::predict_proba(const EEGDataset& ds,
                                            const std::vector<int>& idx) const {
    std::lock_guard<std::mutex> lock(mutex_);
    nn::Mat<float> out(idx.size(), spec_.n_classes);
    const int B = std::max(1, spec_.batch_size);
    for (std::size_t start = 0; start < idx.size(); start += B) {
        const std::size_t stop = std::min(idx.size(), start + B);
        std::vector<int> chunk(idx.begin() + start, idx.begin() + stop);
        auto x = make_batch<float>(ds, chunk);
        auto logits = net_->forward(x, false);
        auto probs = nn::softmax(logits);
        for (std::size_t i = 0; i < chunk.size(); ++i) out.row(start + i) = probs.row(i);
    }
    return out;
}

nn::Tensor<float> CnnClassifier::forward_eval(const nn::Tensor<float>& x) const {
    return net_->forward(x, false);
}

nn::Tensor<float> CnnClassifier::backward_input(const nn::Tensor<float>& dlogits) const {
    return net_->backward(dlogits);
}

std::string CnnClassifier::param_hash() const {
    auto flat = net_->flat_params();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(flat.data());
    for (std::size_t i = 0; i < flat.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    std::ostringstream oss;
    oss << std::hex << h;
    return oss.str();
}

static ordered_json spec_to_json(const ModelSpec& s) {
    ordered_json j;
    j["arch"] = to_string(s.arch);
    j["c"] = s.c;
    j["t"] = s.t;
    j["n_classes"] = s.n_classes;
    j["learning_rate"] = s.learning_rate;
    j["batch_size"] = s.batch_size;
    j["weight_decay"] = s.weight_decay;
    j["seed"] = s.seed;
    ordered_json hp;
    hp["eegnet_f1"] = s.hyper.eegnet_f1;
    hp["eegnet_depth"] = s.hyper.eegnet_depth;
    hp["eegnet_kernel"] = s.hyper.eegnet_kernel;
    hp["eegnet_sep_kernel"] = s.hyper.eegnet_sep_kernel;
    hp["eegnet_pool1"] = s.hyper.eegnet_pool1;
    hp["eegnet_pool2"] = s.hyper.eegnet_pool2;
    hp["eegnet_dropout"] = s.hyper.eegnet_dropout;
    hp["deep_filters"] = s.hyper.deep_filters;
    hp["deep_kernel"] = s.hyper.deep_kernel;
    hp["deep_pool"] = s.hyper.deep_pool;
    hp["deep_dropout"] = s.hyper.deep_dropout;
    hp["shallow_filters"] = s.hyper.shallow_filters;
    hp["shallow_kernel"] = s.hyper.shallow_kernel;
    hp["shallow_pool"] = s.hyper.shallow_pool;
    hp["shallow_pool_stride"] = s.hyper.shallow_pool_stride;
    hp["shallow_dropout"] = s.hyper.shallow_dropout;
    j["hyper"] = hp;
    return j;
}

static ModelSpec spec_from_json(const ordered_json& j) {
    ModelSpec s;
    s.arch = arch_from_string(j.at("arch").get<std::string>());
    s.c = j.at("c").get<int>();
    s.t = j.at("t").get<int>();
    s.n_classes = j.at("n_classes").get<int>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.batch_size = j.at("batch_size").get<int>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& hp = j.at("hyper");
    s.hyper.eegnet_f1 = hp.at("eegnet_f1").get<int>();
    s.hyper.eegnet_depth = hp.at("eegnet_depth").get<int>();
    s.hyper.eegnet_kernel = hp.at("eegnet_kernel").get<int>();
    s.hyper.eegnet_sep_kernel = hp.at("eegnet_sep_kernel").get<int>();
    s.hyper.eegnet_pool1 = hp.at("eegnet_pool1").get<int>();
    s.hyper.eegnet_pool2 = hp.at("eegnet_pool2").get<int>();
    s.hyper.eegnet_dropout = hp.at("eegnet_dropout").get<double>();
    s.hyper.deep_filters = hp.at("deep_filters").get<int>();
    s.hyper.deep_kernel = hp.at("deep_kernel").get<int>();
    s.hyper.deep_pool = hp.at("deep_pool").get<int>();
    s.hyper.deep_dropout = hp.at("deep_dropout").get<double>();
    s.hyper.shallow_filters = hp.at("shallow_filters").get<int>();
    s.hyper.shallow_kernel = hp.at("shallow_kernel").get<int>();
    s.hyper.shallow_pool = hp.at("shallow_pool").get<int>();
    s.hyper.shallow_pool_stride = hp.at("shallow_pool_stride").get<int>();
    s.hyper.shallow_dropout = hp.at("shallow_dropout").get<double>();
    return s;
}

void save_checkpoint(const CnnClassifier& clf, const std::string& stem) {
    ordered_json j = spec_to_json(clf.spec());
    j["label_space"] = clf.label_space();
    ordered_json curve = ordered_json::array();
    for (const auto& st : clf.training_curve())
        curve.push_back({{"loss", st.loss}, {"train_bca", st.train_bca}, {"test_bca", st.test_bca}});
    j["training_curve"] = curve;
    {
        std::ofstream f(stem + ".json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + stem + ".json");
        f << j.dump(1) << "\n";
    }
    auto& net = const_cast<CnnClassifier&>(clf).net();
    auto params = net.flat_params();
    auto state = net.flat_state();
    std::ofstream f(stem + ".f32", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + stem + ".f32");
    f.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(state.data()),
            static_cast<std::streamsize>(state.size() * sizeof(float)));
}

std::unique_ptr<CnnClassifier> load_checkpoint(const std::string& stem) {
    std::ifstream jf(stem + ".json");
    if (!jf) throw std::runtime_error("missing checkpoint sidecar " + stem + ".json");
    ordered_json j;
    jf >> j;
    auto clf = std::make_unique<CnnClassifier>(spec_from_json(j));
    clf->set_label_space(j.value("label_space", ""));

    auto& net = clf->net();
    const std::size_t n_params = net.param_count();
    std::size_t n_state = 0;
    for (auto& s : net.state()) n_state += s.size;
    std::vector<float> params(n_params), state(n_state);
    std::ifstream f(stem + ".f32", std::ios::binary);
    if (!f) throw std::runtime_error("missing checkpoint blob " + stem + ".f32");
    f.read(reinterpret_cast<char*>(params.data()),
           static_cast<std::streamsize>(n_params * sizeof(float)));
    f.read(reinterpret_cast<char*>(state.data()),
           static_cast<std::streamsize>(n_state * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint blob " + stem + ".f32 too short");
    net.set_flat_params(params);
    net.set_flat_state(state);
    return clf;
}

}  // namespace eegpriv
