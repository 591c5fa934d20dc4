#include "eegpriv/perturb.hpp"

#include "eegpriv/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace eegpriv {

namespace {
constexpr double kGrid = 1.0 / 16384.0;  // matches the container grid
}

void ProtectionConfig::validate(const EEGDataset& ds) const {
    if (privacy_types.empty())
        throw std::runtime_error("ProtectionConfig: privacy_types must not be empty");
    for (const auto& type : privacy_types)
        if (!ds.has_privacy_type(type))
            throw std::runtime_error("ProtectionConfig: unknown privacy type '" + type + "'");
    if (alpha < 0.0) throw std::runtime_error("ProtectionConfig: alpha must be >= 0");
    if (surrogate_epochs < 1 || perturb_epochs < 1)
        throw std::runtime_error("ProtectionConfig: T_m and T_p must be >= 1");
    if (init_std <= 0.0) throw std::runtime_error("ProtectionConfig: init_std must be > 0");
    if (perturb_lr <= 0.0) throw std::runtime_error("ProtectionConfig: perturb_lr must be > 0");
    if (batch_size < 1) throw std::runtime_error("ProtectionConfig: batch_size must be >= 1");
}

MapTrialConst PerturbationBank::delta(const std::string& type, int cls) const {
    auto it = deltas.find(type);
    if (it == deltas.end()) throw std::runtime_error("bank has no type '" + type + "'");
    const int p = classes.at(type);
    if (cls < 1 || cls > p) throw std::runtime_error("bank: class out of range for '" + type + "'");
    return MapTrialConst(it->second.data() + static_cast<std::size_t>(cls - 1) * c * t, c, t);
}

void PerturbationBank::validate_against(const EEGDataset& ds) const {
    if (c != ds.c || t != ds.t)
        throw std::runtime_error("bank shape [" + std::to_string(c) + "," + std::to_string(t) +
                                 "] does not match dataset [" + std::to_string(ds.c) + "," +
                                 std::to_string(ds.t) + "]");
    for (const auto& type : types) {
        if (!ds.has_privacy_type(type))
            throw std::runtime_error("bank type '" + type + "' missing from dataset vocabulary");
        if (classes.at(type) != ds.privacy_classes(type))
            throw std::runtime_error("bank class count for '" + type +
                                     "' does not match dataset vocabulary");
        const auto& d = deltas.at(type);
        if (d.size() != static_cast<std::size_t>(classes.at(type)) * c * t)
            throw std::runtime_error("bank blob for '" + type + "' has wrong size");
        for (float v : d)
            if (!std::isfinite(v)) throw std::runtime_error("bank contains non-finite entries");
    }
    for (const auto& tr : ds.trials)
        for (const auto& type : types)
            if (tr.privacy.find(type) == tr.privacy.end())
                throw std::runtime_error("a trial is missing privacy label '" + type + "'");
}

void save_bank(const PerturbationBank& bank, const std::string& dir) {
    fs::create_directories(dir);
    ordered_json meta;
    meta["types"] = bank.types;
    ordered_json cls = ordered_json::object();
    for (const auto& type : bank.types) cls[type] = bank.classes.at(type);
    meta["classes"] = cls;
    meta["shape"] = {bank.c, bank.t};
    ordered_json cfg;
    cfg["alpha"] = bank.alpha;
    cfg["surrogate_epochs"] = bank.surrogate_epochs;
    cfg["perturb_epochs"] = bank.perturb_epochs;
    cfg["init_std"] = bank.init_std;
    cfg["perturb_lr"] = bank.perturb_lr;
    cfg["surrogate_arch"] = bank.surrogate_arch;
    cfg["seed"] = bank.seed;
    meta["config"] = cfg;
    ordered_json hashes = ordered_json::object();
    for (const auto& type : bank.types) {
        auto it = bank.surrogate_param_hash.find(type);
        if (it != bank.surrogate_param_hash.end()) hashes[type] = it->second;
    }
    meta["surrogate_param_hash"] = hashes;
    ordered_json objectives = ordered_json::object();
    for (const auto& type : bank.types) {
        auto it = bank.final_objective.find(type);
        if (it != bank.final_objective.end()) objectives[type] = it->second;
    }
    meta["final_objective"] = objectives;

    {
        std::ofstream f(fs::path(dir) / "bank.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + dir + "/bank.json");
        f << meta.dump(1) << "\n";
    }
    std::ofstream f(fs::path(dir) / "bank.f32", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + dir + "/bank.f32");
    for (const auto& type : bank.types) {
        const auto& d = bank.deltas.at(type);
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(float)));
    }
}

PerturbationBank load_bank(const std::string& dir) {
    const fs::path meta_path = fs::path(dir) / "bank.json";
    const fs::path blob_path = fs::path(dir) / "bank.f32";
    if (!fs::exists(meta_path)) throw std::runtime_error("missing file: " + meta_path.string());
    if (!fs::exists(blob_path)) throw std::runtime_error("missing file: " + blob_path.string());

    ordered_json meta;
    {
        std::ifstream f(meta_path);
        f >> meta;
    }
    PerturbationBank bank;
    bank.types = meta.at("types").get<std::vector<std::string>>();
    for (const auto& type : bank.types) bank.classes[type] = meta.at("classes").at(type).get<int>();
    auto shape = meta.at("shape").get<std::vector<int>>();
    bank.c = shape.at(0);
    bank.t = shape.at(1);
    const auto& cfg = meta.at("config");
    bank.alpha = cfg.at("alpha").get<double>();
    bank.surrogate_epochs = cfg.at("surrogate_epochs").get<int>();
    bank.perturb_epochs = cfg.at("perturb_epochs").get<int>();
    bank.init_std = cfg.at("init_std").get<double>();
    bank.perturb_lr = cfg.at("perturb_lr").get<double>();
    bank.surrogate_arch = cfg.at("surrogate_arch").get<std::string>();
    bank.seed = cfg.at("seed").get<std::uint64_t>();
    if (meta.contains("surrogate_param_hash"))
        for (auto& [key, val] : meta["surrogate_param_hash"].items())
            bank.surrogate_param_hash[key] = val.get<std::string>();
    if (meta.contains("final_objective"))
        for (auto& [key, val] : meta["final_objective"].items())
            bank.final_objective[key] = val.get<double>();

    std::uintmax_t expect = 0;
    for (const auto& type : bank.types)
        expect += static_cast<std::uintmax_t>(bank.classes.at(type)) * bank.c * bank.t;
    if (fs::file_size(blob_path) != expect * sizeof(float))
        throw std::runtime_error("bank.f32 size mismatch");

    std::ifstream f(blob_path, std::ios::binary);
    for (const auto& type : bank.types) {
        auto& d = bank.deltas[type];
        d.resize(static_cast<std::size_t>(bank.classes.at(type)) * bank.c * bank.t);
        f.read(reinterpret_cast<char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("short read from " + blob_path.string());
    return bank;
}

std::uint64_t surrogate_seed(const ProtectionConfig& cfg, const std::string& type) {
    return seed_mix({cfg.seed, hash_str("surrogate"), hash_str(type)});
}

std::uint64_t perturbation_seed(const ProtectionConfig& cfg, const std::string& type) {
    return seed_mix({cfg.seed, hash_str("delta"), hash_str(type)});
}

std::unique_ptr<CnnClassifier> train_privacy_surrogate(const EEGDataset& ds,
                                                       const std::string& type,
                                                       const ProtectionConfig& cfg) {
    if (!ds.has_privacy_type(type))
        throw std::runtime_error("train_privacy_surrogate: unknown privacy type '" + type + "'");

    ModelSpec spec;
    spec.arch = cfg.surrogate_arch;
    spec.c = ds.c;
    spec.t = ds.t;
    spec.n_classes = ds.privacy_classes(type);
    spec.learning_rate = cfg.surrogate_lr;
    spec.batch_size = cfg.batch_size;
    spec.hyper = cfg.surrogate_hyper;
    spec.seed = surrogate_seed(cfg, type);

    auto clf = build_model(spec);
    clf->set_label_space(type);
    std::vector<int> idx(ds.n()), labels(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
        idx[i] = i;
        labels[i] = ds.trials[i].privacy.at(type);
    }
    clf->train(ds, idx, labels, cfg.surrogate_epochs, seed_mix({spec.seed, hash_str("train")}));
    return clf;
}

std::vector<float> optimize_perturbation(LogitModel& surrogate, const EEGDataset& ds,
                                         const std::string& type, const ProtectionConfig& cfg) {
    if (!ds.has_privacy_type(type))
        throw std::runtime_error("optimize_perturbation: unknown privacy type '" + type + "'");
    const int p_m = ds.privacy_classes(type);
    const int c = ds.c, t = ds.t;
    const std::size_t block = static_cast<std::size_t>(c) * t;

    Rng rng(perturbation_seed(cfg, type));
    std::vector<float> delta(static_cast<std::size_t>(p_m) * block);
    for (float& v : delta) v = static_cast<float>(rng.normal() * cfg.init_std);

    std::vector<int> labels(ds.n());
    for (int i = 0; i < ds.n(); ++i) labels[i] = ds.trials[i].privacy.at(type);

    std::vector<int> order(ds.n());
    for (int i = 0; i < ds.n(); ++i) order[i] = i;

    const int B = cfg.batch_size;
    std::vector<double> grad(delta.size());
    for (int epoch = 0; epoch < cfg.perturb_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += B) {
            const std::size_t stop = std::min(order.size(), start + B);
            const int bsize = static_cast<int>(stop - start);

            nn::Tensor<float> x(bsize, 1, c, t);
            std::vector<int> batch_y(bsize);
            for (int b = 0; b < bsize; ++b) {
                const int i = order[start + b];
                batch_y[b] = labels[i];
                const float* src = ds.data.data() + static_cast<std::size_t>(i) * block;
                const float* dsrc = delta.data() + static_cast<std::size_t>(batch_y[b] - 1) * block;
                float* dst = x.v.data() + static_cast<std::size_t>(b) * block;
                for (std::size_t j = 0; j < block; ++j) dst[j] = src[j] + dsrc[j];
            }

            auto logits = surrogate.forward(x);
            nn::Tensor<float> dlogits;
            const float loss = nn::softmax_cross_entropy(logits, batch_y, &dlogits);
            if (!std::isfinite(loss))
                throw std::runtime_error(
                    "optimize_perturbation: non-finite loss for type '" + type +
                    "' at epoch " + std::to_string(epoch + 1) +
                    " (perturbation learning rate too high?)");
            auto gin = surrogate.backward_input(dlogits);  // dCE/dx, already / B

            std::fill(grad.begin(), grad.end(), 0.0);
            std::vector<int> class_count(p_m, 0);
            for (int b = 0; b < bsize; ++b) {
                const int p = batch_y[b] - 1;
                ++class_count[p];
                const float* g = gin.v.data() + static_cast<std::size_t>(b) * block;
                double* acc = grad.data() + static_cast<std::size_t>(p) * block;
                for (std::size_t j = 0; j < block; ++j) acc[j] += g[j];
            }
            // amplitude penalty: alpha * ||delta_p||_2 weighted by the class share
            for (int p = 0; p < p_m; ++p) {
                if (class_count[p] == 0) continue;
                const double frac = static_cast<double>(class_count[p]) / bsize;
                float* d = delta.data() + static_cast<std::size_t>(p) * block;
                double* acc = grad.data() + static_cast<std::size_t>(p) * block;
                if (cfg.squared_norm) {
                    for (std::size_t j = 0; j < block; ++j)
                        acc[j] += cfg.alpha * frac * 2.0 * d[j];
                } else {
                    double norm = 0.0;
                    for (std::size_t j = 0; j < block; ++j) norm += static_cast<double>(d[j]) * d[j];
                    norm = std::sqrt(norm);
                    if (norm > 1e-12) {
                        const double scale = cfg.alpha * frac / norm;
                        for (std::size_t j = 0; j < block; ++j) acc[j] += scale * d[j];
                    }
                }
            }
            for (std::size_t j = 0; j < delta.size(); ++j)
                delta[j] -= static_cast<float>(cfg.perturb_lr * grad[j]);
        }
    }

    for (float v : delta)
        if (!std::isfinite(v))
            throw std::runtime_error("optimize_perturbation: non-finite perturbation for type '" +
                                     type + "'");
    if (cfg.quantize_bank)
        for (float& v : delta)
            v = static_cast<float>(std::nearbyint(std::clamp(v, -64.0f, 64.0f) / kGrid) * kGrid);
    return delta;
}

EEGDataset apply_perturbations(const EEGDataset& ds, const PerturbationBank& bank) {
    bank.validate_against(ds);
    EEGDataset out = ds;
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    for (int i = 0; i < ds.n(); ++i) {
        float* dst = out.data.data() + static_cast<std::size_t>(i) * block;
        for (const auto& type : bank.types) {
            const int cls = ds.trials[i].privacy.at(type);
            const float* d =
                bank.deltas.at(type).data() + static_cast<std::size_t>(cls - 1) * block;
            for (std::size_t j = 0; j < block; ++j) dst[j] += d[j];
        }
    }
    return out;
}

double mean_cross_entropy(LogitModel& model, const EEGDataset& ds, const std::string& type,
                          const PerturbationBank* bank, int batch_size) {
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    double total = 0.0;
    for (int start = 0; start < ds.n(); start += batch_size) {
        const int stop = std::min(ds.n(), start + batch_size);
        const int bsize = stop - start;
        nn::Tensor<float> x(bsize, 1, ds.c, ds.t);
        std::vector<int> batch_y(bsize);
        for (int b = 0; b < bsize; ++b) {
            const int i = start + b;
            batch_y[b] = ds.trials[i].privacy.at(type);
            const float* src = ds.data.data() + static_cast<std::size_t>(i) * block;
            float* dst = x.v.data() + static_cast<std::size_t>(b) * block;
            std::copy(src, src + block, dst);
            if (bank != nullptr) {
                auto d = bank->delta(type, batch_y[b]);
                const float* dp = d.data();
                for (std::size_t j = 0; j < block; ++j) dst[j] += dp[j];
            }
        }
        auto logits = model.forward(x);
        total += static_cast<double>(nn::softmax_cross_entropy<float>(logits, batch_y)) * bsize;
    }
    return total / ds.n();
}

ProtectedDataset generate_protected_dataset(const EEGDataset& ds, const ProtectionConfig& cfg) {
    cfg.validate(ds);
    ds.validate();

    PerturbationBank bank;
    bank.c = ds.c;
    bank.t = ds.t;
    bank.alpha = cfg.alpha;
    bank.surrogate_epochs = cfg.surrogate_epochs;
    bank.perturb_epochs = cfg.perturb_epochs;
    bank.init_std = cfg.init_std;
    bank.perturb_lr = cfg.perturb_lr;
    bank.surrogate_arch = to_string(cfg.surrogate_arch);
    bank.seed = cfg.seed;

    for (const auto& type : cfg.privacy_types) {
        // Both the surrogate and the perturbation read the ORIGINAL dataset.
        auto surrogate = train_privacy_surrogate(ds, type, cfg);
        bank.surrogate_param_hash[type] = surrogate->param_hash();

        FrozenCnn frozen(*surrogate);
        auto delta = optimize_perturbation(frozen, ds, type, cfg);

        bank.types.push_back(type);
        bank.classes[type] = ds.privacy_classes(type);
        bank.deltas[type] = std::move(delta);
        bank.final_objective[type] = mean_cross_entropy(frozen, ds, type, &bank);
    }

    ProtectedDataset out{apply_perturbations(ds, bank), std::move(bank)};
    return out;
}

}  // namespace eegpriv
