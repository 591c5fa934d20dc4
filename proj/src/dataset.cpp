#include "eegpriv/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace eegpriv {

static_assert(std::endian::native == std::endian::little,
              "container i/o assumes a little-endian host");

int EEGDataset::task_classes(const std::string& task) const {
    for (const auto& [name, k] : task_vocab)
        if (name == task) return k;
    throw std::runtime_error("unknown task '" + task + "'");
}

int EEGDataset::privacy_classes(const std::string& type) const {
    for (const auto& [name, p] : privacy_vocab)
        if (name == type) return p;
    throw std::runtime_error("unknown privacy type '" + type + "'");
}

bool EEGDataset::has_privacy_type(const std::string& type) const {
    for (const auto& [name, p] : privacy_vocab)
        if (name == type) return true;
    return false;
}

std::vector<int> EEGDataset::session_ids() const {
    std::set<int> s;
    for (const auto& tr : trials) s.insert(tr.session_id);
    return {s.begin(), s.end()};
}

void EEGDataset::validate() const {
    if (trials.empty()) throw std::runtime_error("empty dataset");
    if (c < 1 || t < 1) throw std::runtime_error("invalid trial shape");
    if (static_cast<int>(channel_names.size()) != c)
        throw std::runtime_error("channel_names size does not match channel count");
    if (data.size() != static_cast<std::size_t>(n()) * c * t)
        throw std::runtime_error("data buffer size does not match [N, c, t]");
    for (const auto& [type, p] : privacy_vocab)
        if (p < 2) throw std::runtime_error("privacy type '" + type + "' has fewer than 2 classes");

    std::map<std::string, std::set<int>> seen_classes;
    for (int i = 0; i < n(); ++i) {
        const auto& tr = trials[i];
        int k = task_classes(tr.task);
        if (tr.y < 1 || tr.y > k)
            throw std::runtime_error("trial " + std::to_string(i) + ": task label out of range");
        for (const auto& [type, p_m] : privacy_vocab) {
            auto it = tr.privacy.find(type);
            if (it == tr.privacy.end())
                throw std::runtime_error("trial " + std::to_string(i) +
                                         ": missing privacy label '" + type + "'");
            if (it->second < 1 || it->second > p_m)
                throw std::runtime_error("trial " + std::to_string(i) +
                                         ": privacy label '" + type + "' out of range");
            seen_classes[type].insert(it->second);
        }
        for (const auto& [type, v] : tr.privacy)
            if (!has_privacy_type(type))
                throw std::runtime_error("trial " + std::to_string(i) +
                                         ": unknown privacy type '" + type + "'");
        auto x = trial(i);
        if (!x.allFinite())
            throw std::runtime_error("trial " + std::to_string(i) + ": non-finite samples");
    }
    for (const auto& [type, p_m] : privacy_vocab)
        if (static_cast<int>(seen_classes[type].size()) != p_m)
            throw std::runtime_error("privacy type '" + type + "': some class has no trials");
}

void save_dataset(const EEGDataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);

    ordered_json meta;
    meta["sampling_rate"] = ds.sampling_rate;
    meta["channels"] = ds.channel_names;
    meta["shape"] = {ds.n(), ds.c, ds.t};
    ordered_json tasks = ordered_json::object();
    for (const auto& [name, k] : ds.task_vocab) tasks[name] = k;
    meta["tasks"] = tasks;
    ordered_json ptypes = ordered_json::object();
    for (const auto& [name, p] : ds.privacy_vocab) ptypes[name] = p;
    meta["privacy_types"] = ptypes;
    meta["provenance"] = ds.provenance;
    ordered_json trials = ordered_json::array();
    for (const auto& tr : ds.trials) {
        ordered_json jt;
        jt["subject"] = tr.subject_id;
        jt["session"] = tr.session_id;
        jt["task"] = tr.task;
        jt["y"] = tr.y;
        ordered_json priv = ordered_json::object();
        for (const auto& [type, v] : tr.privacy) priv[type] = v;
        jt["privacy"] = priv;
        trials.push_back(jt);
    }
    meta["trials"] = trials;

    {
        std::ofstream f(fs::path(dir) / "meta.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + dir + "/meta.json");
        f << meta.dump(1) << "\n";
    }
    {
        std::ofstream f(fs::path(dir) / "data.f32", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + dir + "/data.f32");
        f.write(reinterpret_cast<const char*>(ds.data.data()),
                static_cast<std::streamsize>(ds.data.size() * sizeof(float)));
        if (!f) throw std::runtime_error("short write to " + dir + "/data.f32");
    }
}

EEGDataset load_dataset(const std::string& dir) {
    const fs::path meta_path = fs::path(dir) / "meta.json";
    const fs::path data_path = fs::path(dir) / "data.f32";
    if (!fs::exists(meta_path)) throw std::runtime_error("missing file: " + meta_path.string());
    if (!fs::exists(data_path)) throw std::runtime_error("missing file: " + data_path.string());

    ordered_json meta;
    {
        std::ifstream f(meta_path);
        try {
            f >> meta;
        } catch (const std::exception& e) {
            throw std::runtime_error("invalid meta.json: " + std::string(e.what()));
        }
    }

    EEGDataset ds;
    try {
        ds.sampling_rate = meta.at("sampling_rate").get<double>();
        ds.channel_names = meta.at("channels").get<std::vector<std::string>>();
        auto shape = meta.at("shape").get<std::vector<long long>>();
        if (shape.size() != 3) throw std::runtime_error("shape must be [N, c, t]");
        const long long n = shape[0];
        ds.c = static_cast<int>(shape[1]);
        ds.t = static_cast<int>(shape[2]);
        if (n < 1) throw std::runtime_error("empty dataset");
        for (auto& [key, val] : meta.at("tasks").items())
            ds.task_vocab.emplace_back(key, val.get<int>());
        for (auto& [key, val] : meta.at("privacy_types").items())
            ds.privacy_vocab.emplace_back(key, val.get<int>());
        if (meta.contains("provenance")) ds.provenance = meta["provenance"].get<std::string>();
        for (const auto& jt : meta.at("trials")) {
            TrialMeta tr;
            tr.subject_id = jt.at("subject").get<int>();
            tr.session_id = jt.at("session").get<int>();
            tr.task = jt.at("task").get<std::string>();
            tr.y = jt.at("y").get<int>();
            for (auto& [key, val] : jt.at("privacy").items()) tr.privacy[key] = val.get<int>();
            ds.trials.push_back(std::move(tr));
        }
        if (static_cast<long long>(ds.trials.size()) != n)
            throw std::runtime_error("trial list length does not match shape[0]");
    } catch (const ordered_json::exception& e) {
        throw std::runtime_error("invalid meta.json: " + std::string(e.what()));
    }

    const std::uintmax_t expect_bytes =
        static_cast<std::uintmax_t>(ds.trials.size()) * ds.c * ds.t * sizeof(float);
    const std::uintmax_t actual_bytes = fs::file_size(data_path);
    if (actual_bytes != expect_bytes)
        throw std::runtime_error("data.f32 size mismatch: meta.json declares " +
                                 std::to_string(expect_bytes) + " bytes ([N,c,t] = [" +
                                 std::to_string(ds.trials.size()) + "," + std::to_string(ds.c) +
                                 "," + std::to_string(ds.t) + "]) but file has " +
                                 std::to_string(actual_bytes) + " bytes");

    ds.data.resize(ds.trials.size() * static_cast<std::size_t>(ds.c) * ds.t);
    std::ifstream f(data_path, std::ios::binary);
    f.read(reinterpret_cast<char*>(ds.data.data()), static_cast<std::streamsize>(expect_bytes));
    if (!f) throw std::runtime_error("short read from " + data_path.string());

    ds.validate();
    return ds;
}

std::pair<EEGDataset, EEGDataset> split_by_session(const EEGDataset& ds, int holdout_session) {
    auto sessions = ds.session_ids();
    if (std::find(sessions.begin(), sessions.end(), holdout_session) == sessions.end())
        throw std::runtime_error("holdout session " + std::to_string(holdout_session) +
                                 " not present in dataset");

    EEGDataset train, test;
    for (EEGDataset* part : {&train, &test}) {
        part->channel_names = ds.channel_names;
        part->sampling_rate = ds.sampling_rate;
        part->task_vocab = ds.task_vocab;
        part->privacy_vocab = ds.privacy_vocab;
        part->provenance = ds.provenance;
        part->c = ds.c;
        part->t = ds.t;
    }
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    for (int i = 0; i < ds.n(); ++i) {
        EEGDataset& dst = (ds.trials[i].session_id == holdout_session) ? test : train;
        dst.trials.push_back(ds.trials[i]);
        dst.data.insert(dst.data.end(), ds.data.begin() + i * block,
                        ds.data.begin() + (i + 1) * block);
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Public-dataset converter.
//
// Expected source layout (produced by tools/export_lee2019.py):
//   <source>/subjects.json   {"channels": [...], "sampling_rate": fs,
//                             "subjects": [{"id": n, "gender": 1|2,
//                                           "experience": 1|2}, ...]}
//   <source>/s<ID>_sess<S>_<TASK>.json  {"n_trials": n, "labels": [...]}
//   <source>/s<ID>_sess<S>_<TASK>.f32   float32 [n_trials, c, t_epoch]
// ---------------------------------------------------------------------------

void convert_public_dataset(const std::string& source_path, const std::string& out_path) {
    const fs::path src(source_path);
    if (!fs::exists(src) || !fs::is_directory(src))
        throw std::runtime_error("source directory not found: " + source_path);
    const fs::path subjects_path = src / "subjects.json";
    if (!fs::exists(subjects_path))
        throw std::runtime_error("missing file: " + subjects_path.string());

    ordered_json info;
    {
        std::ifstream f(subjects_path);
        try {
            f >> info;
        } catch (const std::exception& e) {
            throw std::runtime_error("invalid subjects.json: " + std::string(e.what()));
        }
    }

    EEGDataset ds;
    ds.channel_names = info.at("channels").get<std::vector<std::string>>();
    ds.sampling_rate = info.at("sampling_rate").get<double>();
    ds.c = static_cast<int>(ds.channel_names.size());
    ds.t = 0;
    ds.provenance = "converted from " + source_path;

    struct SubjectInfo {
        int id, gender, experience;
    };
    std::vector<SubjectInfo> subjects;
    for (const auto& js : info.at("subjects"))
        subjects.push_back({js.at("id").get<int>(), js.at("gender").get<int>(),
                            js.at("experience").get<int>()});
    if (subjects.empty()) throw std::runtime_error("subjects.json lists no subjects");

    const std::vector<std::pair<std::string, int>> tasks = {{"ERP", 2}, {"MI", 2}, {"SSVEP", 4}};
    ds.task_vocab = tasks;
    ds.privacy_vocab = {{"identity", static_cast<int>(subjects.size())}, {"gender", 2},
                        {"experience", 2}};

    const int n_sessions = info.value("n_sessions", 2);
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const auto& sub = subjects[si];
        for (int sess = 1; sess <= n_sessions; ++sess) {
            for (const auto& [task, k_classes] : tasks) {
                const std::string stem =
                    "s" + std::to_string(sub.id) + "_sess" + std::to_string(sess) + "_" + task;
                const fs::path jpath = src / (stem + ".json");
                const fs::path bpath = src / (stem + ".f32");
                if (!fs::exists(jpath)) throw std::runtime_error("missing file: " + jpath.string());
                if (!fs::exists(bpath)) throw std::runtime_error("missing file: " + bpath.string());

                ordered_json jmeta;
                {
                    std::ifstream f(jpath);
                    f >> jmeta;
                }
                const int n_trials = jmeta.at("n_trials").get<int>();
                auto labels = jmeta.at("labels").get<std::vector<int>>();
                if (static_cast<int>(labels.size()) != n_trials)
                    throw std::runtime_error(stem + ": labels length does not match n_trials");
                const int t_epoch = jmeta.at("t").get<int>();
                if (ds.t == 0) ds.t = t_epoch;
                if (t_epoch != ds.t)
                    throw std::runtime_error(stem + ": epoch length differs from other files");

                const std::uintmax_t expect =
                    static_cast<std::uintmax_t>(n_trials) * ds.c * ds.t * sizeof(float);
                if (fs::file_size(bpath) != expect)
                    throw std::runtime_error(stem + ".f32 size mismatch: expected " +
                                             std::to_string(expect) + " bytes");

                std::ifstream f(bpath, std::ios::binary);
                const std::size_t off = ds.data.size();
                ds.data.resize(off + static_cast<std::size_t>(n_trials) * ds.c * ds.t);
                f.read(reinterpret_cast<char*>(ds.data.data() + off),
                       static_cast<std::streamsize>(expect));
                if (!f) throw std::runtime_error("short read from " + bpath.string());

                for (int k = 0; k < n_trials; ++k) {
                    if (labels[k] < 1 || labels[k] > k_classes)
                        throw std::runtime_error(stem + ": label out of range at trial " +
                                                 std::to_string(k));
                    TrialMeta tr;
                    tr.subject_id = sub.id;
                    tr.session_id = sess;
                    tr.task = task;
                    tr.y = labels[k];
                    tr.privacy["identity"] = static_cast<int>(si) + 1;
                    tr.privacy["gender"] = sub.gender;
                    tr.privacy["experience"] = sub.experience;
                    ds.trials.push_back(std::move(tr));
                }
            }
        }
    }

    save_dataset(ds, out_path);
}

}  // namespace eegpriv
