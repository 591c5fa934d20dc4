#include "eegpriv/evaluation.hpp"

#include "eegpriv/classical.hpp"
#include "eegpriv/rng.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace eegpriv {

namespace {

// Runs fn(0..n-1) on a small worker pool; results must be written into
// preallocated per-index slots so scheduling cannot change the output.
void run_indexed(int n_tasks, int n_threads, const std::function<void(int)>& fn) {
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_tasks));
    if (n_threads == 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < n_threads; ++w)
        workers.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

std::vector<int> labels_for(const EEGDataset& ds, const LabelSelector& sel) {
    std::vector<int> out(ds.n());
    for (int i = 0; i < ds.n(); ++i) out[i] = sel.get(ds.trials[i]);
    return out;
}

}  // namespace

LabelSelector privacy_selector(const EEGDataset& ds, const std::string& type) {
    LabelSelector sel;
    sel.name = type;
    sel.n_classes = ds.privacy_classes(type);
    sel.get = [type](const TrialMeta& tr) { return tr.privacy.at(type); };
    return sel;
}

LabelSelector task_selector(const EEGDataset& ds, const std::string& task) {
    LabelSelector sel;
    sel.name = task;
    sel.n_classes = ds.task_classes(task);
    sel.get = [](const TrialMeta& tr) { return tr.y; };
    return sel;
}

LosoResult loso_cv_paired(const EEGDataset& train_source, const EEGDataset& test_source,
                          const TrainPredictFn& model, const LabelSelector& selector,
                          int repeats, const std::vector<std::uint64_t>& seeds,
                          bool record_first_curve, int n_threads) {
    if (repeats < 1) throw std::runtime_error("loso_cv: repeats must be >= 1");
    if (static_cast<int>(seeds.size()) != repeats)
        throw std::runtime_error("loso_cv: need one seed per repeat");
    if (train_source.n() != test_source.n())
        throw std::runtime_error("loso_cv: datasets are not aligned trial-for-trial");

    const auto sessions = train_source.session_ids();
    if (sessions.size() < 2) throw std::runtime_error("loso_cv: need at least 2 sessions");

    struct Fold {
        EEGDataset train_ds, test_ds;
        std::vector<int> y_train, y_test;
        int holdout;
    };
    std::vector<Fold> folds;
    for (int holdout : sessions) {
        Fold f;
        f.holdout = holdout;
        auto [train_part, test_unused] = split_by_session(train_source, holdout);
        auto [train_unused, test_part] = split_by_session(test_source, holdout);
        f.train_ds = std::move(train_part);
        f.test_ds = std::move(test_part);
        f.y_train = labels_for(f.train_ds, selector);
        f.y_test = labels_for(f.test_ds, selector);
        folds.push_back(std::move(f));
    }

    const int n_runs = static_cast<int>(folds.size()) * repeats;
    std::vector<LosoRun> runs(n_runs);
    run_indexed(n_runs, n_threads, [&](int task) {
        const int fold_i = task / repeats;
        const int rep = task % repeats;
        const Fold& f = folds[fold_i];
        LosoRun& run = runs[task];
        run.holdout_session = f.holdout;
        run.repeat = rep;
        run.seed = seed_mix({seeds[rep], static_cast<std::uint64_t>(f.holdout)});
        std::vector<EpochStat>* curve =
            (record_first_curve && fold_i == 0 && rep == 0) ? &run.curve : nullptr;
        auto preds = model(f.train_ds, f.y_train, f.test_ds, f.y_test, run.seed, curve);
        run.bca = bca(preds, f.y_test, selector.n_classes);
    });

    LosoResult result;
    result.runs = std::move(runs);
    double acc = 0.0;
    for (const auto& r : result.runs) acc += r.bca;
    result.mean_bca = acc / result.runs.size();
    return result;
}

LosoResult loso_cv(const EEGDataset& ds, const TrainPredictFn& model,
                   const LabelSelector& selector, int repeats,
                   const std::vector<std::uint64_t>& seeds, bool record_first_curve,
                   int n_threads) {
    return loso_cv_paired(ds, ds, model, selector, repeats, seeds, record_first_curve,
                          n_threads);
}

EEGDataset filter_task(const EEGDataset& ds, const std::string& task) {
    EEGDataset out;
    out.channel_names = ds.channel_names;
    out.sampling_rate = ds.sampling_rate;
    out.task_vocab = ds.task_vocab;
    out.privacy_vocab = ds.privacy_vocab;
    out.provenance = ds.provenance;
    out.c = ds.c;
    out.t = ds.t;
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.trials[i].task != task) continue;
        out.trials.push_back(ds.trials[i]);
        out.data.insert(out.data.end(), ds.data.begin() + i * block,
                        ds.data.begin() + (i + 1) * block);
    }
    if (out.trials.empty()) throw std::runtime_error("filter_task: no trials of task " + task);
    return out;
}

namespace {

TrainPredictFn cnn_train_predict(Arch arch, int n_classes, const EvalOptions& opts) {
    const int epochs = opts.arch_epochs.at(to_string(arch));
    return [arch, n_classes, epochs, opts](const EEGDataset& train_ds,
                                           const std::vector<int>& y_train,
                                           const EEGDataset& test_ds,
                                           const std::vector<int>& y_test, std::uint64_t seed,
                                           std::vector<EpochStat>* curve) {
        ModelSpec spec;
        spec.arch = arch;
        spec.c = train_ds.c;
        spec.t = train_ds.t;
        spec.n_classes = n_classes;
        spec.learning_rate = opts.learning_rate;
        spec.batch_size = opts.batch_size;
        spec.hyper = opts.hyper;
        spec.seed = seed;
        CnnClassifier clf(spec);
        std::vector<int> idx(train_ds.n());
        for (int i = 0; i < train_ds.n(); ++i) idx[i] = i;
        const bool want_curve = curve != nullptr;
        clf.train(train_ds, idx, y_train, epochs, seed_mix({seed, hash_str("train")}),
                  want_curve ? &test_ds : nullptr, want_curve ? &y_test : nullptr);
        if (want_curve) *curve = clf.training_curve();
        return clf.predict(test_ds);
    };
}

void append_runs(EvalReport& report, const LosoResult& res, const std::string& label_space,
                 const std::string& arch, const std::string& variant) {
    for (const auto& r : res.runs) {
        report.runs.push_back({label_space, arch, variant, r.holdout_session, r.repeat, r.seed,
                               r.bca});
        if (!r.curve.empty())
            report.curves[label_space + "/" + arch + "/" + variant] = r.curve;
    }
}

std::vector<std::uint64_t> repeat_seeds(const EvalOptions& opts, const std::string& label_space,
                                        const std::string& arch) {
    std::vector<std::uint64_t> seeds(opts.repeats);
    for (int r = 0; r < opts.repeats; ++r)
        seeds[r] = seed_mix({opts.base_seed, hash_str(label_space), hash_str(arch),
                             static_cast<std::uint64_t>(r)});
    return seeds;
}

void check_aligned(const EEGDataset& a, const EEGDataset& b) {
    if (a.n() != b.n() || a.c != b.c || a.t != b.t)
        throw std::runtime_error("eval: original and protected datasets are not aligned");
    for (int i = 0; i < a.n(); ++i) {
        const auto& ta = a.trials[i];
        const auto& tb = b.trials[i];
        if (ta.subject_id != tb.subject_id || ta.session_id != tb.session_id ||
            ta.task != tb.task || ta.y != tb.y || ta.privacy != tb.privacy)
            throw std::runtime_error("eval: trial metadata differs at index " + std::to_string(i));
    }
}

}  // namespace

EvalReport privacy_eval(const EEGDataset& ds_original, const EEGDataset& ds_protected,
                        const std::vector<Arch>& archs, const std::vector<std::string>& types,
                        const EvalOptions& opts, const std::string& bank_arch) {
    check_aligned(ds_original, ds_protected);
    EvalReport report;
    report.repeats = opts.repeats;
    report.base_seed = opts.base_seed;
    report.sessions = ds_original.session_ids();
    report.bank_arch = bank_arch;
    report.test_on_original = opts.test_on_original;

    for (const auto& type : types) {
        const auto sel = privacy_selector(ds_original, type);
        for (Arch arch : archs) {
            const auto fn = cnn_train_predict(arch, sel.n_classes, opts);
            const auto seeds = repeat_seeds(opts, type, to_string(arch));
            auto orig = loso_cv(ds_original, fn, sel, opts.repeats, seeds, opts.record_curves,
                                opts.n_threads);
            auto pert = loso_cv_paired(ds_protected,
                                       opts.test_on_original ? ds_original : ds_protected, fn,
                                       sel, opts.repeats, seeds, opts.record_curves,
                                       opts.n_threads);
            report.rows.push_back({type, to_string(arch), orig.mean_bca, pert.mean_bca,
                                   orig.mean_bca - pert.mean_bca});
            append_runs(report, orig, type, to_string(arch), "original");
            append_runs(report, pert, type, to_string(arch), "perturbed");
        }
    }
    return report;
}

EvalReport task_eval(const EEGDataset& ds_original, const EEGDataset& ds_protected,
                     const std::vector<Arch>& archs, const EvalOptions& opts,
                     bool include_classical) {
    check_aligned(ds_original, ds_protected);
    EvalReport report;
    report.repeats = opts.repeats;
    report.base_seed = opts.base_seed;
    report.sessions = ds_original.session_ids();
    report.test_on_original = opts.test_on_original;

    for (const auto& [task, k_classes] : ds_original.task_vocab) {
        EEGDataset orig_task = filter_task(ds_original, task);
        EEGDataset prot_task = filter_task(ds_protected, task);
        const auto sel = task_selector(orig_task, task);

        std::vector<std::pair<std::string, TrainPredictFn>> models;
        for (Arch arch : archs)
            models.emplace_back(to_string(arch), cnn_train_predict(arch, sel.n_classes, opts));
        if (include_classical) {
            if (task == "ERP") {
                models.emplace_back("xDAWN+LR", [&opts](const EEGDataset& train_ds,
                                                        const std::vector<int>& y_train,
                                                        const EEGDataset& test_ds,
                                                        const std::vector<int>&, std::uint64_t,
                                                        std::vector<EpochStat>*) {
                    std::vector<int> idx(train_ds.n());
                    for (int i = 0; i < train_ds.n(); ++i) idx[i] = i;
                    auto model = fit_xdawn_lr(train_ds, idx, y_train, opts.xdawn_filters);
                    std::vector<int> test_idx(test_ds.n());
                    for (int i = 0; i < test_ds.n(); ++i) test_idx[i] = i;
                    return predict_xdawn_lr(model, test_ds, test_idx);
                });
            } else if (task == "MI") {
                models.emplace_back("CSP+LR", [&opts](const EEGDataset& train_ds,
                                                      const std::vector<int>& y_train,
                                                      const EEGDataset& test_ds,
                                                      const std::vector<int>&, std::uint64_t,
                                                      std::vector<EpochStat>*) {
                    std::vector<int> idx(train_ds.n());
                    for (int i = 0; i < train_ds.n(); ++i) idx[i] = i;
                    auto model = fit_csp_lr(train_ds, idx, y_train, opts.csp_pairs);
                    std::vector<int> test_idx(test_ds.n());
                    for (int i = 0; i < test_ds.n(); ++i) test_idx[i] = i;
                    return predict_csp_lr(model, test_ds, test_idx);
                });
            } else if (task == "SSVEP") {
                models.emplace_back("CCA", [&opts](const EEGDataset&, const std::vector<int>&,
                                                   const EEGDataset& test_ds,
                                                   const std::vector<int>&, std::uint64_t,
                                                   std::vector<EpochStat>*) {
                    std::vector<int> test_idx(test_ds.n());
                    for (int i = 0; i < test_ds.n(); ++i) test_idx[i] = i;
                    return cca_classify(test_ds, test_idx, opts.cca_freqs, opts.cca_harmonics,
                                        test_ds.sampling_rate);
                });
            }
        }

        for (const auto& [arch_name, fn] : models) {
            const auto seeds = repeat_seeds(opts, task, arch_name);
            auto orig = loso_cv(orig_task, fn, sel, opts.repeats, seeds, opts.record_curves,
                                opts.n_threads);
            auto pert = loso_cv_paired(prot_task, opts.test_on_original ? orig_task : prot_task,
                                       fn, sel, opts.repeats, seeds, opts.record_curves,
                                       opts.n_threads);
            report.rows.push_back({task, arch_name, orig.mean_bca, pert.mean_bca,
                                   orig.mean_bca - pert.mean_bca});
            append_runs(report, orig, task, arch_name, "original");
            append_runs(report, pert, task, arch_name, "perturbed");
        }
    }
    return report;
}

namespace {
std::string fmt(double v) {
    std::ostringstream oss;
    oss << std::fixed << std::setprecision(6) << v;
    return oss.str();
}
}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "label_space,classifier,bca_original,bca_perturbed,reduction\n";
    for (const auto& row : report.rows)
        f << row.label_space << "," << row.arch << "," << fmt(row.bca_original) << ","
          << fmt(row.bca_perturbed) << "," << fmt(row.reduction) << "\n";
}

void write_runs_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "label_space,classifier,variant,holdout_session,repeat,seed,bca\n";
    for (const auto& r : report.runs)
        f << r.label_space << "," << r.arch << "," << r.variant << "," << r.holdout_session
          << "," << r.repeat << "," << r.seed << "," << fmt(r.bca) << "\n";
}

void write_curves_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "series,epoch,loss,train_bca,test_bca\n";
    for (const auto& [key, curve] : report.curves)
        for (std::size_t e = 0; e < curve.size(); ++e)
            f << key << "," << e + 1 << "," << fmt(curve[e].loss) << ","
              << fmt(curve[e].train_bca) << "," << fmt(curve[e].test_bca) << "\n";
}

std::string format_report_table(const EvalReport& report) {
    std::ostringstream oss;
    oss << std::left << std::setw(14) << "label_space" << std::setw(12) << "classifier"
        << std::right << std::setw(10) << "original" << std::setw(11) << "perturbed"
        << std::setw(11) << "reduction" << "\n";
    for (const auto& row : report.rows) {
        oss << std::left << std::setw(14) << row.label_space << std::setw(12) << row.arch
            << std::right << std::fixed << std::setprecision(2) << std::setw(9)
            << 100.0 * row.bca_original << "%" << std::setw(10) << 100.0 * row.bca_perturbed
            << "%" << std::setw(10) << 100.0 * row.reduction << "%\n";
    }
    double orig = 0.0, pert = 0.0;
    for (const auto& row : report.rows) {
        orig += row.bca_original;
        pert += row.bca_perturbed;
    }
    if (!report.rows.empty()) {
        orig /= report.rows.size();
        pert /= report.rows.size();
        oss << std::left << std::setw(14) << "average" << std::setw(12) << "" << std::right
            << std::fixed << std::setprecision(2) << std::setw(9) << 100.0 * orig << "%"
            << std::setw(10) << 100.0 * pert << "%" << std::setw(10) << 100.0 * (orig - pert)
            << "%\n";
    }
    return oss.str();
}

}  // namespace eegpriv
