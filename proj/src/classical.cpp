#include "eegpriv/classical.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace eegpriv {

namespace {

constexpr double kRidgeScale = 1e-6;  // ridge = 1e-6 * trace / c on covariances

Eigen::MatrixXd ridge_regularize(Eigen::MatrixXd m) {
    const double ridge = kRidgeScale * m.trace() / m.rows();
    m.diagonal().array() += std::max(ridge, 1e-12);
    return m;
}

Eigen::MatrixXd trial_to_double(const RowMatrixXf& x) { return x.cast<double>(); }

void check_binary_labels(const std::vector<int>& labels) {
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() != 2 || *classes.begin() != 1 || *classes.rbegin() != 2)
        throw std::runtime_error("expected binary labels {1,2} with both classes present");
}

}  // namespace

void LogisticRegression::fit(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                             double l2, int max_iter, double tol) {
    const Eigen::Index n = features.rows(), d = features.cols();
    if (n != static_cast<Eigen::Index>(labels.size()))
        throw std::runtime_error("LogisticRegression: feature/label count mismatch");
    check_binary_labels(labels);

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[i] == 2 ? 1.0 : 0.0;

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);  // [w; b]
    Eigen::MatrixXd xext(n, d + 1);
    xext.leftCols(d) = features;
    xext.col(d).setOnes();

    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd z = xext * theta;
        Eigen::VectorXd p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        Eigen::VectorXd grad = xext.transpose() * (p - y);
        grad.head(d) += l2 * theta.head(d);

        Eigen::VectorXd s = (p.array() * (1.0 - p.array())).max(1e-10).matrix();
        Eigen::MatrixXd hess = xext.transpose() * s.asDiagonal() * xext;
        hess.topLeftCorner(d, d).diagonal().array() += l2;
        hess.diagonal().array() += 1e-10;

        Eigen::VectorXd step = hess.ldlt().solve(grad);
        theta -= step;
        if (step.norm() < tol) break;
    }
    w = theta.head(d);
    b = theta(d);
}

std::vector<int> LogisticRegression::predict(const Eigen::MatrixXd& features) const {
    std::vector<int> out(features.rows());
    Eigen::VectorXd z = features * w;
    for (Eigen::Index i = 0; i < features.rows(); ++i) out[i] = (z(i) + b) > 0.0 ? 2 : 1;
    return out;
}

// ---------------------------------------------------------------------------

XdawnLR fit_xdawn_lr(const EEGDataset& ds, const std::vector<int>& idx,
                     const std::vector<int>& labels, int n_filters) {
    if (idx.size() != labels.size()) throw std::runtime_error("fit_xdawn_lr: size mismatch");
    check_binary_labels(labels);
    if (n_filters < 1 || n_filters > ds.c)
        throw std::runtime_error("fit_xdawn_lr: n_filters must be in [1, channels]");

    const int c = ds.c, t = ds.t;
    // Evoked response of the target class (label 2).
    Eigen::MatrixXd evoked = Eigen::MatrixXd::Zero(c, t);
    int n_target = 0;
    Eigen::MatrixXd sigma_x = Eigen::MatrixXd::Zero(c, c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd x = trial_to_double(ds.trial(idx[i]));
        sigma_x += x * x.transpose() / t;
        if (labels[i] == 2) {
            evoked += x;
            ++n_target;
        }
    }
    evoked /= n_target;
    sigma_x /= static_cast<double>(idx.size());
    Eigen::MatrixXd sigma_s = evoked * evoked.transpose() / t;

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        ridge_regularize(sigma_s), ridge_regularize(sigma_x));
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("fit_xdawn_lr: eigensolver failed");

    XdawnLR model;
    model.n_filters = n_filters;
    model.filters.resize(n_filters, c);
    for (int k = 0; k < n_filters; ++k)
        model.filters.row(k) = solver.eigenvectors().col(c - 1 - k).transpose();

    Eigen::MatrixXd features(idx.size(), static_cast<Eigen::Index>(n_filters) * t);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd filtered = model.filters * trial_to_double(ds.trial(idx[i]));
        features.row(i) = Eigen::Map<Eigen::VectorXd>(filtered.data(), filtered.size());
    }
    model.lr.fit(features, labels, 1.0);
    return model;
}

std::vector<int> predict_xdawn_lr(const XdawnLR& model, const EEGDataset& ds,
                                  const std::vector<int>& idx) {
    Eigen::MatrixXd features(idx.size(), model.filters.rows() * ds.t);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd filtered = model.filters * trial_to_double(ds.trial(idx[i]));
        features.row(i) = Eigen::Map<Eigen::VectorXd>(filtered.data(), filtered.size());
    }
    return model.lr.predict(features);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd csp_filters(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2,
                            int n_pairs) {
    const int c = static_cast<int>(sigma1.rows());
    if (2 * n_pairs > c) throw std::runtime_error("csp_filters: too many pairs for channel count");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        ridge_regularize(sigma1), ridge_regularize(sigma1 + sigma2));
    if (solver.info() != Eigen::Success) throw std::runtime_error("csp_filters: solver failed");
    // eigenvalues ascend; take n_pairs from each spectral end
    Eigen::MatrixXd filters(2 * n_pairs, c);
    for (int k = 0; k < n_pairs; ++k) {
        filters.row(2 * k) = solver.eigenvectors().col(c - 1 - k).transpose();
        filters.row(2 * k + 1) = solver.eigenvectors().col(k).transpose();
    }
    return filters;
}

Eigen::VectorXd csp_eigenvalues(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        ridge_regularize(sigma1), ridge_regularize(sigma1 + sigma2));
    return solver.eigenvalues();
}

CspLR fit_csp_lr(const EEGDataset& ds, const std::vector<int>& idx,
                 const std::vector<int>& labels, int n_pairs) {
    if (idx.size() != labels.size()) throw std::runtime_error("fit_csp_lr: size mismatch");
    check_binary_labels(labels);

    const int c = ds.c, t = ds.t;
    Eigen::MatrixXd sigma1 = Eigen::MatrixXd::Zero(c, c), sigma2 = Eigen::MatrixXd::Zero(c, c);
    int n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd x = trial_to_double(ds.trial(idx[i]));
        Eigen::MatrixXd cov = x * x.transpose() / t;
        if (labels[i] == 1) {
            sigma1 += cov;
            ++n1;
        } else {
            sigma2 += cov;
            ++n2;
        }
    }
    sigma1 /= n1;
    sigma2 /= n2;

    CspLR model;
    model.n_pairs = n_pairs;
    model.filters = csp_filters(sigma1, sigma2, n_pairs);

    Eigen::MatrixXd features(idx.size(), 2 * n_pairs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd filtered = model.filters * trial_to_double(ds.trial(idx[i]));
        for (int k = 0; k < 2 * n_pairs; ++k) {
            const double var = filtered.row(k).squaredNorm() / t;
            features(i, k) = std::log(std::max(var, 1e-12));
        }
    }
    model.lr.fit(features, labels, 1.0);
    return model;
}

std::vector<int> predict_csp_lr(const CspLR& model, const EEGDataset& ds,
                                const std::vector<int>& idx) {
    Eigen::MatrixXd features(idx.size(), model.filters.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        Eigen::MatrixXd filtered = model.filters * trial_to_double(ds.trial(idx[i]));
        for (int k = 0; k < model.filters.rows(); ++k) {
            const double var = filtered.row(k).squaredNorm() / ds.t;
            features(i, k) = std::log(std::max(var, 1e-12));
        }
    }
    return model.lr.predict(features);
}

// ---------------------------------------------------------------------------

double canonical_correlation(const RowMatrixXf& trial, double freq, int n_harmonics, double fs) {
    if (freq <= 0.0 || freq >= fs / 2.0)
        throw std::runtime_error("canonical_correlation: frequency outside (0, Nyquist)");
    if (n_harmonics < 1) throw std::runtime_error("canonical_correlation: need >= 1 harmonic");

    const int t = static_cast<int>(trial.cols());
    Eigen::MatrixXd x = trial.cast<double>();
    x.colwise() -= x.rowwise().mean();

    const double var_total = x.squaredNorm() / t;
    if (var_total < 1e-18) return 0.0;  // constant trial

    // harmonics above Nyquist are dropped (the fundamental is checked above)
    int usable = 0;
    for (int h = 1; h <= n_harmonics; ++h)
        if (freq * h < fs / 2.0) usable = h;
    const int d = 2 * usable;
    Eigen::MatrixXd y(d, t);
    for (int h = 1; h <= usable; ++h) {
        const double f = freq * h;
        for (int j = 0; j < t; ++j) {
            const double phase = 2.0 * M_PI * f * j / fs;
            y(2 * (h - 1), j) = std::sin(phase);
            y(2 * (h - 1) + 1, j) = std::cos(phase);
        }
    }
    y.colwise() -= y.rowwise().mean();

    Eigen::MatrixXd cxx = ridge_regularize(x * x.transpose() / t);
    Eigen::MatrixXd cyy = ridge_regularize(y * y.transpose() / t);
    Eigen::MatrixXd cxy = x * y.transpose() / t;

    Eigen::LLT<Eigen::MatrixXd> lx(cxx), ly(cyy);
    if (lx.info() != Eigen::Success || ly.info() != Eigen::Success) return 0.0;
    // K = Lx^-1 Cxy Ly^-T; max canonical correlation = largest singular value
    Eigen::MatrixXd k = lx.matrixL().solve(cxy);
    k = ly.matrixL().solve(k.transpose()).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(k);
    const double rho = svd.singularValues()(0);
    return std::min(rho, 1.0);
}

std::vector<int> cca_classify(const EEGDataset& ds, const std::vector<int>& idx,
                              const std::vector<double>& frequency_set, int n_harmonics,
                              double fs) {
    if (frequency_set.empty()) throw std::runtime_error("cca_classify: empty frequency set");
    for (double f : frequency_set)
        if (f >= fs / 2.0) throw std::runtime_error("cca_classify: frequency above Nyquist");

    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) {
        auto x = ds.trial(i);
        int best = 0;
        double best_rho = -1.0;
        for (std::size_t k = 0; k < frequency_set.size(); ++k) {
            const double rho = canonical_correlation(x, frequency_set[k], n_harmonics, fs);
            if (rho > best_rho) {
                best_rho = rho;
                best = static_cast<int>(k);
            }
        }
        out.push_back(best + 1);
    }
    return out;
}

}  // namespace eegpriv
