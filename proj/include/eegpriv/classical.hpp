#pragma once

#include "eegpriv/dataset.hpp"

#include <Eigen/Dense>

#include <vector>

namespace eegpriv {

// L2-regularized binary logistic regression fit by damped Newton iterations.
// Deterministic, no seed. Labels are 1/2.
struct LogisticRegression {
    Eigen::VectorXd w;
    double b = 0.0;

    void fit(const Eigen::MatrixXd& features, const std::vector<int>& labels,
             double l2 = 1.0, int max_iter = 50, double tol = 1e-8);
    std::vector<int> predict(const Eigen::MatrixXd& features) const;
};

// xDAWN spatial filtering (generalized Rayleigh quotient of the evoked-response
// covariance against the data covariance) + LR on the filtered vectorized trials.
struct XdawnLR {
    Eigen::MatrixXd filters;  // n_filters x c
    LogisticRegression lr;
    int n_filters = 0;
};

XdawnLR fit_xdawn_lr(const EEGDataset& ds, const std::vector<int>& idx,
                     const std::vector<int>& labels, int n_filters);
std::vector<int> predict_xdawn_lr(const XdawnLR& model, const EEGDataset& ds,
                                  const std::vector<int>& idx);

// CSP via the generalized eigenproblem of the two class-average covariances;
// filters satisfy w' (S1+S2) w = 1. Features are log-variances.
struct CspLR {
    Eigen::MatrixXd filters;  // 2*n_pairs x c
    LogisticRegression lr;
    int n_pairs = 0;
};

CspLR fit_csp_lr(const EEGDataset& ds, const std::vector<int>& idx,
                 const std::vector<int>& labels, int n_pairs);
std::vector<int> predict_csp_lr(const CspLR& model, const EEGDataset& ds,
                                const std::vector<int>& idx);

// Internal pieces exposed for the oracle tests.
Eigen::MatrixXd csp_filters(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2,
                            int n_pairs);
Eigen::VectorXd csp_eigenvalues(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2);

// Maximal canonical correlation between a trial and sin/cos references at one
// frequency and its harmonics. Degenerate (constant) trials give 0.
double canonical_correlation(const RowMatrixXf& trial, double freq, int n_harmonics, double fs);

// Training-free SSVEP recognition: argmax frequency per trial, ties to the
// lowest index. Returns 1-based frequency indices.
std::vector<int> cca_classify(const EEGDataset& ds, const std::vector<int>& idx,
                              const std::vector<double>& frequency_set, int n_harmonics,
                              double fs);

}  // namespace eegpriv
