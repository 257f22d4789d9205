#pragma once

#include "trait_probe/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trait_probe {

struct PcaProvenance {
    std::string model;
    int layer = -1;
    std::string dataset;
    long long n_frames = 0;
};

struct PcaModel {
    VectorXd mean;         // D
    MatrixXd basis;        // k x D, orthonormal rows, descending eigenvalue order
    VectorXd eigenvalues;  // k, nonnegative, descending
    PcaProvenance fitted_on;

    int input_dim() const { return static_cast<int>(mean.size()); }
    int output_dim() const { return static_cast<int>(basis.rows()); }

    // Leading k components of this model.
    PcaModel truncated(int k) const;
};

// Sample covariance (divisor N-1) eigendecomposition of the rows of
// `frames`. Each basis row's largest-magnitude entry is made positive.
// Throws InvalidK unless 1 <= k <= min(N-1, D).
PcaModel fit_pca(const MatrixXd& frames, int k);

// Fit over the frames of many utterances. At most `max_frames` frames are
// used, drawn uniformly without replacement with the given seed.
PcaModel fit_pca(const std::vector<MatrixXf>& utterances, int k, std::uint64_t seed,
                 long long max_frames = 200000);

// (frames - mean) * basis^T. Throws ShapeMismatch.
MatrixXd project(const PcaModel& model, const MatrixXd& frames);
MatrixXf project(const PcaModel& model, const MatrixXf& frames);

// basis^T * y + mean, row-wise.
MatrixXd reconstruct(const PcaModel& model, const MatrixXd& projected);

struct SweepDims {
    std::vector<int> dims;
    bool truncated = false;
    std::string warning;
};

// 512, 448, ..., 64 and a final 32, keeping only k <= D.
SweepDims pca_sweep_dims(int input_dim);

std::vector<std::uint8_t> encode_pca(const PcaModel& model);
PcaModel decode_pca(std::span<const std::uint8_t> bytes);
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

} // namespace trait_probe
