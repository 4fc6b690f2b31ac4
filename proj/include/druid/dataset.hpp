#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "druid/streams.hpp"

namespace druid {

struct Sample {
    Eigen::VectorXd w;
    double y = 0.0;  // 0 or 1
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Samples owned by one agent, stored row-wise for batched evaluation.
struct AgentShard {
    std::size_t agent = 0;
    Eigen::MatrixXd features;  // D_i x d
    Eigen::VectorXd labels;    // D_i, entries in {0, 1}
    std::vector<std::size_t> source_rows;  // row of each sample in the pooled dataset

    std::size_t size() const { return std::size_t(labels.size()); }
    std::size_t dim() const { return std::size_t(features.cols()); }
    Sample sample(std::size_t j) const { return {features.row(Eigen::Index(j)).transpose(), labels(Eigen::Index(j))}; }
};

enum class PartitionStrategy { contiguous, shuffled };

/// Parses LIBSVM text ("label idx:val ...", 1-based indices).  Labels -1/+1
/// map to 0/1; 0/1 are kept.  `max_samples` = 0 reads the whole file.
std::vector<Sample> parse_libsvm(const std::filesystem::path& path, std::size_t dim, std::size_t max_samples = 0);
std::vector<Sample> parse_libsvm_text(const std::string& text, std::size_t dim, std::size_t max_samples = 0);

/// One LIBSVM line for `s` (label written as -1/+1, zero features omitted,
/// values printed with round-trip precision).
std::string format_libsvm(const Sample& s);
void write_libsvm(const std::vector<Sample>& samples, const std::filesystem::path& path);

/// Splits samples into n shards of floor(N/n) or ceil(N/n) each; the first
/// N mod n shards get the extra sample.  `rng` is consumed only for shuffled.
std::vector<AgentShard> partition(const std::vector<Sample>& samples, std::size_t n, PartitionStrategy strategy,
                                  Rng* rng = nullptr);

/// Uniform draw of `size` distinct row indices of the shard.
std::vector<std::size_t> sample_batch(const AgentShard& shard, std::size_t size, Rng& rng);

/// Synthetic stand-in for a 22-feature binary benchmark: a one-hot block of
/// `categories` columns plus bounded continuous columns in [-1, 1], labels
/// drawn from a logistic model with a negative class majority.
struct SyntheticSpec {
    std::size_t samples = 4000;
    std::size_t dim = 22;
    std::size_t categories = 10;
    double continuous_sd = 0.35;
    double category_bias_mean = -2.6;
    double category_bias_sd = 0.6;
    double weight_sd = 1.0;
    std::uint64_t seed = 2001;
};
std::vector<Sample> synthesize_logistic_dataset(const SyntheticSpec& spec);

/// Plain isotropic-Gaussian logistic data for small randomized instances.
std::vector<Sample> random_logistic_samples(std::size_t count, std::size_t dim, Rng& rng, double feature_sd = 1.0);

/// Stable 64-bit digest of sample contents (used to key cached minimisers).
std::uint64_t dataset_digest(std::span<const AgentShard> shards);

}  // namespace druid
