#ifndef FEDBAYES_DATA_HPP
#define FEDBAYES_DATA_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedbayes/tensor.hpp"

namespace fedbayes::data {

// Labeled samples. Image-style sources are normalized to [0,1] per feature;
// CSV features are taken as given.
struct Dataset {
    std::vector<num::Tensor1> features;
    std::vector<int> labels;
    int n_classes = 0;
    std::string name;

    std::size_t size() const { return features.size(); }
    std::size_t dim() const { return features.empty() ? 0 : features[0].len(); }

    std::vector<std::size_t> class_counts() const;
    // New dataset holding the given rows, in order.
    Dataset select(const std::vector<std::size_t>& idx, const std::string& new_name) const;
};

enum class PartitionScheme { step, dirichlet };

// Assignment of parent-dataset rows to clients.
struct Partition {
    std::vector<std::vector<std::size_t>> assignments;
    PartitionScheme scheme = PartitionScheme::dirichlet;
    std::string params;           // human-readable parameter record
    bool used_replacement = false; // step scheme only

    std::size_t n_clients() const { return assignments.size(); }
};

// A client's train / meta / test shards. Index-disjoint: test is 20% of the
// client's samples, meta is 20% of the remaining training portion (16% of the
// total), train is what is left (64%).
struct ClientShards {
    Dataset train;
    Dataset meta;
    Dataset test;
};

enum class NoiseMode { feature_gauss, label_flip };

// IDX ingestion (big-endian magic 0x00000803 images / 0x00000801 labels).
// Pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Rows are "label,f1,...,fd" with a constant d. No rescaling.
Dataset load_csv(const std::string& path, int n_classes);

// Gaussian class blobs: class c centered at a deterministic point on the unit
// sphere, spread * N(0, I) around it, then mapped into [0,1] per feature.
Dataset synth_blobs(int n_classes, int dim, int per_class, double spread,
                    std::uint64_t seed);

// Per class, draw q_c ~ Dirichlet(alpha * 1_N) and split the class across
// clients in those proportions (largest-remainder rounding). Empty clients
// are repaired by moving one sample from the largest client.
Partition partition_dirichlet(const Dataset& ds, int n_clients, double alpha,
                              std::uint64_t seed);

// Rotation scheme: client n's major classes are {n*n_major, ...} mod C. Each
// client draws major_per samples from each major class and minor_per from
// each minor class, without replacement across clients while the class supply
// lasts, with replacement afterwards when allowed.
Partition partition_step(const Dataset& ds, int n_clients, int n_major,
                         int major_per, int minor_per, std::uint64_t seed,
                         bool allow_replacement = true);

// feature_gauss: features += N(0, epsilon^2), clamped to [0,1].
// label_flip: each label independently replaced by a uniformly random
// different label with probability epsilon.
Dataset inject_noise(const Dataset& ds, double epsilon, NoiseMode mode,
                     std::uint64_t seed);

// Per-class stratified sample of ceil(fraction * class_count), no replacement.
Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed);

// 80/20 train/test stratified split, then 20% of the training portion carved
// out (stratified) as the meta shard.
ClientShards make_shards(const Dataset& client_samples, std::uint64_t seed);

// Textual audit table: header then one "client_id,sample_index" row per
// assignment, clients ascending.
void write_manifest(const Partition& p, std::ostream& os);
std::string manifest_string(const Partition& p);

// counts[client][class]
std::vector<std::vector<std::size_t>> class_histogram(const Dataset& ds,
                                                      const Partition& p);

} // namespace fedbayes::data

#endif
