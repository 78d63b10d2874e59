#ifndef FEDBAYES_RNG_HPP
#define FEDBAYES_RNG_HPP

#include <cstdint>
#include <vector>

namespace fedbayes::num {

// Purpose tags for hierarchical stream derivation. A stream is identified by
// (master seed, path of integers); the convention throughout the project is
// to append (round, client, purpose) triples so every logical consumer of
// randomness owns a private stream.
namespace purpose {
constexpr std::uint64_t init = 1;        // model initialization
constexpr std::uint64_t blobs = 2;       // synthetic dataset generation
constexpr std::uint64_t subsample = 3;   // |D| subsampling
constexpr std::uint64_t noise = 4;       // epsilon corruption
constexpr std::uint64_t partition = 5;   // client partitioning
constexpr std::uint64_t shards = 6;      // train/meta/test split
constexpr std::uint64_t batch_order = 7; // minibatch shuffling
constexpr std::uint64_t temp_train = 8;  // temporary (candidate) training
constexpr std::uint64_t train = 9;       // final local training
constexpr std::uint64_t meta_eval = 10;  // candidate scoring on the meta shard
constexpr std::uint64_t eval = 11;       // model evaluation
} // namespace purpose

// (master seed, derivation path). Same (seed, path) always yields the same
// stream; different paths yield unrelated streams.
struct SeedPath {
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> path;

    SeedPath() = default;
    explicit SeedPath(std::uint64_t master) : master_seed(master) {}
    SeedPath(std::uint64_t master, std::vector<std::uint64_t> p)
        : master_seed(master), path(std::move(p)) {}

    SeedPath child(std::uint64_t tag) const {
        SeedPath c = *this;
        c.path.push_back(tag);
        return c;
    }
    SeedPath child(std::uint64_t round, std::uint64_t client,
                   std::uint64_t tag) const {
        SeedPath c = *this;
        c.path.push_back(round);
        c.path.push_back(client);
        c.path.push_back(tag);
        return c;
    }
};

// Counter-based deterministic stream: output i is a strong 64-bit mix of
// (key, i), so the stream is a pure function of the seed path and the draw
// index. Copying an Rng snapshots the stream position. Bit-identical across
// runs and thread schedules by construction.
class Rng {
public:
    explicit Rng(const SeedPath& sp);
    explicit Rng(std::uint64_t raw_seed) : Rng(SeedPath(raw_seed)) {}

    std::uint64_t next_u64();

    double uniform();                       // [0, 1)
    double normal();                        // standard normal (Box-Muller)
    double gamma(double alpha);             // alpha > 0, unit scale
    std::vector<double> dirichlet(const std::vector<double>& alpha);

    std::size_t uniform_index(std::size_t n); // [0, n)

    template <typename T>
    void shuffle(std::vector<T>& items) {
        // Fisher-Yates, descending
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

inline Rng derive_rng(const SeedPath& sp) { return Rng(sp); }

} // namespace fedbayes::num

#endif
