#include "fedbayes/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedbayes/errors.hpp"
#include "fedbayes/rng.hpp"

namespace fedbayes::data {

using num::Rng;
using num::SeedPath;

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
}

Dataset Dataset::select(const std::vector<std::size_t>& idx,
                        const std::string& new_name) const {
    Dataset out;
    out.n_classes = n_classes;
    out.name = new_name;
    out.features.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        out.features.push_back(features[i]);
        out.labels.push_back(labels[i]);
    }
    return out;
}

namespace {

void validate_dataset(const Dataset& ds, const char* where) {
    if (ds.features.size() != ds.labels.size())
        throw DimensionError(std::string(where) + ": feature/label counts differ");
    for (int y : ds.labels)
        if (y < 0 || y >= ds.n_classes)
            throw IndexError(std::string(where) + ": label out of range");
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return by_class;
}

// Allocate `total` items across buckets proportionally to quotas, floor first
// then remainders largest-first (ties broken by lower bucket index). Each
// bucket is capped at cap[i].
std::vector<std::size_t> largest_remainder(const std::vector<double>& quota,
                                           const std::vector<std::size_t>& cap,
                                           std::size_t total) {
    const std::size_t n = quota.size();
    std::vector<std::size_t> alloc(n);
    std::vector<std::pair<double, std::size_t>> rem; // (-frac, index) for stable sort
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = std::max(0.0, quota[i]);
        auto base = static_cast<std::size_t>(std::floor(q));
        base = std::min(base, cap[i]);
        alloc[i] = base;
        assigned += base;
        rem.emplace_back(-(q - std::floor(q)), i);
    }
    std::stable_sort(rem.begin(), rem.end());
    // hand out the remainder; loop again if caps block a full pass
    while (assigned < total) {
        bool progress = false;
        for (const auto& [negfrac, i] : rem) {
            if (assigned == total) break;
            if (alloc[i] < cap[i]) {
                alloc[i]++;
                assigned++;
                progress = true;
            }
        }
        if (!progress) break; // every bucket at cap
    }
    // trim overshoot from the smallest remainders
    for (auto it = rem.rbegin(); it != rem.rend() && assigned > total; ++it) {
        std::size_t i = it->second;
        if (alloc[i] > 0) {
            alloc[i]--;
            assigned--;
        }
    }
    return alloc;
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    auto read_u32be = [](std::ifstream& f, const std::string& path,
                         std::size_t offset) -> std::uint32_t {
        unsigned char buf[4];
        if (!f.read(reinterpret_cast<char*>(buf), 4)) {
            std::ostringstream oss;
            oss << "IDX file '" << path << "' truncated at byte offset " << offset;
            throw FormatError(oss.str());
        }
        return (static_cast<std::uint32_t>(buf[0]) << 24) |
               (static_cast<std::uint32_t>(buf[1]) << 16) |
               (static_cast<std::uint32_t>(buf[2]) << 8) | buf[3];
    };

    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open IDX images file '" + images_path + "'");
    const std::uint32_t img_magic = read_u32be(img, images_path, 0);
    if (img_magic != 0x00000803) {
        std::ostringstream oss;
        oss << "IDX images file '" << images_path << "': bad magic 0x" << std::hex
            << img_magic << " at byte offset 0, expected 0x00000803";
        throw FormatError(oss.str());
    }
    const std::uint32_t n_images = read_u32be(img, images_path, 4);
    const std::uint32_t rows = read_u32be(img, images_path, 8);
    const std::uint32_t cols = read_u32be(img, images_path, 12);
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open IDX labels file '" + labels_path + "'");
    const std::uint32_t lab_magic = read_u32be(lab, labels_path, 0);
    if (lab_magic != 0x00000801) {
        std::ostringstream oss;
        oss << "IDX labels file '" << labels_path << "': bad magic 0x" << std::hex
            << lab_magic << " at byte offset 0, expected 0x00000801";
        throw FormatError(oss.str());
    }
    const std::uint32_t n_labels = read_u32be(lab, labels_path, 4);
    if (n_labels != n_images) {
        std::ostringstream oss;
        oss << "IDX count mismatch: '" << images_path << "' has " << n_images
            << " images but '" << labels_path << "' has " << n_labels << " labels";
        throw FormatError(oss.str());
    }

    Dataset ds;
    ds.name = images_path;
    ds.features.reserve(n_images);
    ds.labels.reserve(n_images);
    std::vector<unsigned char> buf(pixels);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(pixels))) {
            std::ostringstream oss;
            oss << "IDX images file '" << images_path << "' truncated at byte offset "
                << 16 + static_cast<std::size_t>(i) * pixels;
            throw FormatError(oss.str());
        }
        num::Tensor1 x(pixels);
        for (std::size_t p = 0; p < pixels; ++p) x[p] = buf[p] / 255.0;
        ds.features.push_back(std::move(x));
        const int y = lab.get();
        if (y == EOF) {
            std::ostringstream oss;
            oss << "IDX labels file '" << labels_path << "' truncated at byte offset "
                << 8 + i;
            throw FormatError(oss.str());
        }
        ds.labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    ds.n_classes = max_label + 1;
    return ds;
}

Dataset load_csv(const std::string& path, int n_classes) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open CSV file '" + path + "'");
    Dataset ds;
    ds.name = path;
    ds.n_classes = n_classes;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t comma = line.find(',', start);
            std::string cell = line.substr(
                start, comma == std::string::npos ? std::string::npos : comma - start);
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                    ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
                cells.push_back(v);
            } catch (const std::exception&) {
                std::ostringstream oss;
                oss << "CSV '" << path << "' line " << line_no << ": non-numeric cell '"
                    << cell << "'";
                throw ParseError(oss.str());
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() < 2) {
            std::ostringstream oss;
            oss << "CSV '" << path << "' line " << line_no << ": need label plus features";
            throw ParseError(oss.str());
        }
        if (dim == 0) dim = cells.size() - 1;
        if (cells.size() - 1 != dim) {
            std::ostringstream oss;
            oss << "CSV '" << path << "' line " << line_no << ": ragged row, expected "
                << dim << " features, got " << cells.size() - 1;
            throw ParseError(oss.str());
        }
        const double label_raw = cells[0];
        const int label = static_cast<int>(label_raw);
        if (label_raw != label || label < 0 || label >= n_classes) {
            std::ostringstream oss;
            oss << "CSV '" << path << "' line " << line_no << ": label " << label_raw
                << " invalid for " << n_classes << " classes";
            throw ParseError(oss.str());
        }
        num::Tensor1 x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[i] = cells[i + 1];
        ds.features.push_back(std::move(x));
        ds.labels.push_back(label);
    }
    if (ds.size() == 0) throw ParseError("CSV '" + path + "' holds no samples");
    return ds;
}

Dataset synth_blobs(int n_classes, int dim, int per_class, double spread,
                    std::uint64_t seed) {
    if (n_classes < 1 || dim < 1 || per_class < 1)
        throw ArgumentError("synth_blobs counts must be >= 1");
    if (!(spread > 0.0)) throw ArgumentError("synth_blobs spread must be positive");

    // class centers on the unit sphere, fixed across seeds so every seed sees
    // the same task
    std::vector<num::Tensor1> centers;
    for (int c = 0; c < n_classes; ++c) {
        Rng crng(SeedPath(0xB10B5u, {static_cast<std::uint64_t>(c)}));
        num::Tensor1 center(static_cast<std::size_t>(dim));
        double norm2 = 0.0;
        for (std::size_t i = 0; i < center.len(); ++i) {
            center[i] = crng.normal();
            norm2 += center[i] * center[i];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : center.v) v *= inv;
        centers.push_back(std::move(center));
    }

    Rng rng(SeedPath(seed, {num::purpose::blobs}));
    Dataset ds;
    ds.name = "blobs";
    ds.n_classes = n_classes;
    ds.features.reserve(static_cast<std::size_t>(n_classes) * per_class);
    for (int c = 0; c < n_classes; ++c) {
        for (int s = 0; s < per_class; ++s) {
            num::Tensor1 x = centers[static_cast<std::size_t>(c)];
            for (double& v : x.v) v += spread * rng.normal();
            ds.features.push_back(std::move(x));
            ds.labels.push_back(c);
        }
    }

    // map each feature into [0,1]; constant features collapse to 0.5
    for (std::size_t d = 0; d < ds.dim(); ++d) {
        double lo = ds.features[0][d], hi = lo;
        for (const auto& x : ds.features) {
            lo = std::min(lo, x[d]);
            hi = std::max(hi, x[d]);
        }
        const double range = hi - lo;
        for (auto& x : ds.features)
            x[d] = range > 1e-300 ? (x[d] - lo) / range : 0.5;
    }
    return ds;
}

Partition partition_dirichlet(const Dataset& ds, int n_clients, double alpha,
                              std::uint64_t seed) {
    validate_dataset(ds, "partition_dirichlet");
    if (n_clients < 2) throw ArgumentError("partition_dirichlet needs n_clients >= 2");
    if (!(alpha > 0.0)) throw ArgumentError("partition_dirichlet needs alpha > 0");
    if (ds.size() < static_cast<std::size_t>(n_clients))
        throw ArgumentError("partition_dirichlet: dataset smaller than client count");

    Rng rng(SeedPath(seed, {num::purpose::partition}));
    Partition p;
    p.scheme = PartitionScheme::dirichlet;
    {
        std::ostringstream oss;
        oss << "scheme=dirichlet alpha=" << alpha << " n_clients=" << n_clients;
        p.params = oss.str();
    }
    p.assignments.resize(static_cast<std::size_t>(n_clients));

    const std::vector<double> conc(static_cast<std::size_t>(n_clients), alpha);
    for (auto& class_idx : indices_by_class(ds)) {
        if (class_idx.empty()) continue;
        rng.shuffle(class_idx);
        const std::vector<double> q = rng.dirichlet(conc);
        std::vector<double> quota(q.size());
        std::vector<std::size_t> cap(q.size(), class_idx.size());
        for (std::size_t n = 0; n < q.size(); ++n)
            quota[n] = q[n] * static_cast<double>(class_idx.size());
        const auto alloc = largest_remainder(quota, cap, class_idx.size());
        std::size_t cursor = 0;
        for (std::size_t n = 0; n < alloc.size(); ++n)
            for (std::size_t j = 0; j < alloc[n]; ++j)
                p.assignments[n].push_back(class_idx[cursor++]);
    }

    // repair: every client participates every round, so none may be empty
    for (std::size_t n = 0; n < p.assignments.size(); ++n) {
        while (p.assignments[n].empty()) {
            std::size_t donor = 0;
            for (std::size_t m = 1; m < p.assignments.size(); ++m)
                if (p.assignments[m].size() > p.assignments[donor].size()) donor = m;
            if (p.assignments[donor].size() <= 1)
                throw ArgumentError("partition_dirichlet: cannot repair empty client");
            p.assignments[n].push_back(p.assignments[donor].back());
            p.assignments[donor].pop_back();
        }
    }
    for (auto& a : p.assignments) std::sort(a.begin(), a.end());
    return p;
}

Partition partition_step(const Dataset& ds, int n_clients, int n_major,
                         int major_per, int minor_per, std::uint64_t seed,
                         bool allow_replacement) {
    validate_dataset(ds, "partition_step");
    if (n_clients < 1) throw ArgumentError("partition_step needs n_clients >= 1");
    if (n_major < 1 || n_major >= ds.n_classes)
        throw ArgumentError("partition_step needs 1 <= n_major < n_classes");
    if (major_per < 0 || minor_per < 0 || (major_per == 0 && minor_per == 0))
        throw ArgumentError("partition_step needs a positive per-class demand");

    Rng rng(SeedPath(seed, {num::purpose::partition}));
    auto pools = indices_by_class(ds);
    for (auto& pool : pools) rng.shuffle(pool);
    std::vector<std::size_t> cursor(pools.size(), 0);

    Partition p;
    p.scheme = PartitionScheme::step;
    p.assignments.resize(static_cast<std::size_t>(n_clients));

    const int C = ds.n_classes;
    for (int n = 0; n < n_clients; ++n) {
        std::vector<bool> is_major(static_cast<std::size_t>(C), false);
        for (int j = 0; j < n_major; ++j)
            is_major[static_cast<std::size_t>((n * n_major + j) % C)] = true;
        for (int c = 0; c < C; ++c) {
            const int want = is_major[static_cast<std::size_t>(c)] ? major_per : minor_per;
            auto& pool = pools[static_cast<std::size_t>(c)];
            for (int j = 0; j < want; ++j) {
                if (cursor[static_cast<std::size_t>(c)] < pool.size()) {
                    p.assignments[static_cast<std::size_t>(n)].push_back(
                        pool[cursor[static_cast<std::size_t>(c)]++]);
                } else if (allow_replacement && !pool.empty()) {
                    p.used_replacement = true;
                    p.assignments[static_cast<std::size_t>(n)].push_back(
                        pool[rng.uniform_index(pool.size())]);
                } else {
                    std::ostringstream oss;
                    oss << "partition_step: class " << c << " supply (" << pool.size()
                        << ") exhausted while serving client " << n
                        << " and replacement is disabled";
                    throw CapacityError(oss.str());
                }
            }
        }
    }
    {
        std::ostringstream oss;
        oss << "scheme=step n_major=" << n_major << " major_per=" << major_per
            << " minor_per=" << minor_per << " n_clients=" << n_clients
            << " replacement=" << (p.used_replacement ? "used" : "unused");
        p.params = oss.str();
    }
    for (auto& a : p.assignments) std::sort(a.begin(), a.end());
    return p;
}

Dataset inject_noise(const Dataset& ds, double epsilon, NoiseMode mode,
                     std::uint64_t seed) {
    validate_dataset(ds, "inject_noise");
    if (epsilon < 0.0) throw ArgumentError("inject_noise needs epsilon >= 0");
    if (mode == NoiseMode::label_flip && epsilon > 1.0)
        throw ArgumentError("inject_noise label_flip needs epsilon <= 1");
    Dataset out = ds;
    if (epsilon == 0.0) return out;
    Rng rng(SeedPath(seed, {num::purpose::noise}));
    if (mode == NoiseMode::feature_gauss) {
        for (auto& x : out.features)
            for (double& v : x.v)
                v = std::clamp(v + epsilon * rng.normal(), 0.0, 1.0);
    } else {
        for (int& y : out.labels) {
            if (rng.uniform() < epsilon && ds.n_classes > 1) {
                auto r = rng.uniform_index(static_cast<std::size_t>(ds.n_classes - 1));
                const int flipped = static_cast<int>(r) >= y ? static_cast<int>(r) + 1
                                                             : static_cast<int>(r);
                y = flipped;
            }
        }
    }
    return out;
}

Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
    validate_dataset(ds, "subsample");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ArgumentError("subsample needs 0 < fraction <= 1");
    Rng rng(SeedPath(seed, {num::purpose::subsample}));
    std::vector<std::size_t> keep;
    for (auto& class_idx : indices_by_class(ds)) {
        if (class_idx.empty()) continue;
        rng.shuffle(class_idx);
        const auto take = static_cast<std::size_t>(
            std::ceil(fraction * static_cast<double>(class_idx.size())));
        keep.insert(keep.end(), class_idx.begin(), class_idx.begin() + take);
    }
    std::sort(keep.begin(), keep.end());
    return ds.select(keep, ds.name);
}

ClientShards make_shards(const Dataset& client_samples, std::uint64_t seed) {
    validate_dataset(client_samples, "make_shards");
    const std::size_t n = client_samples.size();
    if (n < 10) throw ShardError("make_shards needs at least 10 samples");

    Rng rng(SeedPath(seed, {num::purpose::shards}));
    auto by_class = indices_by_class(client_samples);
    for (auto& idx : by_class) rng.shuffle(idx);

    std::vector<double> quota_test, quota_meta;
    std::vector<std::size_t> caps;
    for (const auto& idx : by_class) caps.push_back(idx.size());
    for (const auto& idx : by_class)
        quota_test.push_back(0.2 * static_cast<double>(idx.size()));
    const auto n_test = static_cast<std::size_t>(
        std::lround(0.2 * static_cast<double>(n)));
    const auto test_alloc = largest_remainder(quota_test, caps, n_test);

    std::vector<std::size_t> train_pool_count(by_class.size());
    for (std::size_t c = 0; c < by_class.size(); ++c)
        train_pool_count[c] = by_class[c].size() - test_alloc[c];
    std::size_t train_pool_total = 0;
    for (std::size_t c : train_pool_count) train_pool_total += c;
    for (std::size_t c = 0; c < by_class.size(); ++c)
        quota_meta.push_back(0.2 * static_cast<double>(train_pool_count[c]));
    const auto n_meta = static_cast<std::size_t>(
        std::lround(0.2 * static_cast<double>(train_pool_total)));
    const auto meta_alloc = largest_remainder(quota_meta, train_pool_count, n_meta);

    std::vector<std::size_t> test_idx, meta_idx, train_idx;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& idx = by_class[c];
        std::size_t k = 0;
        for (; k < test_alloc[c]; ++k) test_idx.push_back(idx[k]);
        for (; k < test_alloc[c] + meta_alloc[c]; ++k) meta_idx.push_back(idx[k]);
        for (; k < idx.size(); ++k) train_idx.push_back(idx[k]);
    }
    if (test_idx.empty() || meta_idx.empty() || train_idx.empty())
        throw ShardError("make_shards: too few samples to populate every shard");
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(meta_idx.begin(), meta_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    ClientShards shards;
    shards.train = client_samples.select(train_idx, client_samples.name + "/train");
    shards.meta = client_samples.select(meta_idx, client_samples.name + "/meta");
    shards.test = client_samples.select(test_idx, client_samples.name + "/test");
    return shards;
}

void write_manifest(const Partition& p, std::ostream& os) {
    os << "client_id,sample_index\n";
    for (std::size_t n = 0; n < p.assignments.size(); ++n)
        for (std::size_t i : p.assignments[n]) os << n << "," << i << "\n";
}

std::string manifest_string(const Partition& p) {
    std::ostringstream oss;
    write_manifest(p, oss);
    return oss.str();
}

std::vector<std::vector<std::size_t>> class_histogram(const Dataset& ds,
                                                      const Partition& p) {
    std::vector<std::vector<std::size_t>> hist(
        p.assignments.size(),
        std::vector<std::size_t>(static_cast<std::size_t>(ds.n_classes), 0));
    for (std::size_t n = 0; n < p.assignments.size(); ++n)
        for (std::size_t i : p.assignments[n])
            hist[n][static_cast<std::size_t>(ds.labels[i])]++;
    return hist;
}

} // namespace fedbayes::data
