#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedbayes/data.hpp"
#include "fedbayes/errors.hpp"
#include "fedbayes/rng.hpp"

using namespace fedbayes;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("fedbayes_" + name);
}

void write_u32be(std::ofstream& os, std::uint32_t v) {
    const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

// 3 images of 2x2 pixels with labels 0,1,2
void write_idx_fixture(const fs::path& images, const fs::path& labels,
                       std::uint32_t image_magic = 0x00000803,
                       std::uint32_t n_labels = 3) {
    std::ofstream img(images, std::ios::binary);
    write_u32be(img, image_magic);
    write_u32be(img, 3);
    write_u32be(img, 2);
    write_u32be(img, 2);
    for (int i = 0; i < 12; ++i) img.put(static_cast<char>(i * 20));
    img.close();
    std::ofstream lab(labels, std::ios::binary);
    write_u32be(lab, 0x00000801);
    write_u32be(lab, n_labels);
    for (std::uint32_t i = 0; i < n_labels; ++i) lab.put(static_cast<char>(i));
}

void check_partition_laws(const data::Partition& p, std::size_t n_samples) {
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& a : p.assignments) {
        CHECK(!a.empty());
        total += a.size();
        for (std::size_t i : a) {
            CHECK(i < n_samples);
            CHECK(seen.insert(i).second); // disjoint
        }
    }
    CHECK(total == seen.size());
}

} // namespace

TEST_CASE("load_idx round-trips a hand-built fixture") {
    const auto images = temp_file("idx_images_ok");
    const auto labels = temp_file("idx_labels_ok");
    write_idx_fixture(images, labels);
    const data::Dataset ds = data::load_idx(images.string(), labels.string());
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 4);
    CHECK(ds.labels == std::vector<int>{0, 1, 2});
    CHECK(ds.n_classes == 3);
    CHECK(ds.features[0][1] == doctest::Approx(20.0 / 255.0));
    for (const auto& x : ds.features)
        for (double v : x.v) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    fs::remove(images);
    fs::remove(labels);
}

TEST_CASE("load_idx rejects count mismatches") {
    const auto images = temp_file("idx_images_cnt");
    const auto labels = temp_file("idx_labels_cnt");
    write_idx_fixture(images, labels, 0x00000803, 2);
    CHECK_THROWS_AS(data::load_idx(images.string(), labels.string()), FormatError);
    fs::remove(images);
    fs::remove(labels);
}

TEST_CASE("load_idx names the expected magic") {
    const auto images = temp_file("idx_images_magic");
    const auto labels = temp_file("idx_labels_magic");
    write_idx_fixture(images, labels, 0x00000000);
    try {
        data::load_idx(images.string(), labels.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("0x00000803") != std::string::npos);
    }
    fs::remove(images);
    fs::remove(labels);
}

TEST_CASE("load_csv basics") {
    const auto path = temp_file("csv_ok.csv");
    {
        std::ofstream os(path);
        os << "0,1.0,2.0\n1,3.0,4.0\n";
    }
    const data::Dataset ds = data::load_csv(path.string(), 2);
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 2);
    CHECK(ds.features[1][0] == 3.0);
    fs::remove(path);
}

TEST_CASE("load_csv rejects bad labels with line numbers") {
    const auto path = temp_file("csv_badlabel.csv");
    {
        std::ofstream os(path);
        os << "2,1.0,2.0\n";
    }
    try {
        data::load_csv(path.string(), 2);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("load_csv rejects ragged rows and empty files") {
    const auto ragged = temp_file("csv_ragged.csv");
    {
        std::ofstream os(ragged);
        os << "0,1.0,2.0\n1,3.0\n";
    }
    CHECK_THROWS_AS(data::load_csv(ragged.string(), 2), ParseError);
    fs::remove(ragged);

    const auto empty = temp_file("csv_empty.csv");
    { std::ofstream os(empty); }
    CHECK_THROWS_AS(data::load_csv(empty.string(), 2), ParseError);
    fs::remove(empty);
}

TEST_CASE("synth_blobs counts and determinism") {
    const data::Dataset ds = data::synth_blobs(2, 3, 10, 0.2, 5);
    CHECK(ds.size() == 20);
    const auto counts = ds.class_counts();
    CHECK(counts[0] == 10);
    CHECK(counts[1] == 10);
    for (const auto& x : ds.features)
        for (double v : x.v) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }

    const data::Dataset again = data::synth_blobs(2, 3, 10, 0.2, 5);
    CHECK(ds.features == again.features);
    CHECK(ds.labels == again.labels);
    const data::Dataset other = data::synth_blobs(2, 3, 10, 0.2, 6);
    CHECK(ds.features != other.features);
}

TEST_CASE("synth_blobs separable limit: nearest-center accuracy 1.0") {
    const data::Dataset ds = data::synth_blobs(4, 6, 25, 1e-6, 7);
    std::vector<num::Tensor1> centers(4, num::Tensor1(ds.dim()));
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<std::size_t>(ds.labels[i]);
        for (std::size_t d = 0; d < ds.dim(); ++d) centers[c][d] += ds.features[i][d];
        counts[c]++;
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t d = 0; d < ds.dim(); ++d)
            centers[c][d] /= static_cast<double>(counts[c]);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 4; ++c) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < ds.dim(); ++d) {
                const double diff = ds.features[i][d] - centers[c][d];
                d2 += diff * diff;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = c;
            }
        }
        if (static_cast<int>(best) == ds.labels[i]) ++correct;
    }
    CHECK(correct == ds.size());
}

TEST_CASE("partition_dirichlet near-uniform at huge alpha") {
    const data::Dataset ds = data::synth_blobs(4, 2, 100, 0.3, 11);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = data::partition_dirichlet(ds, 5, 1e6, seed);
        check_partition_laws(p, ds.size());
        const auto hist = data::class_histogram(ds, p);
        for (const auto& client : hist)
            for (std::size_t c = 0; c < client.size(); ++c) {
                CHECK(client[c] >= 18); // 100/5 = 20 per class, +/- 2
                CHECK(client[c] <= 22);
            }
    }
}

TEST_CASE("partition_dirichlet at alpha 0.1: non-empty, unequal totals") {
    const data::Dataset ds = data::synth_blobs(10, 2, 200, 0.3, 13);
    const auto p = data::partition_dirichlet(ds, 5, 0.1, 17);
    check_partition_laws(p, ds.size());
    std::set<std::size_t> totals;
    for (const auto& a : p.assignments) totals.insert(a.size());
    CHECK(totals.size() > 1); // differing total amounts
}

TEST_CASE("partition_dirichlet coverage") {
    const data::Dataset ds = data::synth_blobs(3, 2, 50, 0.3, 19);
    const auto p = data::partition_dirichlet(ds, 4, 0.5, 23);
    std::size_t total = 0;
    for (const auto& a : p.assignments) total += a.size();
    CHECK(total == ds.size()); // union covers everything
    check_partition_laws(p, ds.size());
}

TEST_CASE("partition_dirichlet argument errors") {
    const data::Dataset ds = data::synth_blobs(2, 2, 2, 0.3, 1);
    CHECK_THROWS_AS(data::partition_dirichlet(ds, 1, 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(data::partition_dirichlet(ds, 2, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(data::partition_dirichlet(ds, 5, 0.1, 1), ArgumentError);
}

TEST_CASE("dirichlet concentration is monotone in alpha") {
    const data::Dataset ds = data::synth_blobs(5, 2, 80, 0.3, 29);
    const int n_clients = 4;
    const double uniform = 1.0 / 5.0;
    std::vector<double> mads;
    for (double alpha : {0.1, 1.0, 10.0, 1e6}) {
        double mad = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto p = data::partition_dirichlet(ds, n_clients, alpha, seed);
            const auto hist = data::class_histogram(ds, p);
            for (const auto& client : hist) {
                std::size_t total = 0;
                for (std::size_t c : client) total += c;
                for (std::size_t c : client)
                    mad += std::abs(static_cast<double>(c) / static_cast<double>(total) -
                                    uniform);
            }
        }
        mads.push_back(mad / (20.0 * n_clients * 5));
    }
    for (std::size_t i = 1; i < mads.size(); ++i) CHECK(mads[i] <= mads[i - 1]);
}

TEST_CASE("partition_step fills the two-major step quotas") {
    // 2 major classes x 1960 + 8 minor x 10 = 4000 per client
    const data::Dataset ds = data::synth_blobs(10, 2, 2000, 0.3, 31);
    const auto p = data::partition_step(ds, 5, 2, 1960, 10, 37);
    CHECK(!p.used_replacement);
    check_partition_laws(p, ds.size());
    const auto hist = data::class_histogram(ds, p);
    for (int n = 0; n < 5; ++n) {
        std::size_t total = 0;
        for (std::size_t c : hist[static_cast<std::size_t>(n)]) total += c;
        CHECK(total == 4000);
    }
}

TEST_CASE("partition_step rotation rule") {
    const data::Dataset ds = data::synth_blobs(4, 2, 50, 0.3, 41);
    const auto p = data::partition_step(ds, 2, 2, 20, 5, 43);
    const auto hist = data::class_histogram(ds, p);
    CHECK(hist[0][0] == 20);
    CHECK(hist[0][1] == 20);
    CHECK(hist[0][2] == 5);
    CHECK(hist[0][3] == 5);
    CHECK(hist[1][0] == 5);
    CHECK(hist[1][1] == 5);
    CHECK(hist[1][2] == 20);
    CHECK(hist[1][3] == 20);
}

TEST_CASE("partition_step degenerate IID case") {
    const data::Dataset ds = data::synth_blobs(4, 2, 60, 0.3, 47);
    const auto p = data::partition_step(ds, 3, 1, 12, 12, 53);
    const auto hist = data::class_histogram(ds, p);
    for (const auto& client : hist)
        for (std::size_t c : client) CHECK(c == 12);
}

TEST_CASE("partition_step capacity error names the class") {
    const data::Dataset ds = data::synth_blobs(4, 2, 10, 0.3, 59);
    try {
        data::partition_step(ds, 3, 2, 8, 1, 61, /*allow_replacement=*/false);
        FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
        CHECK(std::string(e.what()).find("class") != std::string::npos);
    }
    // with replacement allowed the same demand succeeds and is recorded
    const auto p = data::partition_step(ds, 3, 2, 8, 1, 61);
    CHECK(p.used_replacement);
    CHECK(p.params.find("replacement=used") != std::string::npos);
}

TEST_CASE("inject_noise epsilon zero is the identity") {
    const data::Dataset ds = data::synth_blobs(3, 4, 20, 0.3, 67);
    const auto noisy = data::inject_noise(ds, 0.0, data::NoiseMode::feature_gauss, 71);
    CHECK(ds.features == noisy.features);
    CHECK(ds.labels == noisy.labels);
}

TEST_CASE("inject_noise label_flip at one flips every label") {
    const data::Dataset ds = data::synth_blobs(4, 2, 50, 0.3, 73);
    const auto noisy = data::inject_noise(ds, 1.0, data::NoiseMode::label_flip, 79);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(noisy.labels[i] != ds.labels[i]);
        CHECK(noisy.labels[i] >= 0);
        CHECK(noisy.labels[i] < 4);
    }
}

TEST_CASE("inject_noise feature_gauss moment check") {
    // large flat dataset centered away from the clamp boundaries
    data::Dataset ds;
    ds.n_classes = 2;
    ds.name = "flat";
    for (int i = 0; i < 2500; ++i) {
        ds.features.push_back(num::Tensor1(4, 0.5));
        ds.labels.push_back(i % 2);
    }
    const double eps = 0.1;
    const auto noisy = data::inject_noise(ds, eps, data::NoiseMode::feature_gauss, 83);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t d = 0; d < 4; ++d) {
            const double delta = noisy.features[i][d] - 0.5;
            if (noisy.features[i][d] > 0.0 && noisy.features[i][d] < 1.0) {
                sq += delta * delta;
                ++n;
            }
        }
    CHECK(n >= 9000); // clamping at 5 sigma is rare
    const double std_dev = std::sqrt(sq / static_cast<double>(n));
    CHECK(std_dev >= 0.095);
    CHECK(std_dev <= 0.105);
}

TEST_CASE("inject_noise argument errors") {
    const data::Dataset ds = data::synth_blobs(2, 2, 5, 0.3, 89);
    CHECK_THROWS_AS(data::inject_noise(ds, -0.1, data::NoiseMode::feature_gauss, 1),
                    ArgumentError);
    CHECK_THROWS_AS(data::inject_noise(ds, 1.5, data::NoiseMode::label_flip, 1),
                    ArgumentError);
}

TEST_CASE("subsample stratified counts") {
    const data::Dataset ds = data::synth_blobs(2, 2, 50, 0.3, 97);
    const auto full = data::subsample(ds, 1.0, 101);
    CHECK(full.features == ds.features);
    CHECK(full.labels == ds.labels);

    const auto half = data::subsample(ds, 0.5, 101);
    const auto counts = half.class_counts();
    CHECK(counts[0] == 25);
    CHECK(counts[1] == 25);

    const auto a = data::subsample(ds, 0.1, 103);
    const auto b = data::subsample(ds, 0.1, 104);
    CHECK(a.features != b.features);
}

TEST_CASE("make_shards has the 64/16/20 split") {
    // distinct feature values make shard identity recoverable
    data::Dataset ds;
    ds.n_classes = 10;
    ds.name = "ids";
    for (int i = 0; i < 100; ++i) {
        ds.features.push_back(num::Tensor1(1, static_cast<double>(i)));
        ds.labels.push_back(i % 10);
    }
    const auto shards = data::make_shards(ds, 107);
    CHECK(shards.train.size() == 64);
    CHECK(shards.meta.size() == 16);
    CHECK(shards.test.size() == 20);

    std::set<double> seen;
    auto collect = [&](const data::Dataset& d) {
        for (const auto& x : d.features) CHECK(seen.insert(x[0]).second);
    };
    collect(shards.train);
    collect(shards.meta);
    collect(shards.test);
    CHECK(seen.size() == 100); // disjoint and covering

    const auto again = data::make_shards(ds, 107);
    CHECK(again.train.features == shards.train.features);
    CHECK(again.meta.features == shards.meta.features);
    CHECK(again.test.features == shards.test.features);
}

TEST_CASE("make_shards stratification within one sample per class") {
    const data::Dataset ds = data::synth_blobs(5, 2, 40, 0.3, 109);
    const auto shards = data::make_shards(ds, 113);
    const auto train_counts = shards.train.class_counts();
    const auto meta_counts = shards.meta.class_counts();
    const auto test_counts = shards.test.class_counts();
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(std::abs(static_cast<double>(test_counts[c]) - 0.2 * 40.0) <= 1.0);
        CHECK(std::abs(static_cast<double>(meta_counts[c]) - 0.16 * 40.0) <= 1.0);
        CHECK(std::abs(static_cast<double>(train_counts[c]) - 0.64 * 40.0) <= 1.0);
    }
}

TEST_CASE("make_shards needs ten samples") {
    const data::Dataset tiny = data::synth_blobs(2, 2, 4, 0.3, 127);
    CHECK_THROWS_AS(data::make_shards(tiny, 1), ShardError);
}

TEST_CASE("manifest lists every assignment") {
    const data::Dataset ds = data::synth_blobs(2, 2, 10, 0.3, 131);
    const auto p = data::partition_dirichlet(ds, 2, 1.0, 137);
    const std::string manifest = data::manifest_string(p);
    CHECK(manifest.rfind("client_id,sample_index\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : manifest)
        if (c == '\n') ++lines;
    CHECK(lines == 1 + ds.size());
}
