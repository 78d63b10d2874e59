#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "fedbayes/errors.hpp"
#include "fedbayes/fedcore.hpp"
#include "fedbayes/serialize.hpp"

using namespace fedbayes;
using bnn::Mode;
using bnn::VariationalNet;
using num::Rng;
using num::SeedPath;

namespace {
VariationalNet random_net(std::uint64_t seed, Mode mode) {
    Rng rng{SeedPath(seed, {num::purpose::init})};
    const std::vector<std::size_t> dims{2 + rng.uniform_index(4), 1 + rng.uniform_index(6),
                                        2 + rng.uniform_index(4)};
    VariationalNet net = VariationalNet::mlp(dims, mode, rng, 0.05 + rng.uniform());
    for (auto& l : net.layers) {
        for (double& r : l.rho_W.v) r += rng.normal();
        for (double& r : l.rho_b.v) r += rng.normal();
    }
    return net;
}

bool nets_identical(const VariationalNet& a, const VariationalNet& b) {
    if (a.mode != b.mode || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!(a.layers[l].mu_W == b.layers[l].mu_W)) return false;
        if (!(a.layers[l].rho_W == b.layers[l].rho_W)) return false;
        if (!(a.layers[l].mu_b == b.layers[l].mu_b)) return false;
        if (!(a.layers[l].rho_b == b.layers[l].rho_b)) return false;
    }
    return true;
}
} // namespace

TEST_CASE("binary container round-trips random nets exactly") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const VariationalNet net =
            random_net(seed, seed % 2 ? Mode::bayesian : Mode::deterministic);
        std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
        bnn::save_net(net, ss);
        const VariationalNet back = bnn::load_net(ss);
        CHECK(nets_identical(net, back));
    }
}

TEST_CASE("textual container round-trips exactly") {
    for (std::uint64_t seed = 11; seed <= 16; ++seed) {
        const VariationalNet net = random_net(seed, Mode::bayesian);
        std::stringstream ss;
        bnn::save_net_text(net, ss);
        const VariationalNet back = bnn::load_net_text(ss);
        CHECK(nets_identical(net, back)); // %.17g is bit-exact for doubles
    }
}

TEST_CASE("binary and text forms agree") {
    const VariationalNet net = random_net(21, Mode::bayesian);
    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    bnn::save_net(net, bin);
    std::stringstream txt;
    bnn::save_net_text(net, txt);
    CHECK(nets_identical(bnn::load_net(bin), bnn::load_net_text(txt)));
}

TEST_CASE("bad magic is rejected") {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    ss.write("nope nope nope", 14);
    CHECK_THROWS_AS(bnn::load_net(ss), FormatError);

    std::stringstream ts;
    ts << "what 1 bayesian 1\n";
    CHECK_THROWS_AS(bnn::load_net_text(ts), FormatError);
}

TEST_CASE("truncated container is rejected") {
    const VariationalNet net = random_net(22, Mode::bayesian);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    bnn::save_net(net, ss);
    const std::string full = ss.str();
    for (std::size_t cut : {5UL, 11UL, full.size() / 2, full.size() - 3}) {
        std::stringstream trunc(std::ios::in | std::ios::out | std::ios::binary);
        trunc.write(full.data(), static_cast<std::streamsize>(cut));
        CHECK_THROWS_AS(bnn::load_net(trunc), FormatError);
    }
}

TEST_CASE("checkpoint carries the round counter") {
    fed::GlobalModel gm;
    gm.net = random_net(23, Mode::bayesian);
    gm.round = 17;
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    fed::save_checkpoint(gm, ss);
    const fed::GlobalModel back = fed::load_checkpoint(ss);
    CHECK(back.round == 17);
    CHECK(nets_identical(gm.net, back.net));

    std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
    bad.write("FBXX", 4);
    CHECK_THROWS_AS(fed::load_checkpoint(bad), FormatError);
}
