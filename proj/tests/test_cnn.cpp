#include <doctest.h>

#include "gradcheck.hpp"
#include "oracles/scalar_cnn.hpp"
#include "trait_probe/cnn.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/feature_store.hpp"
#include "trait_probe/util.hpp"

#include <cmath>
#include <numeric>

using namespace trait_probe;

namespace {

MatrixXd random_seq(Eigen::Index t, Eigen::Index d, Rng& rng)
{
    MatrixXd m(t, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

oracle::Seq to_seq(const MatrixXd& m) { return gradcheck::to_seq(m); }

ClassifierConfig tiny_config(int d, std::vector<int> channels, int classes)
{
    ClassifierConfig c;
    c.in_dim = d;
    c.conv_channels = std::move(channels);
    c.n_classes = classes;
    return c;
}

} // namespace

TEST_SUITE_BEGIN("cnn");

TEST_CASE("config validation")
{
    ClassifierConfig c;
    CHECK_THROWS_AS(c.validate(), InvariantViolation);
    c.in_dim = 26;
    CHECK_NOTHROW(c.validate());
    CHECK(c.head_in() == 256);
    c.kernel_size = 4;
    CHECK_THROWS_AS(c.validate(), InvariantViolation);
}

TEST_CASE("default probe parameter count")
{
    ClassifierConfig c;
    c.in_dim = 768;
    c.n_classes = 6;
    const CnnProbe<float> net(c, 1);
    const std::size_t expected = 5 * 768 * 64 + 2 * 64 + 5 * 64 * 128 + 2 * 128 + 5 * 128 * 256 + 2 * 256 +
                                 256 * 6 + 6;
    CHECK(net.params().count() == expected);
    const auto names = net.params().tensors();
    REQUIRE(names.size() == 11);
    CHECK(names[0].name == "conv1.weight");
    CHECK(names[10].name == "head.bias");
}

TEST_CASE("probabilities are normalized")
{
    Rng rng(3);
    const CnnProbe<double> net(tiny_config(26, {64, 128, 256}, 2), 5);
    std::vector<MatrixXd> items{random_seq(12, 26, rng), random_seq(7, 26, rng), random_seq(2, 26, rng)};
    const auto batch = SequenceBatch<double>::pack(items, 5);
    for (BnMode mode : {BnMode::train, BnMode::inference}) {
        const auto p = net.forward(batch, mode);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(p.maxCoeff() <= 1.0);
        for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-6);
    }
}

TEST_CASE("zero input gives uniform probabilities")
{
    const CnnProbe<float> net(tiny_config(26, {64, 128, 256}, 4), 9);
    const auto batch = SequenceBatch<float>::pack(std::vector<MatrixXf>{MatrixXf::Zero(10, 26)}, 5);
    const auto p = net.forward(batch, BnMode::inference);
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(p(0, k) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("hand-set tiny probe matches the scalar loop")
{
    CnnProbe<double> net(tiny_config(3, {2, 2, 2}, 3), 0);
    // Deterministic weights with mixed signs.
    int counter = 0;
    for (auto& t : net.params().tensors())
        for (double& v : t.values) v = 0.1 * std::sin(1.7 * ++counter) + (t.name.find("bn_gain") != std::string::npos);
    for (std::size_t b = 0; b < net.running_stats().size(); ++b) {
        net.running_stats()[b].mean << 0.05 * (b + 1), -0.1;
        net.running_stats()[b].var << 0.8, 1.3;
    }
    Rng rng(21);
    std::vector<MatrixXd> items{random_seq(8, 3, rng), random_seq(8, 3, rng)};
    const auto batch = SequenceBatch<double>::pack(items, 5);
    std::vector<oracle::Seq> seqs{to_seq(items[0]), to_seq(items[1])};
    const auto probe = gradcheck::to_oracle(net);
    for (bool train : {true, false}) {
        const auto got = net.forward(batch, train ? BnMode::train : BnMode::inference);
        const auto want = oracle::scalar_forward(probe, seqs, train);
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 3; ++k) CHECK(std::abs(got(i, k) - want[i][k]) < 1e-6);
    }

    // Ragged and too-short items take the padding path in both.
    std::vector<MatrixXd> ragged{random_seq(2, 3, rng), random_seq(11, 3, rng), random_seq(1, 3, rng)};
    const auto rb = SequenceBatch<double>::pack(ragged, 5);
    CHECK(rb.lengths == std::vector<int>{5, 11, 5});
    const auto got = net.forward(rb, BnMode::train);
    const auto want = oracle::scalar_forward(probe, {to_seq(ragged[0]), to_seq(ragged[1]), to_seq(ragged[2])}, true);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) CHECK(std::abs(got(i, k) - want[i][k]) < 1e-6);
}

TEST_CASE("loss extremes")
{
    CnnProbe<double> net(tiny_config(4, {8, 8, 8}, 11), 2);
    const auto batch = SequenceBatch<double>::pack(std::vector<MatrixXd>{MatrixXd::Zero(6, 4), MatrixXd::Zero(6, 4)}, 5);
    const std::vector<int> labels{3, 7};
    CHECK(net.loss(batch, labels) == doctest::Approx(std::log(11.0)).epsilon(1e-4));

    net.params().head_bias.setZero();
    net.params().head_bias(3) = 50.0;
    CHECK(net.loss(batch, std::vector<int>{3, 3}) < 1e-3);
}

TEST_CASE("shape errors")
{
    const CnnProbe<float> net(tiny_config(26, {4, 4, 4}, 2), 1);
    const auto batch = SequenceBatch<float>::pack(std::vector<MatrixXf>{MatrixXf::Zero(6, 25)}, 5);
    CHECK_THROWS_AS(net.forward(batch, BnMode::train), ShapeMismatch);
    std::vector<MatrixXf> mixed{MatrixXf::Zero(6, 26), MatrixXf::Zero(6, 25)};
    CHECK_THROWS_AS(SequenceBatch<float>::pack(mixed, 5), ShapeMismatch);
    const auto ok = SequenceBatch<float>::pack(std::vector<MatrixXf>{MatrixXf::Zero(6, 26)}, 5);
    CHECK_THROWS_AS(net.loss(ok, std::vector<int>{2}), ShapeMismatch);
}

TEST_CASE("every gradient component matches finite differences on a reduced probe")
{
    for (std::uint64_t seed : {1u, 2u}) {
        CnnProbe<double> net(tiny_config(3, {4, 6, 8}, 3), seed);
        Rng rng(seed + 100);
        for (auto& t : net.params().tensors())
            if (t.name.find("bn_") != std::string::npos)
                for (double& v : t.values) v += 0.3 * rng.normal();
        std::vector<MatrixXd> items{random_seq(6, 3, rng), random_seq(4, 3, rng), random_seq(7, 3, rng)};
        const auto batch = SequenceBatch<double>::pack(items, 5);
        const auto worst = gradcheck::check(net, batch, {0, 2, 1}, 1e-3, ~std::size_t{0}, 0, seed);
        INFO(worst.tensor, "[", worst.index, "] analytic=", worst.analytic, " numeric=", worst.numeric);
        CHECK(worst.checked == net.params().count());
        CHECK(worst.rel < 1e-3);
    }
}

TEST_CASE("batch statistics feed the running averages")
{
    CnnProbe<double> net(tiny_config(3, {2, 2, 2}, 2), 4);
    Rng rng(8);
    const auto batch = SequenceBatch<double>::pack(std::vector<MatrixXd>{random_seq(9, 3, rng)}, 5);
    const auto lg = net.loss_and_grad(batch, std::vector<int>{1});
    REQUIRE(lg.batch_stats.size() == 3);
    net.update_running_stats(lg.batch_stats);
    const auto& r = net.running_stats()[0];
    CHECK((r.mean - 0.1 * lg.batch_stats[0].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.var - (0.9 * VectorXd::Ones(2) + 0.1 * lg.batch_stats[0].var)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("float and double agree and checksums are stable")
{
    const CnnProbe<float> f(tiny_config(26, {16, 16, 16}, 3), 77);
    const CnnProbe<float> g(tiny_config(26, {16, 16, 16}, 3), 77);
    CHECK(f.checksum() == g.checksum());
    CHECK(f.checksum() != CnnProbe<float>(tiny_config(26, {16, 16, 16}, 3), 78).checksum());
    const auto d = f.cast<double>();
    Rng rng(1);
    const MatrixXd x = random_seq(9, 26, rng);
    const auto pf = f.forward(SequenceBatch<float>::pack(std::vector<MatrixXd>{x}, 5), BnMode::inference);
    const auto pd = d.forward(SequenceBatch<double>::pack(std::vector<MatrixXd>{x}, 5), BnMode::inference);
    CHECK((pf.cast<double>() - pd).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("predict picks the argmax and handles one-frame input")
{
    CnnProbe<float> net(tiny_config(26, {8, 8, 8}, 3), 5);
    Rng rng(2);
    MatrixXf one(1, 26);
    for (Eigen::Index i = 0; i < one.size(); ++i) one.data()[i] = static_cast<float>(rng.normal());
    const auto p = predict(net, one);
    REQUIRE(p.probabilities.size() == 3);
    CHECK(p.label == std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());

    // Scaling the head scales logits; argmax is unchanged.
    const auto before = predict(net, make_mfcc_features("u", one));
    net.params().head_weight *= 3.0f;
    net.params().head_bias *= 3.0f;
    CHECK(predict(net, one).label == before.label);
    CHECK_THROWS_AS(predict(net, MatrixXf::Zero(4, 25)), ShapeMismatch);
}

TEST_SUITE_END();
