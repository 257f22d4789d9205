#include <doctest.h>

#include "fixtures.hpp"
#include "oracles/jacobi.hpp"
#include "trait_probe/errors.hpp"
#include "trait_probe/pca.hpp"
#include "trait_probe/util.hpp"

#include <cmath>

using namespace trait_probe;

namespace {

MatrixXd random_rows(int n, int d, std::uint64_t seed)
{
    Rng rng(seed);
    MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    // Unequal column scales keep the spectrum well separated.
    for (int j = 0; j < d; ++j) m.col(j) *= 1.0 + 0.7 * j;
    return m;
}

oracle::Mat to_rows(const MatrixXd& m)
{
    oracle::Mat r(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) r[i].assign(m.row(i).data(), m.row(i).data() + m.cols());
    return r;
}

void check_against_jacobi(int n, int d, int k, std::uint64_t seed)
{
    const auto x = random_rows(n, d, seed);
    const auto model = fit_pca(x, k);
    const auto want = oracle::jacobi(oracle::covariance(to_rows(x)));
    REQUIRE(model.output_dim() == k);
    for (int i = 0; i < k; ++i) {
        CHECK(std::abs(model.eigenvalues(i) - want.values[i]) < 1e-6);
        for (int j = 0; j < d; ++j) CHECK(std::abs(model.basis(i, j) - want.vectors[i][j]) < 1e-6);
    }
}

} // namespace

TEST_SUITE_BEGIN("pca");

TEST_CASE("single varying axis")
{
    MatrixXd x = MatrixXd::Constant(6, 4, 2.0);
    x.col(0) << 1, 2, 4, 8, 16, 32;
    const auto m = fit_pca(x, 1);
    const double mean = 63.0 / 6;
    double var = 0;
    for (int i = 0; i < 6; ++i) var += (x(i, 0) - mean) * (x(i, 0) - mean);
    var /= 5;
    CHECK(m.eigenvalues(0) == doctest::Approx(var));
    CHECK(m.basis(0, 0) == doctest::Approx(1.0));
    CHECK(m.basis.row(0).tail(3).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.mean(1) == doctest::Approx(2.0));
}

TEST_CASE("matches the Jacobi oracle")
{
    check_against_jacobi(10, 5, 3, 1);
    check_against_jacobi(10, 5, 5, 2);
    check_against_jacobi(50, 8, 8, 3);
}

TEST_CASE("full rank projection is an isometry and inverts")
{
    const auto x = random_rows(30, 6, 4);
    const auto m = fit_pca(x, 6);
    const auto y = project(m, x);
    for (int a = 0; a < 30; a += 7)
        for (int b = a + 1; b < 30; b += 5)
            CHECK(std::abs((x.row(a) - x.row(b)).norm() - (y.row(a) - y.row(b)).norm()) < 1e-5);
    CHECK((reconstruct(m, y) - x).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(project(m, MatrixXd(m.mean.transpose())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projected variance equals the retained eigenvalues")
{
    const auto x = random_rows(40, 7, 5);
    const auto want = oracle::jacobi(oracle::covariance(to_rows(x)));
    for (int k = 1; k <= 7; ++k) {
        const auto y = project(fit_pca(x, k), x);
        const MatrixXd c = y.rowwise() - y.colwise().mean();
        const double total = c.squaredNorm() / 39.0;
        double top = 0;
        for (int i = 0; i < k; ++i) top += want.values[i];
        CHECK(std::abs(total - top) <= 1e-5 * top);
    }
}

TEST_CASE("rank deficient data is fine, bad k is not")
{
    MatrixXd x = random_rows(12, 4, 6);
    x.col(3) = x.col(0) + x.col(1);
    const auto m = fit_pca(x, 4);
    CHECK(m.eigenvalues(3) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(m.eigenvalues.minCoeff() >= 0.0);
    CHECK_THROWS_AS(fit_pca(x, 0), InvalidK);
    CHECK_THROWS_AS(fit_pca(x, 5), InvalidK);
    CHECK_THROWS_AS(fit_pca(random_rows(3, 5, 1), 3), InvalidK);
    CHECK_THROWS_AS(project(m, MatrixXd(MatrixXd::Zero(2, 3))), ShapeMismatch);
}

TEST_CASE("utterance fit matches the stacked fit")
{
    std::vector<MatrixXf> utts;
    MatrixXd stacked(0, 5);
    for (int u = 0; u < 4; ++u) {
        MatrixXd part = random_rows(6 + u, 5, 10 + static_cast<std::uint64_t>(u));
        utts.push_back(part.cast<float>());
        MatrixXd grown(stacked.rows() + part.rows(), 5);
        grown << stacked, part.cast<float>().cast<double>();
        stacked = grown;
    }
    const auto a = fit_pca(utts, 3, 1);
    const auto b = fit_pca(stacked, 3);
    CHECK((a.basis - b.basis).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(a.fitted_on.n_frames == stacked.rows());

    const auto sub = fit_pca(utts, 3, 1, 20);
    CHECK(sub.fitted_on.n_frames == 20);
    CHECK((fit_pca(utts, 3, 1, 20).basis - sub.basis).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sweep dimensions")
{
    const auto d = pca_sweep_dims(768);
    CHECK(d.dims == std::vector<int>{512, 448, 384, 320, 256, 192, 128, 64, 32});
    CHECK_FALSE(d.truncated);
    CHECK(pca_sweep_dims(1024).dims.size() == 9);
    const auto small = pca_sweep_dims(200);
    CHECK(small.truncated);
    CHECK(small.dims == std::vector<int>{192, 128, 64, 32});
    CHECK_FALSE(small.warning.empty());
}

TEST_CASE("truncation and file round trip")
{
    const auto m = fit_pca(random_rows(20, 6, 8), 5);
    const auto t = m.truncated(2);
    CHECK(t.output_dim() == 2);
    CHECK(t.basis == m.basis.topRows(2));
    fixtures::TempDir dir("pca_file");
    save_pca(m, dir / "p.tppc");
    const auto back = load_pca(dir / "p.tppc");
    CHECK(back.basis == m.basis);
    CHECK(back.mean == m.mean);
    CHECK(back.eigenvalues == m.eigenvalues);
    auto bytes = encode_pca(m);
    bytes[20] ^= 1;
    CHECK_THROWS_AS(decode_pca(bytes), ChecksumMismatch);
}

TEST_SUITE_END();
