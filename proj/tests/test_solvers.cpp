#include "doctest.h"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "metainv/analytic.hpp"
#include "metainv/metrics.hpp"
#include "metainv/rng.hpp"
#include "metainv/simulate.hpp"
#include "metainv/solvers.hpp"
#include "test_helpers.hpp"

using namespace metainv;
using namespace metainv::testing;

namespace {

// Test-only dense SPD system: A = M^T M + ridge*I. The default ridge keeps
// the condition number below ~6, where CG residual norms decay monotonically
// with a wide margin.
Tensor random_spd(std::size_t dim, std::uint64_t seed, double ridge = 5.0) {
    Tensor m = random_tensor({dim, dim}, seed);
    Tensor a({dim, dim});
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) acc += m.at(k, i) * m.at(k, j);
            a.at(i, j) = acc + (i == j ? ridge : 0.0);
        }
    return a;
}

// Gaussian elimination with partial pivoting; the direct-solve oracle.
Tensor direct_solve(Tensor a, Tensor b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a.at(col, c), a.at(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a.at(r, col) / a.at(col, col);
            for (std::size_t c = col; c < n; ++c) a.at(r, c) -= f * a.at(col, c);
            b[r] -= f * b[col];
        }
    }
    Tensor x({n});
    for (std::size_t r = n; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < n; ++c) acc -= a.at(r, c) * x[c];
        x[r] = acc / a.at(r, r);
    }
    return x;
}

auto matvec(const Tensor& a) {
    return [&a](const Tensor& x) {
        const std::size_t n = x.size();
        Tensor y({n});
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c) acc += a.at(r, c) * x[c];
            y[r] = acc;
        }
        return y;
    };
}

} // namespace

TEST_CASE("schedule reproduces the stated constants and clamps") {
    HqsParams p;
    auto [l0, g0] = schedule(p, 0);
    CHECK(l0 == doctest::Approx(0.005));
    CHECK(g0 == doctest::Approx(0.01));

    const double want_lambda[] = {0.0042, 0.0034, 0.0026, 0.0018, 0.0010};
    for (std::size_t k = 1; k <= 5; ++k) {
        auto [lk, gk] = schedule(p, k);
        CHECK(lk == doctest::Approx(want_lambda[k - 1]).epsilon(1e-12));
        // 0.01 - k*0.02 < 0: the gamma floor takes over from k=1 on.
        CHECK(gk == doctest::Approx(p.gamma_floor));
    }
}

TEST_CASE("layer thresholds: ratio vs direct parameterization") {
    HqsParams p;
    Tensor ratio = layer_thresholds(p, 0);
    CHECK(ratio[0] == doctest::Approx(0.005 / 0.01));
    p.threshold_mode = HqsParams::ThresholdMode::Direct;
    Tensor direct = layer_thresholds(p, 0);
    CHECK(direct[0] == doctest::Approx(0.005));
}

TEST_CASE("soft threshold: direct formula cases") {
    Tensor c({8, 2, 2});
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.1 * static_cast<double>(i) - 1.5;
    Tensor same = soft_threshold_channels(c, Tensor::scalar(0.0));
    CHECK(max_abs_diff(same, c) == 0.0);

    Tensor vals({8, 1, 1}, {1.2, -0.3, -0.9, 0.0, 0.5, -0.5, 2.0, -2.0});
    Tensor out = soft_threshold_channels(vals, Tensor::scalar(0.5));
    CHECK(out[0] == doctest::Approx(0.7));
    CHECK(out[1] == 0.0);
    CHECK(out[2] == doctest::Approx(-0.4));
    CHECK(out[3] == 0.0);
    CHECK(out[4] == 0.0);
    CHECK(out[5] == 0.0);
    CHECK(out[6] == doctest::Approx(1.5));
    CHECK(out[7] == doctest::Approx(-1.5));

    CHECK_THROWS_AS(soft_threshold_channels(vals, Tensor::scalar(-0.1)), std::invalid_argument);
}

TEST_CASE("soft threshold equals the brute-force prox of the l1 norm") {
    CounterRng rng(42, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const double lambda = rng.uniform(0.0, 1.0);
        const double x = rng.uniform(-2.5, 2.5);
        // Grid search of argmin_z lambda|z| + (z-x)^2/2 over [-3,3].
        double best_z = -3.0, best_f = 1e300;
        for (double z = -3.0; z <= 3.0 + 1e-12; z += 1e-4) {
            const double f = lambda * std::abs(z) + 0.5 * (z - x) * (z - x);
            if (f < best_f) {
                best_f = f;
                best_z = z;
            }
        }
        Tensor one({8, 1, 1});
        for (std::size_t c = 0; c < 8; ++c) one[c] = x;
        Tensor got = soft_threshold_channels(one, Tensor::scalar(lambda));
        CHECK(std::abs(got[0] - best_z) <= 1e-4);
    }
}

TEST_CASE("soft threshold is nonexpansive") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Tensor x = random_tensor({8, 4, 4}, 1300 + s, -2.0, 2.0);
        Tensor y = random_tensor({8, 4, 4}, 1400 + s, -2.0, 2.0);
        Tensor tx = soft_threshold_channels(x, Tensor::scalar(0.3));
        Tensor ty = soft_threshold_channels(y, Tensor::scalar(0.3));
        CHECK(norm2(tx - ty) <= norm2(x - y) + 1e-12);
    }
}

TEST_CASE("cg_solve: identity system converges in one iteration") {
    Tensor b = random_tensor({9}, 1500);
    CgResult res = cg_solve([](const Tensor& x) { return x; }, b, Tensor({9}), 5, 1e-14);
    CHECK(res.iterations <= 2);
    CHECK(max_abs_diff(res.x, b) < 1e-14);
}

TEST_CASE("cg_solve: exact starting point returns unchanged after zero productive iterations") {
    Tensor a = random_spd(8, 1600);
    Tensor x_exact = random_tensor({8}, 1601);
    Tensor b = matvec(a)(x_exact);
    CgResult res = cg_solve(matvec(a), b, x_exact, 8, 0.0);
    CHECK(res.iterations == 0);
    CHECK(std::memcmp(res.x.data(), x_exact.data(), sizeof(double) * 8) == 0);
}

TEST_CASE("cg_solve matches the direct dense solve with monotone residuals") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const std::size_t dim = 4 + s % 13;  // 4..16
        Tensor a = random_spd(dim, 1700 + s);
        Tensor b = random_tensor({dim}, 1800 + s);
        CgResult res = cg_solve(matvec(a), b, Tensor({dim}), dim, 0.0, /*early_stop=*/false);
        Tensor want = direct_solve(a, b);
        CHECK(norm2(res.x - want) / norm2(want) < 1e-8);
        for (std::size_t i = 1; i < res.residual_norms.size(); ++i)
            CHECK(res.residual_norms[i] <= res.residual_norms[i - 1] * (1.0 + 1e-12));
    }
}

TEST_CASE("cg_solve flags non-finite operators") {
    auto broken = [](const Tensor& x) {
        Tensor y = x;
        y[0] = std::nan("");
        return y;
    };
    CHECK_THROWS_AS(cg_solve(broken, Tensor::full({4}, 1.0), Tensor({4}), 4, 0.0), std::runtime_error);
}

TEST_CASE("hqs_cg: zero sinogram is a fixed point at zero") {
    ScanGeometry g = make_geometry(Beam::Parallel, 12, 24, {16, 1.0});
    HqsParams p;
    p.K = 4;
    Image rec = hqs_cg(Sinogram(12, 24), g, p);
    for (double v : rec.data.span()) CHECK(v == 0.0);
}

TEST_CASE("hqs_cg beats its FBP initialization on sparse views") {
    const std::size_t n = 32;
    Image ph = shepp_logan(n);
    ScanGeometry g = make_geometry(Beam::Parallel, 24, 48, {n, 1.0});
    Sinogram y = forward_project(ph, g);
    const double fbp_psnr = psnr(fbp(y, g).data, ph.data);
    HqsParams p;
    p.L = 10;
    p.K = 40;
    Image rec = hqs_cg(y, g, p);
    CHECK(psnr(rec.data, ph.data) > fbp_psnr);
}

TEST_CASE("hqs_cg objective decreases monotonically with near-exact inner solves") {
    const std::size_t n = 32;
    Image ph = shepp_logan(n);
    ScanGeometry g = make_geometry(Beam::Parallel, 24, 48, {n, 1.0});
    Sinogram y = forward_project(ph, g);
    HqsParams p;
    p.L = 80;
    p.K = 8;
    p.rel_tol = 0.0;
    p.d_lambda = 0.0;  // fixed objective
    p.d_gamma = 0.0;
    const Tensor gammas = Tensor::full({8}, p.gamma0);
    std::vector<double> objs;
    hqs_cg(y, g, p, [&](std::size_t, const Tensor& u, const Tensor& z) {
        objs.push_back(hqs_objective(y, g, u, z, p.lambda0, gammas));
    });
    REQUIRE(objs.size() == 8);
    for (std::size_t i = 1; i < objs.size(); ++i) CHECK(objs[i] <= objs[i - 1] + 1e-8);
}

TEST_CASE("hqs_cg is reproducible bit for bit") {
    const std::size_t n = 24;
    Image ph = random_phantom(n, 5);
    ScanGeometry g = make_geometry(Beam::Fan, 16, 36, {n, 1.0});
    NoiseSpec ns;
    ns.i0 = 1e6;
    ns.seed = 2;
    Sinogram y = simulate_sinogram(ph, g, ns);
    HqsParams p;
    p.K = 6;
    p.rel_tol = 0.0;
    Image a = hqs_cg(y, g, p);
    Image b = hqs_cg(y, g, p);
    CHECK(std::memcmp(a.data.data(), b.data.data(), sizeof(double) * a.data.size()) == 0);
}

TEST_CASE("HqsParams validation") {
    HqsParams p;
    p.lambda0 = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = HqsParams{};
    p.K = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = HqsParams{};
    p.gamma_floor = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
