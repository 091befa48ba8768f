#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <psrg/psrg.hpp>

#include "oracles.hpp"

using psrg::Rng;
using psrg::Tensor;

namespace {

Tensor random_image(const psrg::Shape& shape, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Rng rng(seed);
    return Tensor::rand_uniform(shape, rng, lo, hi);
}

Tensor checkerboard(int64_t size, int64_t cell) {
    Tensor img({1, size, size}, 0.0f);
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x)
            img.at({0, y, x}) = ((y / cell + x / cell) % 2 == 0) ? 1.0f : 0.0f;
    return img;
}

}  // namespace

TEST_CASE("psnr: identity cap and the 0.1-offset pin", "[metrics][psnr]") {
    auto a = random_image({1, 8, 8}, 801);
    REQUIRE(psrg::psnr(a, a) == 100.0);

    Tensor zeros({1, 16, 16}, 0.0f);
    Tensor tenth({1, 16, 16}, 0.1f);
    REQUIRE(std::fabs(psrg::psnr(zeros, tenth) - 20.0) < 1e-6);

    REQUIRE_THROWS_AS(psrg::psnr(a, Tensor({1, 8, 9}, 0.0f)), psrg::ShapeError);
}

TEST_CASE("psnr: matches the oracle and decreases with error", "[metrics][psnr][oracle]") {
    auto a = random_image({3, 10, 10}, 809);
    auto b = random_image({3, 10, 10}, 811);
    REQUIRE(std::fabs(psrg::psnr(a, b) - oracle::psnr(a, b)) < 1e-6);
    REQUIRE(std::fabs(psrg::psnr(a, b, 255.0) - oracle::psnr(a, b, 255.0)) < 1e-6);

    auto close = psrg::add_scalar(a, 0.05f).detach();
    auto far = psrg::add_scalar(a, 0.2f).detach();
    REQUIRE(psrg::psnr(a, close) > psrg::psnr(a, far));
}

TEST_CASE("ssim: self-comparison is exactly one", "[metrics][ssim]") {
    auto a = random_image({1, 16, 16}, 821);
    REQUIRE(std::fabs(psrg::ssim(a, a) - 1.0) < 1e-9);
}

TEST_CASE("ssim: argument order does not change a bit", "[metrics][ssim]") {
    auto a = random_image({1, 20, 20}, 823);
    auto b = random_image({1, 20, 20}, 827);
    REQUIRE(psrg::ssim(a, b) == psrg::ssim(b, a));
}

TEST_CASE("ssim: inverted binary image scores negative", "[metrics][ssim]") {
    auto a = checkerboard(16, 2);
    auto b = psrg::rsub_scalar(1.0f, a).detach();
    REQUIRE(psrg::ssim(a, b) < 0.0);
}

TEST_CASE("ssim: matches the mean-subtracted sliding-window oracle", "[metrics][ssim][oracle]") {
    auto a = random_image({1, 32, 32}, 829);
    auto b = random_image({1, 32, 32}, 839);
    REQUIRE(std::fabs(psrg::ssim(a, b) - oracle::ssim(a, b)) < 1e-4);

    auto blurred = psrg::gaussian_blur(a, 1.0f);
    REQUIRE(std::fabs(psrg::ssim(a, blurred) - oracle::ssim(a, blurred)) < 1e-4);
}

TEST_CASE("ssim: planes average and window contract", "[metrics][ssim]") {
    auto plane = random_image({1, 12, 12}, 853);
    Tensor stacked({3, 12, 12}, 0.0f);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 144; ++i) stacked[c * 144 + i] = plane[i];
    REQUIRE(std::fabs(psrg::ssim(stacked, stacked) - 1.0) < 1e-9);
    auto other = random_image({1, 12, 12}, 857);
    Tensor stacked_b({3, 12, 12}, 0.0f);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 144; ++i) stacked_b[c * 144 + i] = other[i];
    REQUIRE(std::fabs(psrg::ssim(stacked, stacked_b) - psrg::ssim(plane, other)) < 1e-12);

    REQUIRE_THROWS_AS(psrg::ssim(Tensor({1, 10, 10}, 0.0f), Tensor({1, 10, 10}, 0.0f)),
                      psrg::ShapeError);
}

TEST_CASE("s3: constant image has zero sharpness", "[metrics][s3]") {
    Tensor flat({1, 32, 32}, 0.4f);
    REQUIRE(psrg::s3_sharpness(flat) == 0.0);
}

TEST_CASE("s3: sharp beats blurred", "[metrics][s3]") {
    auto sharp = checkerboard(64, 2);
    auto blurred = psrg::gaussian_blur(sharp, 2.0f);
    REQUIRE(psrg::s3_sharpness(sharp) > psrg::s3_sharpness(blurred));
}

TEST_CASE("s3: invariant to a constant intensity shift", "[metrics][s3]") {
    auto corpus = psrg::synthetic_corpus(4, 64, 1, 31);
    for (const auto& img : corpus) {
        auto base = (0.8f * img).detach();
        auto shifted = psrg::add_scalar(base, 0.1f).detach();
        REQUIRE(std::fabs(psrg::s3_sharpness(base) - psrg::s3_sharpness(shifted)) < 1e-6);
    }
}

TEST_CASE("s3: shape contracts and color path", "[metrics][s3]") {
    REQUIRE_THROWS_AS(psrg::s3_sharpness(Tensor({1, 16, 16}, 0.0f)), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::s3_sharpness(Tensor({1, 1, 32, 32}, 0.0f)), psrg::ShapeError);
    auto color = random_image({3, 32, 32}, 859);
    const double v = psrg::s3_sharpness(color);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
    auto gray = random_image({32, 32}, 863);
    REQUIRE_NOTHROW(psrg::s3_sharpness(gray));
}

TEST_CASE("evaluate: identity set rows hit the caps", "[metrics][evaluate]") {
    std::vector<Tensor> set;
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) {
        set.push_back(random_image({1, 32, 32}, 900 + static_cast<uint64_t>(i)));
        ids.push_back("img" + std::to_string(i));
    }
    psrg::MetricsReport report;
    psrg::evaluate(set, set, ids, "identity", 2, "none", report);
    REQUIRE(report.rows.size() == 3);
    for (const auto& row : report.rows) {
        REQUIRE(row.psnr_db == 100.0);
        REQUIRE(std::fabs(row.ssim - 1.0) < 1e-9);
    }
}

TEST_CASE("evaluate: a single image row equals the scalar metrics", "[metrics][evaluate]") {
    auto sr = random_image({1, 32, 32}, 911);
    auto hr = random_image({1, 32, 32}, 919);
    psrg::MetricsReport report;
    psrg::evaluate({sr}, {hr}, {"only"}, "toy", 4, "gaussian:0.01", report);
    REQUIRE(report.rows.size() == 1);
    const auto& row = report.rows[0];
    REQUIRE(row.psnr_db == psrg::psnr(sr, hr));
    REQUIRE(row.ssim == psrg::ssim(sr, hr));
    REQUIRE(row.s3 == psrg::s3_sharpness(sr));
    REQUIRE(row.scale == 4);
    REQUIRE(row.noise == "gaussian:0.01");
}

TEST_CASE("evaluate: misaligned sets are rejected, rows scale with methods",
          "[metrics][evaluate]") {
    std::vector<Tensor> two = {random_image({1, 32, 32}, 921), random_image({1, 32, 32}, 923)};
    std::vector<Tensor> one = {two[0]};
    psrg::MetricsReport report;
    REQUIRE_THROWS_AS(psrg::evaluate(two, one, {"a", "b"}, "m", 2, "none", report),
                      psrg::ContractError);
    REQUIRE_THROWS_AS(psrg::evaluate(two, two, {"a"}, "m", 2, "none", report),
                      psrg::ContractError);

    psrg::evaluate(two, two, {"a", "b"}, "m1", 2, "none", report);
    psrg::evaluate(two, two, {"a", "b"}, "m2", 2, "none", report);
    psrg::evaluate(two, two, {"a", "b"}, "m3", 2, "none", report);
    REQUIRE(report.rows.size() == 2 * 3);
}

TEST_CASE("metrics report: csv header, ordering and byte stability", "[metrics][csv]") {
    auto build = [] {
        psrg::MetricsReport report;
        psrg::MetricsRow r;
        r.id = "b";
        r.method = "zeta";
        r.scale = 2;
        r.noise = "none";
        r.psnr_db = 31.25;
        r.ssim = 0.5;
        r.s3 = 0.125;
        report.add(r);
        r.id = "a";
        report.add(r);
        r.method = "alpha";
        r.id = "z";
        r.psnr_db = 100.0 / 3.0;
        report.add(r);
        return report.to_csv();
    };
    const std::string csv = build();
    REQUIRE(csv.rfind("id,method,scale,noise,psnr_db,ssim,s3\n", 0) == 0);
    REQUIRE(csv.find("z,alpha,") < csv.find("a,zeta,"));
    REQUIRE(csv.find("a,zeta,") < csv.find("b,zeta,"));
    REQUIRE(csv.find("33.333333") != std::string::npos);
    REQUIRE(csv.find("31.250000,0.500000,0.125000") != std::string::npos);
    REQUIRE(csv == build());
}

TEST_CASE("metrics report: aggregate computes population statistics", "[metrics][aggregate]") {
    psrg::MetricsReport report;
    psrg::MetricsRow r;
    r.method = "m";
    r.scale = 2;
    r.noise = "none";
    r.id = "one";
    r.psnr_db = 1.0;
    r.ssim = 0.2;
    r.s3 = 0.5;
    report.add(r);
    r.id = "two";
    r.psnr_db = 3.0;
    r.ssim = 0.4;
    report.add(r);
    r.id = "three";
    r.method = "other";
    report.add(r);

    auto groups = report.aggregate();
    REQUIRE(groups.size() == 2);
    const auto& m = groups[0].method == "m" ? groups[0] : groups[1];
    REQUIRE(m.count == 2);
    REQUIRE(std::fabs(m.mean_psnr - 2.0) < 1e-12);
    REQUIRE(std::fabs(m.std_psnr - 1.0) < 1e-12);
    REQUIRE(std::fabs(m.mean_ssim - 0.3) < 1e-12);
    REQUIRE(std::fabs(m.std_s3 - 0.0) < 1e-12);
}
