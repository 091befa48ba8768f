#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <psrg/psrg.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;
using psrg::Rng;
using psrg::Tensor;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("rng: fixed seed reproduces the stream", "[rng]") {
    Rng a(42), b(42);
    for (int i = 0; i < 32; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c(43);
    bool all_equal = true;
    Rng a2(42);
    for (int i = 0; i < 8; ++i) all_equal = all_equal && (a2.next_u64() == c.next_u64());
    REQUIRE_FALSE(all_equal);
}

TEST_CASE("rng: state save and restore resumes exactly", "[rng]") {
    Rng r(7);
    for (int i = 0; i < 10; ++i) r.next_u64();
    const auto snap = r.state();
    std::vector<uint64_t> first;
    for (int i = 0; i < 16; ++i) first.push_back(r.next_u64());
    r.set_state(snap);
    for (int i = 0; i < 16; ++i) REQUIRE(r.next_u64() == first[static_cast<std::size_t>(i)]);

    Rng s(1);
    s.reseed(9);
    Rng t(9);
    for (int i = 0; i < 8; ++i) REQUIRE(s.next_u64() == t.next_u64());
}

TEST_CASE("rng: derived streams are deterministic and distinct", "[rng]") {
    Rng a = Rng::derive(5, 0);
    Rng b = Rng::derive(5, 0);
    REQUIRE(a.next_u64() == b.next_u64());
    Rng c = Rng::derive(5, 1);
    Rng a2 = Rng::derive(5, 0);
    int same = 0;
    for (int i = 0; i < 16; ++i)
        if (a2.next_u64() == c.next_u64()) ++same;
    REQUIRE(same == 0);
}

TEST_CASE("rng: uniform ranges and integer exactness", "[rng]") {
    Rng r(11);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform(-2.0, 3.0);
        REQUIRE(u >= -2.0);
        REQUIRE(u < 3.0);
    }
    std::set<uint64_t> seen;
    for (int i = 0; i < 7000; ++i) {
        const uint64_t v = r.uniform_int(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 7);
}

TEST_CASE("rng: normal draws have sane first moments", "[rng]") {
    Rng r(13);
    double sum = 0.0, sq = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::fabs(mean) < 0.1);
    REQUIRE(std::fabs(var - 1.0) < 0.1);
}

TEST_CASE("rng: permutation and sampling without replacement", "[rng]") {
    Rng r(17);
    auto perm = r.permutation(20);
    auto sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (uint64_t i = 0; i < 20; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);

    auto picks = r.sample_without_replacement(100, 10);
    REQUIRE(picks.size() == 10);
    std::set<uint64_t> unique(picks.begin(), picks.end());
    REQUIRE(unique.size() == 10);
    for (auto p : picks) REQUIRE(p < 100);
}

TEST_CASE("degrade: constant images survive unchanged", "[data][degrade]") {
    Tensor hr({1, 32, 32}, 0.5f);
    for (auto mode : {psrg::DegradeMode::blur_bicubic, psrg::DegradeMode::bicubic_only}) {
        for (int r : {2, 4}) {
            auto lr = psrg::degrade(hr, r, mode);
            REQUIRE(lr.dim(1) == 32 / r);
            REQUIRE(lr.dim(2) == 32 / r);
            for (int64_t i = 0; i < lr.numel(); ++i) REQUIRE(std::fabs(lr[i] - 0.5f) < 1e-6f);
        }
    }
}

TEST_CASE("degrade: block staircase decimates to block values", "[data][degrade]") {
    Tensor hr({1, 32, 32}, 0.0f);
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x)
            hr.at({0, y, x}) = 0.1f + 0.02f * static_cast<float>(x / 2) +
                               0.015f * static_cast<float>(y / 2);
    auto lr = psrg::degrade(hr, 2, psrg::DegradeMode::bicubic_only);
    REQUIRE(lr.dim(1) == 16);
    REQUIRE(lr.dim(2) == 16);
    for (int64_t by = 1; by < 15; ++by)
        for (int64_t bx = 1; bx < 15; ++bx) {
            const float want = 0.1f + 0.02f * static_cast<float>(bx) +
                               0.015f * static_cast<float>(by);
            REQUIRE(std::fabs(lr.at({0, by, bx}) - want) < 1e-3f);
        }
}

TEST_CASE("degrade: chained halvings match a single quartering in shape", "[data][degrade]") {
    Rng rng(19);
    auto hr = Tensor::rand_uniform({1, 32, 32}, rng, 0.0f, 1.0f);
    auto twice = psrg::degrade(psrg::degrade(hr, 2), 2);
    auto once = psrg::degrade(hr, 4);
    REQUIRE(twice.shape() == once.shape());
}

TEST_CASE("degrade: scale and divisibility contracts", "[data][degrade]") {
    Tensor hr({1, 32, 32}, 0.5f);
    REQUIRE_THROWS_AS(psrg::degrade(hr, 3), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::degrade(hr, 0), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::degrade(hr, 1), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::degrade(Tensor({1, 33, 32}, 0.5f), 2), psrg::ShapeError);

    auto custom = psrg::degrade(hr, 2, psrg::DegradeMode::blur_bicubic, 0.25);
    REQUIRE(custom.dim(1) == 16);
}

TEST_CASE("bicubic: identity, constants and linear ramps", "[data][resample]") {
    Rng rng(23);
    auto img = Tensor::rand_uniform({1, 8, 8}, rng, 0.0f, 1.0f);
    auto same = psrg::bicubic_resample(img, 1.0);
    REQUIRE(oracle::max_abs_diff(same, img) < 1e-6);

    Tensor flat({1, 8, 8}, 0.3f);
    for (double f : {0.5, 1.5, 2.0, 3.0}) {
        auto out = psrg::bicubic_resample(flat, f);
        for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(std::fabs(out[i] - 0.3f) < 1e-6f);
    }

    Tensor ramp({1, 8, 8}, 0.0f);
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) ramp.at({0, y, x}) = static_cast<float>(x) / 7.0f;
    auto up = psrg::bicubic_resample(ramp, 2.0);
    REQUIRE(up.dim(2) == 16);
    for (int64_t x = 3; x < 13; ++x) {
        const float src = (static_cast<float>(x) + 0.5f) / 2.0f - 0.5f;
        REQUIRE(std::fabs(up.at({0, 8, x}) - src / 7.0f) < 1e-3f);
    }

    REQUIRE_THROWS_AS(psrg::bicubic_resample(img, 0.0), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::bicubic_resample(img, -2.0), psrg::ConfigError);

    auto sized = psrg::bicubic_resample_to(img, 11, 5);
    REQUIRE(sized.dim(1) == 11);
    REQUIRE(sized.dim(2) == 5);
}

TEST_CASE("bilinear: constants and ramps are exact", "[data][resample]") {
    Tensor flat({1, 8, 8}, 0.7f);
    auto out = psrg::bilinear_resample(flat, 2.0);
    for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(std::fabs(out[i] - 0.7f) < 1e-6f);
}

TEST_CASE("gaussian_blur: constants pass through, zero sigma copies", "[data][resample]") {
    Tensor flat({1, 16, 16}, 0.42f);
    auto blurred = psrg::gaussian_blur(flat, 1.5);
    for (int64_t i = 0; i < blurred.numel(); ++i) REQUIRE(std::fabs(blurred[i] - 0.42f) < 1e-6f);

    Rng rng(29);
    auto img = Tensor::rand_uniform({1, 16, 16}, rng, 0.0f, 1.0f);
    auto copy = psrg::gaussian_blur(img, 0.0);
    REQUIRE(oracle::bitwise_equal(copy, img));

    auto soft = psrg::gaussian_blur(img, 2.0);
    double var_in = 0.0, var_out = 0.0, mu_in = 0.0, mu_out = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) {
        mu_in += img[i];
        mu_out += soft[i];
    }
    mu_in /= img.numel();
    mu_out /= img.numel();
    for (int64_t i = 0; i < img.numel(); ++i) {
        var_in += (img[i] - mu_in) * (img[i] - mu_in);
        var_out += (soft[i] - mu_out) * (soft[i] - mu_out);
    }
    REQUIRE(var_out < var_in);
}

TEST_CASE("noise: zero parameter leaves the image untouched", "[data][noise]") {
    Rng rng(31);
    auto img = Tensor::rand_uniform({1, 12, 12}, rng, 0.0f, 1.0f);
    for (const char* kind : {"gaussian:0", "salt_pepper:0", "speckle:0", "none"}) {
        auto out = psrg::add_noise(img, psrg::NoiseSpec::parse(kind, 3));
        REQUIRE(oracle::bitwise_equal(out, img));
    }
}

TEST_CASE("noise: salt and pepper corrupts an exact pixel count", "[data][noise]") {
    Tensor img({1, 100, 100}, 0.5f);
    auto spec = psrg::NoiseSpec::parse("salt_pepper:0.05", 7);
    auto out = psrg::add_noise(img, spec);
    int64_t corrupted = 0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        if (out[i] != 0.5f) {
            REQUIRE((out[i] == 0.0f || out[i] == 1.0f));
            ++corrupted;
        }
    }
    REQUIRE(corrupted == 500);
}

TEST_CASE("noise: salt and pepper hits whole pixels across channels", "[data][noise]") {
    Tensor img({3, 20, 20}, 0.5f);
    auto out = psrg::add_noise(img, psrg::NoiseSpec::parse("salt_pepper:0.03", 11));
    int64_t hit = 0;
    for (int64_t i = 0; i < 400; ++i) {
        const float v0 = out[i], v1 = out[400 + i], v2 = out[800 + i];
        if (v0 != 0.5f) {
            REQUIRE(v0 == v1);
            REQUIRE(v1 == v2);
            ++hit;
        } else {
            REQUIRE(v1 == 0.5f);
            REQUIRE(v2 == 0.5f);
        }
    }
    REQUIRE(hit == 12);
}

TEST_CASE("noise: speckle keeps black pixels black", "[data][noise]") {
    Tensor img({1, 10, 10}, 0.0f);
    auto out = psrg::add_noise(img, psrg::NoiseSpec::parse("speckle:0.05", 13));
    for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.0f);
}

TEST_CASE("noise: reproducible from the seed, clamped to range", "[data][noise]") {
    Rng rng(37);
    auto img = Tensor::rand_uniform({1, 16, 16}, rng, 0.0f, 1.0f);
    auto spec = psrg::NoiseSpec::parse("gaussian:0.01", 21);
    auto a = psrg::add_noise(img, spec);
    auto b = psrg::add_noise(img, spec);
    REQUIRE(oracle::bitwise_equal(a, b));
    REQUIRE_FALSE(oracle::bitwise_equal(a, img));
    for (int64_t i = 0; i < a.numel(); ++i) {
        REQUIRE(a[i] >= 0.0f);
        REQUIRE(a[i] <= 1.0f);
    }
    auto c = psrg::add_noise(img, psrg::NoiseSpec::parse("gaussian:0.01", 22));
    REQUIRE_FALSE(oracle::bitwise_equal(a, c));
}

TEST_CASE("noise: spec parsing and labels", "[data][noise]") {
    auto g = psrg::NoiseSpec::parse("gaussian:0.005", 1);
    REQUIRE(g.kind == psrg::NoiseKind::gaussian);
    REQUIRE(g.param == 0.005);
    REQUIRE(g.label() == "gaussian:0.005");
    REQUIRE(g.in_tested_range());

    auto none = psrg::NoiseSpec::parse("none");
    REQUIRE(none.kind == psrg::NoiseKind::none);
    REQUIRE(none.label() == "none");

    auto sp = psrg::NoiseSpec::parse("salt_pepper:0.2", 1);
    REQUIRE_FALSE(sp.in_tested_range());

    REQUIRE_THROWS_AS(psrg::NoiseSpec::parse("poisson:0.1"), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::NoiseSpec::parse("gaussian"), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::NoiseSpec::parse("gaussian:abc"), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::NoiseSpec::parse("gaussian:-0.1"), psrg::ConfigError);
}

TEST_CASE("dihedral: symmetries invert and differ", "[data]") {
    Rng rng(41);
    auto img = Tensor::rand_uniform({1, 6, 6}, rng, 0.0f, 1.0f);
    REQUIRE(oracle::bitwise_equal(psrg::dihedral_transform(img, 0), img));
    for (int k : {1, 2, 4}) {
        auto twice = psrg::dihedral_transform(psrg::dihedral_transform(img, k), k);
        REQUIRE(oracle::bitwise_equal(twice, img));
    }
    for (int k = 1; k < 8; ++k)
        REQUIRE_FALSE(oracle::bitwise_equal(psrg::dihedral_transform(img, k), img));

    Tensor rect({1, 4, 6}, 0.0f);
    REQUIRE_NOTHROW(psrg::dihedral_transform(rect, 3));
    REQUIRE_THROWS_AS(psrg::dihedral_transform(rect, 4), psrg::ShapeError);
}

TEST_CASE("stack_batch: slots and contracts", "[data]") {
    Rng rng(43);
    std::vector<Tensor> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(Tensor::rand_uniform({2, 4, 4}, rng, 0.0f, 1.0f));
    auto batch = psrg::stack_batch(imgs);
    REQUIRE(batch.shape() == psrg::Shape{3, 2, 4, 4});
    for (int64_t n = 0; n < 3; ++n)
        for (int64_t i = 0; i < 32; ++i)
            REQUIRE(batch[n * 32 + i] == imgs[static_cast<std::size_t>(n)][i]);

    REQUIRE_THROWS_AS(psrg::stack_batch({}), psrg::ShapeError);
    imgs.push_back(Tensor({2, 4, 5}, 0.0f));
    REQUIRE_THROWS_AS(psrg::stack_batch(imgs), psrg::ShapeError);
}

TEST_CASE("synthetic corpus: deterministic, bounded, validated", "[data][synthetic]") {
    auto a = psrg::synthetic_corpus(5, 16, 1, 47);
    auto b = psrg::synthetic_corpus(5, 16, 1, 47);
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].shape() == psrg::Shape{1, 16, 16});
        REQUIRE(oracle::bitwise_equal(a[i], b[i]));
        for (int64_t j = 0; j < a[i].numel(); ++j) {
            REQUIRE(a[i][j] >= 0.0f);
            REQUIRE(a[i][j] <= 1.0f);
        }
    }
    auto color = psrg::synthetic_corpus(2, 16, 3, 47);
    REQUIRE(color[0].dim(0) == 3);

    REQUIRE_THROWS_AS(psrg::synthetic_corpus(0, 16, 1, 1), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::synthetic_corpus(1, 4, 1, 1), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::synthetic_corpus(1, 16, 2, 1), psrg::ConfigError);
}

TEST_CASE("dataset: stream order is a per-epoch permutation", "[data][dataset]") {
    auto ds = psrg::make_synthetic_dataset(8, 16, 1, 2, 16, 5);
    REQUIRE(ds.size() == 8);
    REQUIRE(ds.scale() == 2);
    std::set<std::string> first_epoch;
    for (int i = 0; i < 8; ++i) first_epoch.insert(ds.next().id);
    REQUIRE(first_epoch.size() == 8);
    REQUIRE(ds.cursor().epoch == 1);
    REQUIRE(ds.cursor().pos == 0);
    std::set<std::string> second_epoch;
    for (int i = 0; i < 8; ++i) second_epoch.insert(ds.next().id);
    REQUIRE(first_epoch == second_epoch);
}

TEST_CASE("dataset: same seed gives the same first hundred ids", "[data][dataset]") {
    auto a = psrg::make_synthetic_dataset(6, 32, 1, 2, 16, 9);
    auto b = psrg::make_synthetic_dataset(6, 32, 1, 2, 16, 9);
    for (int i = 0; i < 100; ++i) {
        auto pa = a.next();
        auto pb = b.next();
        REQUIRE(pa.id == pb.id);
        REQUIRE(oracle::bitwise_equal(pa.hr, pb.hr));
        REQUIRE(oracle::bitwise_equal(pa.lr, pb.lr));
    }
}

TEST_CASE("dataset: pair invariants hold on every draw", "[data][dataset]") {
    auto ds = psrg::make_synthetic_dataset(4, 32, 1, 2, 16, 13);
    for (int i = 0; i < 12; ++i) {
        auto pair = ds.next();
        REQUIRE(pair.hr.shape() == psrg::Shape{1, 16, 16});
        REQUIRE(pair.lr.shape() == psrg::Shape{1, 8, 8});
        REQUIRE(pair.scale == 2);
        auto expected_lr = psrg::degrade(pair.hr, 2);
        REQUIRE(oracle::bitwise_equal(pair.lr, expected_lr));
        for (int64_t j = 0; j < pair.hr.numel(); ++j) {
            REQUIRE(pair.hr[j] >= 0.0f);
            REQUIRE(pair.hr[j] <= 1.0f);
        }
    }
}

TEST_CASE("dataset: fixed enumeration and cursor resume", "[data][dataset]") {
    auto ds = psrg::make_synthetic_dataset(4, 32, 1, 2, 16, 17);
    REQUIRE(ds.size() == 16);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ds.size(); ++i) ids.insert(ds.at(i).id);
    REQUIRE(ids.size() == 16);
    REQUIRE(ds.at(3).id == ds.at(3).id);

    for (int i = 0; i < 5; ++i) ds.next();
    const auto cur = ds.cursor();
    auto resumed = psrg::make_synthetic_dataset(4, 32, 1, 2, 16, 17);
    resumed.seek(cur);
    for (int i = 0; i < 20; ++i) {
        auto pa = ds.next();
        auto pb = resumed.next();
        REQUIRE(pa.id == pb.id);
        REQUIRE(oracle::bitwise_equal(pa.hr, pb.hr));
    }

    psrg::PatchDataset::Cursor bad;
    bad.pos = 999;
    REQUIRE_THROWS_AS(resumed.seek(bad), psrg::ContractError);
}

TEST_CASE("dataset: augmented pairs keep the degradation invariant", "[data][dataset]") {
    auto images = psrg::synthetic_corpus(3, 16, 1, 51);
    psrg::PatchDataset ds(images, {"a", "b", "c"}, 2, 16, 23, psrg::DegradeMode::blur_bicubic,
                          -1.0, true);
    bool any_rotated = false;
    for (int i = 0; i < 9; ++i) {
        auto pair = ds.next();
        REQUIRE(oracle::bitwise_equal(pair.lr, psrg::degrade(pair.hr, 2)));
        const std::string base_id = pair.id.substr(0, 1);
        const auto& original = images[static_cast<std::size_t>(base_id[0] - 'a')];
        if (!oracle::bitwise_equal(pair.hr, original)) any_rotated = true;
    }
    REQUIRE(any_rotated);
}

TEST_CASE("dataset: construction contracts", "[data][dataset]") {
    auto images = psrg::synthetic_corpus(2, 16, 1, 53);
    REQUIRE_THROWS_AS(psrg::PatchDataset({}, {}, 2, 16, 1), psrg::DataError);
    REQUIRE_THROWS_AS(psrg::PatchDataset(images, {"only_one"}, 2, 16, 1), psrg::ContractError);
    REQUIRE_THROWS_AS(psrg::PatchDataset(images, {"a", "b"}, 2, 15, 1), psrg::DataError);
    REQUIRE_THROWS_AS(psrg::PatchDataset(images, {"a", "b"}, 4, 2, 1), psrg::DataError);
    REQUIRE_THROWS_AS(psrg::PatchDataset(images, {"a", "b"}, 2, 32, 1), psrg::DataError);
}

TEST_CASE("dataset: directory loading is sorted and validated", "[data][dataset]") {
    const auto dir = fresh_dir("psrg_dataset_dir");
    auto images = psrg::synthetic_corpus(3, 16, 1, 59);
    psrg::save_image(images[2], (dir / "zeta.png").string());
    psrg::save_image(images[0], (dir / "alpha.png").string());
    psrg::save_image(images[1], (dir / "mid.png").string());
    std::ofstream(dir / "notes.txt") << "ignored";

    auto ds = psrg::make_dataset(dir.string(), 2, 16, 3);
    REQUIRE(ds.size() == 3);
    REQUIRE(ds.at(0).id == "alpha_0_0");
    REQUIRE(ds.at(1).id == "mid_0_0");
    REQUIRE(ds.at(2).id == "zeta_0_0");

    REQUIRE_THROWS_AS(psrg::make_dataset((dir / "missing").string(), 2, 16, 3), psrg::DataError);
    const auto empty = fresh_dir("psrg_dataset_empty");
    REQUIRE_THROWS_AS(psrg::make_dataset(empty.string(), 2, 16, 3), psrg::DataError);
}

TEST_CASE("dataset: synthetic split respects skip and take", "[data][dataset]") {
    auto train = psrg::make_synthetic_dataset(10, 16, 1, 2, 16, 61, 0, 8);
    auto holdout = psrg::make_synthetic_dataset(10, 16, 1, 2, 16, 61, 8, 2);
    REQUIRE(train.size() == 8);
    REQUIRE(holdout.size() == 2);
    std::set<std::string> train_ids, holdout_ids;
    for (std::size_t i = 0; i < train.size(); ++i) train_ids.insert(train.at(i).id);
    for (std::size_t i = 0; i < holdout.size(); ++i) holdout_ids.insert(holdout.at(i).id);
    for (const auto& id : holdout_ids) REQUIRE(train_ids.count(id) == 0);
    REQUIRE(holdout_ids.count("synth8_0_0") == 1);
    REQUIRE(holdout_ids.count("synth9_0_0") == 1);
}

TEST_CASE("image io: 8-bit png roundtrip is idempotent", "[data][image]") {
    const auto dir = fresh_dir("psrg_image_io");
    Rng rng(67);
    auto img = Tensor::rand_uniform({3, 9, 7}, rng, 0.0f, 1.0f);
    const auto p1 = (dir / "a.png").string();
    const auto p2 = (dir / "b.png").string();
    psrg::save_image(img, p1);
    auto loaded = psrg::load_image(p1);
    REQUIRE(loaded.shape() == img.shape());
    REQUIRE(oracle::max_abs_diff(loaded, img) <= 0.5 / 255.0 + 1e-7);
    psrg::save_image(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
}

TEST_CASE("image io: 16-bit formats preserve full white", "[data][image]") {
    const auto dir = fresh_dir("psrg_image_io16");
    Tensor white({1, 6, 6}, 1.0f);
    const auto pgm = (dir / "w.pgm").string();
    psrg::save_image(white, pgm, 16);
    auto loaded = psrg::load_image(pgm);
    for (int64_t i = 0; i < loaded.numel(); ++i) REQUIRE(loaded[i] == 1.0f);

    Rng rng(71);
    auto img = Tensor::rand_uniform({1, 5, 8}, rng, 0.0f, 1.0f);
    const auto png = (dir / "g.png").string();
    psrg::save_image(img, png, 16);
    auto back = psrg::load_image(png);
    REQUIRE(oracle::max_abs_diff(back, img) <= 0.5 / 65535.0 + 1e-9);

    auto color = psrg::synthetic_corpus(1, 8, 3, 73)[0];
    const auto ppm = (dir / "c.ppm").string();
    psrg::save_image(color, ppm);
    auto cback = psrg::load_image(ppm);
    REQUIRE(cback.dim(0) == 3);
    REQUIRE(oracle::max_abs_diff(cback, color) <= 0.5 / 255.0 + 1e-7);
}

TEST_CASE("image io: format contracts and corruption", "[data][image]") {
    const auto dir = fresh_dir("psrg_image_err");
    Tensor gray({1, 6, 6}, 0.5f);
    Tensor color({3, 6, 6}, 0.5f);

    REQUIRE_THROWS_AS(psrg::save_image(color, (dir / "c.pgm").string()), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::save_image(gray, (dir / "g.ppm").string()), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::save_image(Tensor({2, 6, 6}, 0.5f), (dir / "x.png").string()),
                      psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::save_image(gray, (dir / "g.png").string(), 12), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::save_image(gray, (dir / "g.bmp").string()), psrg::DataError);

    REQUIRE_THROWS_AS(psrg::load_image((dir / "missing.png").string()), psrg::DataError);

    const auto good = (dir / "ok.png").string();
    psrg::save_image(gray, good);
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto trunc = (dir / "trunc.png").string();
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    REQUIRE_THROWS_AS(psrg::load_image(trunc), psrg::DataError);

    const auto garbage = (dir / "junk.png").string();
    std::ofstream g(garbage, std::ios::binary);
    g << "this is not a png";
    g.close();
    REQUIRE_THROWS_AS(psrg::load_image(garbage), psrg::DataError);
}
