#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "lsmix/datagen.hpp"
#include "test_util.hpp"

using namespace lsmix;
using lsmix::testing::TempDir;

namespace {

SyntheticConfig paper_config(std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.d = 10;
    cfg.n = 5000;
    cfg.gamma = 0.1;
    cfg.seed = seed;
    return cfg;
}

ImageDataset tiny_images(std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
    ImageDataset ds;
    ds.height = h;
    ds.width = w;
    ds.channels = c;
    ds.k = 10;
    Rng rng = make_rng(seed);
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % 10));
    ds.pixels.resize(n * h * w * c);
    for (auto& p : ds.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 3) == 0 ? 0 : uniform_index(rng, 256));
    return ds;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<std::uint8_t>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(SampleLowvarHighvar, LowBlockIsGammaTimesLabel) {
    const auto ds = sample_lowvar_highvar(paper_config(1));
    ASSERT_EQ(ds.n(), 5000u);
    ASSERT_EQ(ds.d(), 10u);
    EXPECT_EQ(ds.low_var_dims, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int y = ds.labels[i];
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(ds.features(i, j), 0.1 * y);
        for (std::size_t j = 5; j < 10; ++j) {
            const double v = ds.features(i, j) * y;
            EXPECT_GE(v, 1.0);
            EXPECT_LE(v, 100.0);
        }
    }
}

TEST(SampleLowvarHighvar, PerClassVariances) {
    const auto ds = sample_lowvar_highvar(paper_config(2));
    const double expected = 99.0 * 99.0 / 12.0;
    for (int y : {-1, 1}) {
        for (std::size_t j = 0; j < 10; ++j) {
            double s = 0, s2 = 0, cnt = 0;
            for (std::size_t i = 0; i < ds.n(); ++i) {
                if (ds.labels[i] != y) continue;
                s += ds.features(i, j);
                cnt += 1;
            }
            const double mean = s / cnt;
            for (std::size_t i = 0; i < ds.n(); ++i)
                if (ds.labels[i] == y) s2 += (ds.features(i, j) - mean) * (ds.features(i, j) - mean);
            const double var = s2 / cnt;
            if (j < 5) {
                // Zero conditional variance means every value in the class is the same double.
                for (std::size_t i = 0; i < ds.n(); ++i) {
                    if (ds.labels[i] == y) {
                        ASSERT_EQ(ds.features(i, j), 0.1 * y);
                    }
                }
            } else {
                EXPECT_NEAR(var, expected, 0.05 * expected);
            }
        }
    }
}

TEST(SampleLowvarHighvar, MeanOfYXOnLowBlockIsGamma) {
    const auto ds = sample_lowvar_highvar(paper_config(3));
    for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < ds.n(); ++i) s += ds.labels[i] * ds.features(i, j);
        EXPECT_NEAR(s / ds.n(), 0.1, 1e-12);
    }
}

TEST(SampleLowvarHighvar, LabelsRoughlyBalanced) {
    const auto ds = sample_lowvar_highvar(paper_config(4));
    const auto pos = std::count(ds.labels.begin(), ds.labels.end(), 1);
    // 4 standard deviations of a Binomial(5000, 1/2).
    EXPECT_NEAR(static_cast<double>(pos), 2500.0, 4.0 * std::sqrt(1250.0));
}

TEST(SampleLowvarHighvar, SingleDrawShape) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SyntheticConfig cfg;
        cfg.d = 2;
        cfg.n = 1;
        cfg.seed = seed;
        const auto ds = sample_lowvar_highvar(cfg);
        if (ds.labels[0] != 1) continue;
        EXPECT_EQ(ds.features(0, 0), 0.1);
        EXPECT_GE(ds.features(0, 1), 1.0);
        EXPECT_LE(ds.features(0, 1), 100.0);
        return;
    }
    FAIL() << "no seed in 0..19 produced a +1 draw";
}

TEST(SampleLowvarHighvar, BitReproducible) {
    const auto a = sample_lowvar_highvar(paper_config(7));
    const auto b = sample_lowvar_highvar(paper_config(7));
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    const auto c = sample_lowvar_highvar(paper_config(8));
    EXPECT_NE(a.labels, c.labels);
}

TEST(SampleLowvarHighvar, InvalidConfigRejected) {
    auto cfg = paper_config(0);
    cfg.gamma = 0.0;
    EXPECT_THROW(sample_lowvar_highvar(cfg), ConfigError);
    cfg = paper_config(0);
    cfg.d = 1;
    EXPECT_THROW(sample_lowvar_highvar(cfg), ConfigError);
    cfg = paper_config(0);
    cfg.high_lo = 5;
    cfg.high_hi = 5;
    EXPECT_THROW(sample_lowvar_highvar(cfg), ConfigError);
}

TEST(SampleLowvarHighvar, NoiseWidthSpreadsLowBlock) {
    auto cfg = paper_config(5);
    cfg.low_noise_width = 0.1;
    const auto ds = sample_lowvar_highvar(cfg);
    for (std::size_t i = 0; i < ds.n(); ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_LE(std::abs(ds.features(i, j) - 0.1 * ds.labels[i]), 0.05 + 1e-15);
}

TEST(SampleLowvarHighvar, NoiseWidthOnlyScalesTheLowBlockPerturbation) {
    auto cfg = paper_config(6);
    const auto clean = sample_lowvar_highvar(cfg);
    cfg.low_noise_width = 0.01;
    const auto a = sample_lowvar_highvar(cfg);
    cfg.low_noise_width = 0.1;
    const auto b = sample_lowvar_highvar(cfg);
    EXPECT_EQ(a.labels, clean.labels);
    EXPECT_EQ(b.labels, clean.labels);
    EXPECT_TRUE((a.features.rightCols(5).array() == clean.features.rightCols(5).array()).all());
    EXPECT_TRUE((b.features.rightCols(5).array() == clean.features.rightCols(5).array()).all());
    const Matrix da = a.features.leftCols(5) - clean.features.leftCols(5);
    const Matrix db = b.features.leftCols(5) - clean.features.leftCols(5);
    EXPECT_LE((10.0 * da - db).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GT(da.cwiseAbs().maxCoeff(), 0.004);
}

TEST(SampleBoundary2d, Construction) {
    const auto ds = sample_boundary_2d(500, 11);
    ASSERT_EQ(ds.n(), 500u);
    EXPECT_EQ(ds.low_var_dims, (std::vector<std::size_t>{1}));
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int y = ds.labels[i];
        EXPECT_EQ(ds.features(i, 1), 0.1 * y);
        EXPECT_GE(ds.features(i, 0) * y, 1.0);
        EXPECT_LE(ds.features(i, 0) * y, 10.0);
        EXPECT_EQ(ds.features(i, 1) > 0 ? 1 : -1, y);
    }
    EXPECT_THROW(sample_boundary_2d(0, 1), ConfigError);
}

TEST(InjectSpuriousDim, ReplacesOnlyFirstColumn) {
    const auto ds = sample_boundary_2d(50, 3);
    const auto out = inject_spurious_dim(ds, 0.1);
    EXPECT_EQ(out.low_var_dims, (std::vector<std::size_t>{0}));
    for (std::size_t i = 0; i < ds.n(); ++i) {
        EXPECT_EQ(out.features(i, 0), 0.1 * ds.labels[i]);
        if (ds.labels[i] == -1) {
            EXPECT_EQ(out.features(i, 0), -0.1);
        }
        EXPECT_EQ(out.features(i, 1), ds.features(i, 1));
    }
    const auto zero = inject_spurious_dim(ds, 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) EXPECT_EQ(zero.features(i, 0), 0.0);
}

TEST(InjectSpuriousDim, MulticlassRejected) {
    Dataset ds;
    ds.features = Matrix::Zero(3, 2);
    ds.labels = {0, 1, 2};
    ds.k = 3;
    EXPECT_THROW(inject_spurious_dim(ds, 0.1), ModeError);
}

TEST(ColorizeBackgrounds, BoundedDistinctAndDeranged) {
    const auto gray = tiny_images(40, 6, 5, 1, 21);
    const auto train = colorize_backgrounds(gray, 16, false, 99);
    const auto test = colorize_backgrounds(gray, 16, true, 99);
    ASSERT_EQ(train.channels, 3u);
    const auto palette = make_palette(10, 16, 99);
    EXPECT_EQ(std::set<Rgb>(palette.begin(), palette.end()).size(), 10u);
    for (const auto& c : palette)
        for (auto ch : c) {
            EXPECT_GE(ch, 1);
            EXPECT_LE(ch, 16);
        }
    const std::size_t plane = gray.plane_size();
    for (std::size_t i = 0; i < gray.n(); ++i) {
        std::size_t fg_before = 0, fg_after = 0;
        for (std::size_t p = 0; p < plane; ++p) {
            const auto g = gray.image(i)[p];
            fg_before += g > 0;
            bool fg = true;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const auto v = train.image(i)[ch * plane + p];
                if (g == 0) {
                    EXPECT_LE(v, 16);
                    EXPECT_EQ(v, palette[static_cast<std::size_t>(gray.labels[i])][ch]);
                    fg = false;
                } else {
                    EXPECT_EQ(v, g);
                }
            }
            fg_after += fg;
        }
        EXPECT_EQ(fg_before, fg_after);
    }
    for (int c = 0; c < 10; ++c) EXPECT_NE(palette[static_cast<std::size_t>(c)], palette[static_cast<std::size_t>((c + 1) % 10)]);
    // Background of each class differs between the unpermuted and permuted renderings.
    for (std::size_t i = 0; i < gray.n(); ++i) {
        for (std::size_t p = 0; p < plane; ++p) {
            if (gray.image(i)[p] != 0) continue;
            bool same = true;
            for (std::size_t ch = 0; ch < 3; ++ch) same &= train.image(i)[ch * plane + p] == test.image(i)[ch * plane + p];
            EXPECT_FALSE(same);
            break;
        }
    }
}

TEST(ColorizeBackgrounds, AllZeroImageTakesClassColor) {
    ImageDataset gray;
    gray.height = gray.width = 4;
    gray.labels = {0};
    gray.pixels.assign(16, 0);
    const auto out = colorize_backgrounds(gray, 16, false, 1);
    const auto color = make_palette(10, 16, 1)[0];
    for (std::size_t p = 0; p < 16; ++p)
        for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(out.image(0)[ch * 16 + p], color[ch]);
}

TEST(ColorizeBackgrounds, PaletteExhaustion) {
    const auto gray = tiny_images(10, 2, 2, 1, 1);
    EXPECT_THROW(colorize_backgrounds(gray, 2, false, 1), ConfigError);  // 2^3 = 8 < 10 colors
    EXPECT_NO_THROW(colorize_backgrounds(gray, 3, false, 1));
}

TEST(MnistIdx, RoundTripAndHeader) {
    TempDir dir("idx");
    const auto ds = tiny_images(7, 28, 28, 1, 4);
    write_mnist_idx(ds, dir.file("img"), dir.file("lab"));
    const auto bytes = slurp(dir.file("img"));
    ASSERT_GE(bytes.size(), 16u);
    EXPECT_EQ(bytes[2], 0x08);
    EXPECT_EQ(bytes[3], 0x03);
    const auto back = load_mnist_idx(dir.file("img"), dir.file("lab"));
    EXPECT_EQ(back.n(), 7u);
    EXPECT_EQ(back.height, 28u);
    EXPECT_EQ(back.width, 28u);
    EXPECT_EQ(back.channels, 1u);
    EXPECT_EQ(back.pixels, ds.pixels);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(MnistIdx, BadMagicAndMismatch) {
    TempDir dir("idx_bad");
    const auto ds = tiny_images(3, 4, 4, 1, 4);
    write_mnist_idx(ds, dir.file("img"), dir.file("lab"));
    try {
        load_mnist_idx(dir.file("lab"), dir.file("lab"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
    auto small = ds;
    small.labels.pop_back();
    small.pixels.resize(2 * 16);
    write_mnist_idx(small, dir.file("img2"), dir.file("lab2"));
    try {
        load_mnist_idx(dir.file("img"), dir.file("lab2"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
    }
    EXPECT_THROW(load_mnist_idx(dir.file("missing"), dir.file("lab")), ParseError);
}

TEST(MnistIdx, EveryTruncationRejected) {
    TempDir dir("idx_trunc");
    const auto ds = tiny_images(3, 4, 4, 1, 8);
    write_mnist_idx(ds, dir.file("img"), dir.file("lab"));
    const auto img = slurp(dir.file("img"));
    const auto lab = slurp(dir.file("lab"));
    for (std::size_t cut = 0; cut < img.size(); ++cut) {
        dump(dir.file("t"), std::vector<std::uint8_t>(img.begin(), img.begin() + static_cast<std::ptrdiff_t>(cut)));
        EXPECT_THROW(load_mnist_idx(dir.file("t"), dir.file("lab")), ParseError) << "cut " << cut;
    }
    for (std::size_t cut = 0; cut < lab.size(); ++cut) {
        dump(dir.file("t"), std::vector<std::uint8_t>(lab.begin(), lab.begin() + static_cast<std::ptrdiff_t>(cut)));
        try {
            load_mnist_idx(dir.file("img"), dir.file("t"));
            FAIL() << "cut " << cut;
        } catch (const ParseError& e) {
            if (cut >= 8) {
                EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
            }
        }
    }
}

TEST(Cifar10, LayoutRoundTripAndErrors) {
    TempDir dir("cifar");
    const auto ds = tiny_images(5, 32, 32, 3, 12);
    write_cifar10_binary(ds, dir.file("b1.bin"));
    EXPECT_EQ(slurp(dir.file("b1.bin")).size(), 5u * 3073u);
    const auto back = load_cifar10_binary({dir.file("b1.bin"), dir.file("b1.bin")});
    EXPECT_EQ(back.n(), 10u);
    EXPECT_EQ(back.labels[5], ds.labels[0]);
    EXPECT_TRUE(std::equal(ds.pixels.begin(), ds.pixels.end(), back.pixels.begin()));
    // Record layout: byte 0 label, then 1024 red, 1024 green, 1024 blue.
    const auto raw = slurp(dir.file("b1.bin"));
    EXPECT_EQ(raw[0], ds.labels[0]);
    EXPECT_EQ(raw[1 + 1024], ds.image(0)[1024]);

    dump(dir.file("empty.bin"), {});
    EXPECT_THROW(load_cifar10_binary({dir.file("empty.bin")}), ParseError);
    dump(dir.file("odd.bin"), std::vector<std::uint8_t>(3074, 0));
    EXPECT_THROW(load_cifar10_binary({dir.file("odd.bin")}), ParseError);
    for (std::size_t cut = 1; cut < raw.size(); cut += 97) {
        if (cut % 3073 == 0) continue;
        dump(dir.file("t.bin"), std::vector<std::uint8_t>(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(cut)));
        EXPECT_THROW(load_cifar10_binary({dir.file("t.bin")}), ParseError);
    }
}

TEST(SelectBinaryClasses, RelabelsAndCounts) {
    const auto ds = tiny_images(30, 2, 2, 3, 5);
    const auto b = select_binary_classes(ds, 0, 1);
    EXPECT_EQ(b.n(), 6u);
    EXPECT_TRUE(b.binary());
    EXPECT_EQ(b.d(), 12u);
    EXPECT_THROW(select_binary_classes(ds, 1, 1), ConfigError);
    EXPECT_THROW(select_binary_classes(ds, 0, 99), ConfigError);
}

TEST(StandardizeChannels, TrainMomentsAndFlags) {
    Rng rng = make_rng(3);
    Dataset train, test;
    train.features = lsmix::testing::random_matrix(200, 6, rng, 50.0);
    train.features.col(4).setConstant(7.0);
    train.features.col(5).setConstant(7.0);
    train.labels.assign(200, 1);
    test.features = lsmix::testing::random_matrix(50, 6, rng, 80.0);
    test.labels.assign(50, 1);
    const auto out = standardize_channels(train, test, ChannelLayout::planar(3, 2));
    for (std::size_t c = 0; c < 2; ++c) {
        const auto block = out.train.features.middleCols(static_cast<Eigen::Index>(2 * c), 2);
        const double mean = block.mean();
        const double sd = std::sqrt((block.array() - mean).square().mean());
        EXPECT_LT(std::abs(mean), 1e-10);
        EXPECT_NEAR(sd, 1.0, 1e-6);
        EXPECT_FALSE(out.stats.zero_variance[c]);
    }
    EXPECT_TRUE(out.stats.zero_variance[2]);
    EXPECT_TRUE((out.train.features.middleCols(4, 2).array() == 0.0).all());
    // Test set transformed with train statistics, recomputed independently.
    const double m0 = train.features.leftCols(2).mean();
    const double s0 = std::sqrt((train.features.leftCols(2).array() - m0).square().mean());
    EXPECT_NEAR(out.test.features(3, 1), (test.features(3, 1) - m0) / s0, 1e-12);
    EXPECT_GT(std::abs(out.test.features.leftCols(2).mean()), 1e-6);
}

TEST(DatasetCsv, LosslessRoundTrip) {
    TempDir dir("csv");
    SyntheticConfig cfg;
    cfg.n = 64;
    cfg.d = 5;
    cfg.low_noise_width = 0.3;
    const auto ds = sample_lowvar_highvar(cfg);
    write_dataset_csv(ds, dir.file("ds.csv"));
    const auto back = read_dataset_csv(dir.file("ds.csv"));
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.k, 2);
}

TEST(CifarStandin, ShapeAndDeterminism) {
    StandinConfig cfg;
    cfg.per_class = 3;
    cfg.seed = 4;
    const auto a = make_cifar_standin(cfg);
    const auto b = make_cifar_standin(cfg);
    EXPECT_EQ(a.n(), 30u);
    EXPECT_EQ(a.image_size(), 3072u);
    EXPECT_EQ(a.pixels, b.pixels);
}
